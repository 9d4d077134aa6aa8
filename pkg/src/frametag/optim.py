"""ADAM with an exponential example-count learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    """Optimizer state; one first/second moment array per parameter.

    The effective learning rate decays continuously with the number of
    training examples seen:
    ``base_lr * decay_factor ** (examples_seen / decay_every_examples)``.
    """

    base_lr: float
    decay_factor: float = 0.9
    decay_every_examples: int = 4_000_000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    examples_seen: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay_factor must be in (0, 1]")
        if self.decay_every_examples <= 0:
            raise ValueError("decay_every_examples must be positive")

    def effective_lr(self) -> float:
        return self.base_lr * self.decay_factor ** (self.examples_seen / self.decay_every_examples)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState, examples: int = 1) -> None:
    """One ADAM update in place; advances the example counter by ``examples``.

    Raises on non-finite gradients. Zero gradients leave parameters
    bit-identical (the update term is exactly 0/eps).
    """
    lr = state.effective_lr()
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient for parameter {name!r}")
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape} for {name!r}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    state.examples_seen += examples


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
