"""Mixture-of-experts classification heads.

The head turns a fixed-size representation into per-class probabilities.
Each class owns k experts (linear logits squashed by a sigmoid) and a k-way
softmax gate over them, so the score is a convex combination of expert
opinions.  The parallel variant splits the vocabulary into disjoint groups,
trains an independent head per group, and scatters the group predictions
back into a full score matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functional as F
from . import tensor as T
from .tensor import Tensor, as_tensor


@dataclass
class MoeParams:
    """Parameters of one mixture-of-experts head.

    gate_w/gate_b produce k gate logits per class, expert_w/expert_b produce
    k expert logits per class; both map from the same D-dim input.  Arrays
    are stored flat as [D, V*k] / [V*k] and reshaped to [.., V, k] on use.
    """

    num_mixtures: int
    num_classes: int
    gate_w: Tensor
    gate_b: Tensor
    expert_w: Tensor
    expert_b: Tensor

    def __post_init__(self):
        if self.num_mixtures < 1:
            raise ValueError("num_mixtures must be >= 1")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        wide = self.num_classes * self.num_mixtures
        for name in ("gate_w", "gate_b", "expert_w", "expert_b"):
            t = getattr(self, name)
            if not isinstance(t, Tensor):
                t = as_tensor(np.asarray(t, dtype=float))
                t.requires_grad = True
                setattr(self, name, t)
            if not np.all(np.isfinite(t.data)):
                raise ValueError(f"{name} contains non-finite values")
        if self.gate_w.shape[1] != wide or self.expert_w.shape[1] != wide:
            raise ValueError("weight widths must equal num_classes * num_mixtures")
        if self.gate_b.shape != (wide,) or self.expert_b.shape != (wide,):
            raise ValueError("bias shapes must equal (num_classes * num_mixtures,)")
        if self.gate_w.shape[0] != self.expert_w.shape[0]:
            raise ValueError("gate and expert weights must share the input dim")

    @property
    def input_dim(self) -> int:
        return self.gate_w.shape[0]

    @classmethod
    def init(cls, input_dim, num_classes, num_mixtures, rng, scale=0.01):
        wide = num_classes * num_mixtures

        def w(shape):
            t = as_tensor(rng.normal(0.0, scale, size=shape))
            t.requires_grad = True
            return t

        def b(shape):
            t = as_tensor(np.zeros(shape))
            t.requires_grad = True
            return t

        return cls(num_mixtures, num_classes,
                   w((input_dim, wide)), b((wide,)),
                   w((input_dim, wide)), b((wide,)))

    def parameters(self) -> dict[str, Tensor]:
        return {"gate_w": self.gate_w, "gate_b": self.gate_b,
                "expert_w": self.expert_w, "expert_b": self.expert_b}


def moe_forward(x, p: MoeParams) -> Tensor:
    """Score [N, V] in (0, 1): per class, gate-weighted mean of expert sigmoids."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ValueError(f"expected [N, D] input, got shape {x.shape}")
    if x.shape[1] != p.input_dim:
        raise ValueError(f"input dim {x.shape[1]} != parameter dim {p.input_dim}")
    n = x.shape[0]
    gate_logits = T.reshape(T.add(T.matmul(x, p.gate_w), p.gate_b),
                            (n, p.num_classes, p.num_mixtures))
    expert_logits = T.reshape(T.add(T.matmul(x, p.expert_w), p.expert_b),
                              (n, p.num_classes, p.num_mixtures))
    gates = F.softmax(gate_logits, axis=-1)
    experts = F.sigmoid(expert_logits)
    return T.tsum(T.mul(gates, experts), axis=-1)


@dataclass
class VocabularyPartition:
    """Disjoint label groups covering [0, V)."""

    num_classes: int
    groups: list = field(default_factory=list)
    scheme: str = "ordered"

    def __post_init__(self):
        self.groups = [np.asarray(g, dtype=int) for g in self.groups]
        seen = np.concatenate(self.groups) if self.groups else np.array([], dtype=int)
        if len(seen) != self.num_classes or len(np.unique(seen)) != len(seen):
            raise ValueError("groups must be pairwise disjoint")
        if len(seen) and (seen.min() != 0 or seen.max() != self.num_classes - 1):
            raise ValueError("groups must cover exactly [0, V)")

    def __len__(self):
        return len(self.groups)


def partition_vocabulary(num_classes, width, scheme="ordered", seed=0) -> VocabularyPartition:
    """Split [0, V) into groups of at most `width` labels.

    ordered: contiguous ranges [0,width), [width,2*width), ...
    random:  a seeded permutation of the labels chunked into groups
    """
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    if width < 1:
        raise ValueError("width must be >= 1")
    if scheme == "ordered":
        order = np.arange(num_classes)
    elif scheme == "random":
        order = np.random.default_rng(seed).permutation(num_classes)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    groups = [order[i:i + width] for i in range(0, num_classes, width)]
    return VocabularyPartition(num_classes, groups, scheme)


def pmoe_predict(x, partition: VocabularyPartition, params: list[MoeParams]) -> np.ndarray:
    """Predict with one independent head per label group and scatter back."""
    if len(params) != len(partition):
        raise ValueError(f"{len(partition)} groups but {len(params)} parameter sets")
    x = as_tensor(x)
    scores = np.zeros((x.shape[0], partition.num_classes))
    with T.no_grad():
        for group, p in zip(partition.groups, params):
            if p.num_classes != len(group):
                raise ValueError("group size does not match head num_classes")
            scores[:, group] = moe_forward(x, p).data
    return scores


def blend_overlapping(models: list[tuple[tuple[int, int], np.ndarray]], num_classes=None) -> np.ndarray:
    """Average predictions from models that each cover a label range.

    Each entry is ((start, stop), scores[N, stop-start]).  A class covered by
    several models gets the arithmetic mean of their scores.
    """
    if not models:
        raise ValueError("need at least one model")
    if num_classes is None:
        num_classes = max(stop for (_, stop), _ in models)
    n = models[0][1].shape[0]
    total = np.zeros((n, num_classes))
    count = np.zeros(num_classes)
    for (start, stop), scores in models:
        scores = np.asarray(scores, dtype=float)
        if not (0 <= start < stop <= num_classes):
            raise ValueError(f"bad label range ({start}, {stop})")
        if scores.shape != (n, stop - start):
            raise ValueError("scores shape does not match the label range")
        total[:, start:stop] += scores
        count[start:stop] += 1
    if np.any(count == 0):
        missing = int(np.argmin(count))
        raise ValueError(f"class {missing} is not covered by any model")
    return total / count
