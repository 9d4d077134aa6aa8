"""Activations and multi-label losses, all numerically stable forms."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, _node, as_tensor


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x) -> Tensor:
    """Elementwise logistic; strictly inside (0, 1) for finite input."""
    x = as_tensor(x)
    out = _stable_sigmoid(x.data)
    return _node(out, [(x, lambda g: g * out * (1.0 - out))])


def softmax(x, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along ``axis``; rows sum to 1."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return out * (g - inner)

    return _node(out, [(x, vjp)])


def _softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + exp(x)) without overflow
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid_cross_entropy(logits, labels) -> Tensor:
    """Mean binary cross-entropy between logits and a multi-hot target.

    Computed in the log-sum-exp form ``max(x,0) - x*y + log(1+exp(-|x|))``
    and averaged over every entry of the matrix.
    """
    logits = as_tensor(logits)
    y = np.asarray(as_tensor(labels).data, dtype=logits.dtype)
    if logits.shape != y.shape:
        raise ValueError(f"logits shape {logits.shape} != labels shape {y.shape}")
    x = logits.data
    per_entry = _softplus(x) - x * y
    count = x.size
    out = np.asarray(per_entry.sum() / count)

    def vjp(g):
        return g * (_stable_sigmoid(x) - y) / count

    return _node(out, [(logits, vjp)])


def binary_cross_entropy(probs, labels, eps: float = 1e-12) -> Tensor:
    """Mean binary cross-entropy on probabilities already in (0, 1).

    For heads whose output is a convex combination of sigmoids there is
    no logit to recover, so the loss clips at ``eps`` instead.
    """
    probs = as_tensor(probs)
    y = np.asarray(as_tensor(labels).data, dtype=probs.dtype)
    if probs.shape != y.shape:
        raise ValueError(f"probs shape {probs.shape} != labels shape {y.shape}")
    p = np.clip(probs.data, eps, 1.0 - eps)
    count = p.size
    out = np.asarray(-(y * np.log(p) + (1.0 - y) * np.log1p(-p)).sum() / count)

    def vjp(g):
        inside = (probs.data > eps) & (probs.data < 1.0 - eps)
        return g * inside * (p - y) / (p * (1.0 - p)) / count

    return _node(out, [(probs, vjp)])


def smoothed_softmax_loss(logits, labels) -> Tensor:
    """Softmax cross-entropy against labels renormalized to sum 1 per row.

    Multi-hot rows are smoothed into a distribution (each positive gets
    1/num_positives); a row without any positive label is an error.
    """
    logits = as_tensor(logits)
    y = np.asarray(as_tensor(labels).data, dtype=logits.dtype)
    if logits.shape != y.shape:
        raise ValueError(f"logits shape {logits.shape} != labels shape {y.shape}")
    if logits.ndim != 2:
        raise ValueError("expected [batch, classes] logits")
    row_sums = y.sum(axis=1)
    if np.any(row_sums <= 0):
        bad = int(np.flatnonzero(row_sums <= 0)[0])
        raise ValueError(f"label row {bad} has no positive entry")
    target = y / row_sums[:, None]

    x = logits.data
    m = x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(x - m).sum(axis=1, keepdims=True)) + m
    n = x.shape[0]
    out = np.asarray(((lse[:, 0] - (target * x).sum(axis=1)).sum()) / n)

    def vjp(g):
        soft = np.exp(x - lse)
        return g * (soft - target) / n

    return _node(out, [(logits, vjp)])
