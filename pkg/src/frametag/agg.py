"""Order-free aggregation: multi-hop attention pooling and learnable VLAD.

Both take per-frame features and produce a fixed-size vector without caring
about frame order.  Everything here accepts a single sequence [T, D] or a
batch [B, T, D], with an optional 0/1 validity mask: padded frames never
enter a softmax normalization or an aggregation sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from . import tensor as T
from .tensor import Tensor, as_tensor


def _weight(rng, shape, scale=None):
    t = as_tensor(rng.normal(0.0, scale or 1.0 / np.sqrt(shape[-1]), size=shape))
    t.requires_grad = True
    return t


def _swap_last(a: Tensor) -> Tensor:
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return T.transpose(a, tuple(axes))


def _masked_softmax(logits: Tensor, mask, axis: int) -> Tensor:
    """Softmax that ignores masked entries entirely.

    Invalid logits are replaced by the row maximum before exponentiation so
    junk values in pad positions can neither overflow nor leak probability.
    """
    if mask is None:
        return F.softmax(logits, axis=axis)
    mask = np.asarray(mask, dtype=np.float64)
    guarded = np.where(mask > 0, logits.data, -np.inf)
    shift = np.max(guarded, axis=axis, keepdims=True)
    safe = T.add(T.mul(logits, mask), shift * (1.0 - mask))
    e = T.mul(T.exp(T.add(safe, -shift)), mask)
    return T.mul(e, T.power(T.tsum(e, axis=axis, keepdims=True), -1.0))


# -- attention pooling ---------------------------------------------------------


@dataclass
class AttentionParams:
    """Multi-hop attention: w_i projects frames, w_a scores them per hop."""

    w_i: Tensor   # [P, D]
    w_a: Tensor   # [H, P]

    def __post_init__(self):
        if self.w_a.shape[1] != self.w_i.shape[0]:
            raise ValueError("w_a hop rows must match w_i projection rows")

    @property
    def num_hops(self) -> int:
        return self.w_a.shape[0]

    @property
    def proj_size(self) -> int:
        return self.w_i.shape[0]

    @classmethod
    def init(cls, input_dim, proj_size, num_hops, rng):
        if num_hops < 1 or proj_size < 1:
            raise ValueError("num_hops and proj_size must be >= 1")
        return cls(_weight(rng, (proj_size, input_dim)),
                   _weight(rng, (num_hops, proj_size)))

    def parameters(self) -> dict:
        return {"w_i": self.w_i, "w_a": self.w_a}


def attention_pool(x, p: AttentionParams, mask=None) -> Tensor:
    """flatten(softmax(w_a tanh(w_i X^T)) X): per hop, a convex combination
    of the frames; hops concatenated."""
    x = as_tensor(x)
    if x.ndim not in (2, 3):
        raise ValueError("attention_pool expects [T, D] or [B, T, D]")
    if x.shape[-2] < 1:
        raise ValueError("empty input")
    proj = T.tanh(T.matmul(x, T.transpose(p.w_i)))       # [., T, P]
    logits = _swap_last(T.matmul(proj, T.transpose(p.w_a)))  # [., H, T]
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)[..., None, :]  # broadcast over hops
    weights = _masked_softmax(logits, mask, axis=-1)
    pooled = T.matmul(weights, x)                        # [., H, D]
    h, d = p.num_hops, x.shape[-1]
    if x.ndim == 2:
        return T.reshape(pooled, (h * d,))
    return T.reshape(pooled, (x.shape[0], h * d))


# -- VLAD ----------------------------------------------------------------------


@dataclass
class VladParams:
    """Learnable VLAD: centers plus one of three assignment kernels.

    kernel "alpha" uses exp(-alpha ||x - C||^2); "decoupled" uses a plain
    per-center linear softmax; "attention" scores each (frame, center) pair
    with w_a . tanh(W_c C + W_i x + b).  scheme picks the softmax axis:
    "centers" normalizes each frame's row, "inputs" each center's column.
    """

    centers: Tensor                 # [K, D]
    kernel: str = "alpha"
    scheme: str = "centers"
    alpha: float = 1.0
    lam: float = 1e-3
    w: Tensor | None = None         # [K, D] decoupled
    b: Tensor | None = None         # [K]
    att_wc: Tensor | None = None    # [P, D]
    att_wi: Tensor | None = None    # [P, D]
    att_b: Tensor | None = None     # [P]
    att_wa: Tensor | None = None    # [P]

    def __post_init__(self):
        if self.kernel not in ("alpha", "decoupled", "attention"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.scheme not in ("centers", "inputs"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.kernel == "alpha" and self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.kernel == "decoupled" and (self.w is None or self.b is None):
            raise ValueError("decoupled kernel needs w and b")
        if self.kernel == "attention" and any(
                t is None for t in (self.att_wc, self.att_wi, self.att_b, self.att_wa)):
            raise ValueError("attention kernel needs att_wc, att_wi, att_b, att_wa")

    @property
    def num_centers(self) -> int:
        return self.centers.shape[0]

    @classmethod
    def init(cls, input_dim, num_centers, kernel, rng, scheme="centers",
             alpha=1.0, lam=1e-3, proj_size=None, feature_std=1.0):
        if num_centers < 1:
            raise ValueError("num_centers must be >= 1")
        centers = as_tensor(feature_std * rng.normal(size=(num_centers, input_dim)))
        centers.requires_grad = True
        kw = {}
        if kernel == "decoupled":
            kw["w"] = _weight(rng, (num_centers, input_dim))
            kw["b"] = as_tensor(np.zeros(num_centers))
            kw["b"].requires_grad = True
        elif kernel == "attention":
            p = proj_size or input_dim
            kw["att_wc"] = _weight(rng, (p, input_dim))
            kw["att_wi"] = _weight(rng, (p, input_dim))
            kw["att_b"] = as_tensor(np.zeros(p))
            kw["att_b"].requires_grad = True
            kw["att_wa"] = _weight(rng, (p,))
        return cls(centers, kernel, scheme, alpha, lam, **kw)

    def parameters(self) -> dict:
        out = {"centers": self.centers}
        for name in ("w", "b", "att_wc", "att_wi", "att_b", "att_wa"):
            t = getattr(self, name)
            if t is not None:
                out[name] = t
        return out


def _squared_distances(x: Tensor, c: Tensor) -> Tensor:
    """[., T, K] matrix of ||x_i - C_j||^2 via the expansion identity."""
    xx = T.tsum(T.mul(x, x), axis=-1, keepdims=True)         # [., T, 1]
    cc = T.tsum(T.mul(c, c), axis=-1)                        # [K]
    cross = T.matmul(x, T.transpose(c))                      # [., T, K]
    return T.add(T.add(xx, T.mul(cross, -2.0)), cc)


def _normalize_assignment(logits: Tensor, mask, scheme: str) -> Tensor:
    if scheme == "centers":
        a = _masked_softmax(logits, None, axis=-1)
        if mask is not None:
            a = T.mul(a, np.asarray(mask, dtype=np.float64)[..., None])
        return a
    # over inputs: normalize each center's column across valid frames
    col_mask = None if mask is None else np.asarray(mask, dtype=np.float64)[..., None]
    return _masked_softmax(logits, col_mask, axis=-2)


def assign_alpha(x, c, alpha, mask=None, scheme="centers") -> Tensor:
    """Soft assignment exp(-alpha d^2), normalized per the scheme."""
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    x, c = as_tensor(x), as_tensor(c)
    return _normalize_assignment(T.mul(_squared_distances(x, c), -alpha), mask, scheme)


def assign_decoupled(x, w, b, mask=None, scheme="centers") -> Tensor:
    """The linear decoupling of the alpha kernel: softmax of w_j . x + b_j."""
    x = as_tensor(x)
    logits = T.add(T.matmul(x, T.transpose(as_tensor(w))), as_tensor(b))
    return _normalize_assignment(logits, mask, scheme)


def assign_attention(x, p: VladParams, mask=None) -> Tensor:
    """Attention-style kernel: w_a . tanh(W_c C_j + W_i x_i + b)."""
    if p.kernel != "attention":
        raise ValueError("params do not carry an attention kernel")
    x = as_tensor(x)
    cx = T.matmul(p.centers, T.transpose(p.att_wc))          # [K, P]
    xi = T.matmul(x, T.transpose(p.att_wi))                  # [., T, P]
    pre = T.add(T.add(T.reshape(xi, xi.shape[:-1] + (1, xi.shape[-1])), cx), p.att_b)
    logits = T.matmul(T.tanh(pre), p.att_wa)                 # [., T, K]
    return _normalize_assignment(logits, mask, p.scheme)


def assign(x, p: VladParams, mask=None) -> Tensor:
    if p.kernel == "alpha":
        return assign_alpha(x, p.centers, p.alpha, mask, p.scheme)
    if p.kernel == "decoupled":
        return assign_decoupled(x, p.w, p.b, mask, p.scheme)
    return assign_attention(x, p, mask)


def vlad_aggregate(x, c, a) -> Tensor:
    """O(j) = sum_i A[i,j] (x_i - C_j), concatenated over centers.

    Returns the raw descriptor ([K*D] or [B, K*D]); normalization is a
    separate step so a zero residual stays an exact zero.
    """
    x, c, a = as_tensor(x), as_tensor(c), as_tensor(a)
    if x.shape[-2] != a.shape[-2] or c.shape[0] != a.shape[-1]:
        raise ValueError(f"shape mismatch: x {x.shape}, c {c.shape}, a {a.shape}")
    weighted = T.matmul(_swap_last(a), x)                    # [., K, D]
    totals = T.reshape(T.tsum(a, axis=-2), a.shape[:-2] + (a.shape[-1], 1))
    desc = T.add(weighted, T.mul(T.mul(totals, c), -1.0))
    k, d = c.shape
    if x.ndim == 2:
        return T.reshape(desc, (k * d,))
    return T.reshape(desc, (x.shape[0], k * d))


def normalize_descriptor(desc, num_centers: int, kind: str = "intra+global") -> Tensor:
    """Intra-normalize each center block, then the whole vector.

    kind: "intra+global" (default), "global", or "none".  Zero blocks stay
    zero: the norm is smoothed with a tiny epsilon instead of special-cased.
    """
    if kind == "none":
        return as_tensor(desc)
    if kind not in ("intra+global", "global"):
        raise ValueError(f"unknown normalization {kind!r}")
    desc = as_tensor(desc)
    flat_shape = desc.shape
    eps = 1e-12
    if kind == "intra+global":
        k = num_centers
        d = desc.shape[-1] // k
        blocks = T.reshape(desc, desc.shape[:-1] + (k, d))
        norms = T.power(T.add(T.tsum(T.mul(blocks, blocks), axis=-1, keepdims=True), eps), -0.5)
        desc = T.reshape(T.mul(blocks, norms), flat_shape)
    total = T.power(T.add(T.tsum(T.mul(desc, desc), axis=-1, keepdims=True), eps), -0.5)
    return T.mul(desc, total)


def vlad_cluster_loss(x, c, a, mask=None) -> Tensor:
    """sum_ij A[i,j] ||x_i - C_j||^2, averaged over the batch if present."""
    x, c, a = as_tensor(x), as_tensor(c), as_tensor(a)
    d2 = _squared_distances(x, c)
    if mask is not None:
        a = T.mul(a, np.asarray(mask, dtype=np.float64)[..., None])
    weighted = T.mul(a, d2)
    if x.ndim == 2:
        return T.tsum(weighted)
    return T.tmean(T.tsum(T.reshape(weighted, (x.shape[0], -1)), axis=-1))
