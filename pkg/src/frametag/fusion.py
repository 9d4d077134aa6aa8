"""Per-class ensemble fusion weighted by validation average precision.

Each class gets its own mixing weights across the M models: a model that
ranks a class well gets a larger say for that class.  Weights come from
normalizing the per-class AP column under a selectable lp norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import PredictionSet

_NORM_P = {"l1": 1.0, "l2": 2.0, "l3": 3.0}


@dataclass
class FusionWeights:
    matrix: np.ndarray      # [M, V], non-negative
    norm: str

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ValueError("weights must be [models, classes]")
        if np.any(self.matrix < 0):
            raise ValueError("fusion weights must be non-negative")

    @property
    def num_models(self) -> int:
        return self.matrix.shape[0]


def per_class_weights(aps, norm="l1", p=None) -> FusionWeights:
    """Normalize each class's AP column into mixing weights.

    norm: "avg" ignores the APs (uniform 1/M); "l1"/"l2"/"l3" divide by the
    corresponding norm; "lp" uses the explicit exponent p.  A class whose
    APs are all zero falls back to uniform weights.
    """
    aps = np.asarray(aps, dtype=np.float64)
    if aps.ndim != 2:
        raise ValueError("aps must be [models, classes]")
    if np.any(aps < 0) or np.any(aps > 1):
        raise ValueError("APs must lie in [0, 1]")
    m = aps.shape[0]
    if norm == "avg":
        return FusionWeights(np.full(aps.shape, 1.0 / m), norm)
    if norm == "lp":
        if p is None or p <= 0:
            raise ValueError("lp norm needs an exponent p > 0")
    elif norm in _NORM_P:
        p = _NORM_P[norm]
    else:
        raise ValueError(f"unknown norm {norm!r}")
    scale = (aps ** p).sum(axis=0) ** (1.0 / p)
    zero = scale == 0
    scale[zero] = 1.0
    weights = aps / scale
    weights[:, zero] = 1.0 / m
    return FusionWeights(weights, norm)


def _check_aligned(predictions) -> tuple[list[str], int]:
    if not predictions:
        raise ValueError("need at least one prediction set")
    ids = list(predictions[0].ids)
    v = predictions[0].num_classes
    for i, pred in enumerate(predictions[1:], start=1):
        if list(pred.ids) != ids:
            raise ValueError(f"prediction set {i} disagrees on video ids")
        if pred.num_classes != v:
            raise ValueError(f"prediction set {i} has {pred.num_classes} classes, "
                             f"expected {v}")
    return ids, v


def fuse(predictions, weights: FusionWeights, rescale=True) -> PredictionSet:
    """Weighted per-class sum of the model scores.

    Under l1 (and avg) the weight columns already sum to 1, so the fused
    score is a convex combination.  For p > 1 norms the columns sum to more
    than 1; by default each column is rescaled to sum 1 first, otherwise the
    raw weighted sum is clipped into [0, 1].
    """
    ids, v = _check_aligned(predictions)
    w = weights.matrix
    if w.shape[0] != len(predictions):
        raise ValueError(f"{w.shape[0]} weight rows for {len(predictions)} models")
    if w.shape[1] != v:
        raise ValueError(f"{w.shape[1]} weight columns for {v} classes")
    if rescale and weights.norm not in ("l1", "avg"):
        totals = w.sum(axis=0, keepdims=True)
        w = np.where(totals > 0, w / np.where(totals > 0, totals, 1.0), 1.0 / w.shape[0])
    stacked = np.stack([p.scores for p in predictions])      # [M, N, V]
    fused = (w[:, None, :] * stacked).sum(axis=0)
    if not (rescale or weights.norm in ("l1", "avg")):
        fused = np.clip(fused, 0.0, 1.0)
    return PredictionSet(ids, fused)


def average_fuse(predictions) -> PredictionSet:
    """Uniform 1/M fusion; the plain ensemble mean."""
    _, v = _check_aligned(predictions)
    uniform = np.full((len(predictions), v), 1.0 / len(predictions))
    return fuse(predictions, FusionWeights(uniform, "avg"))
