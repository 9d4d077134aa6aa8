"""Ranking metrics: per-class average precision, mAP, and pooled GAP@k.

GAP pools each video's top-k (class, score) pairs into one global list,
sorts by score, and computes average precision over that list with the
total number of positives (capped at k per video) as the denominator.
Ties break deterministically by original position (stable sort).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class PredictionSet:
    """Per-video per-class scores aligned with a list of video ids."""

    ids: list[str]
    scores: np.ndarray  # [N, V], values in [0, 1]

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2:
            raise ValueError("scores must be [videos, classes]")
        if len(self.ids) != self.scores.shape[0]:
            raise ValueError("ids/scores length mismatch")

    @property
    def num_videos(self) -> int:
        return self.scores.shape[0]

    @property
    def num_classes(self) -> int:
        return self.scores.shape[1]


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """AP of one ranked list: mean of precision at each positive's rank.

    Raises if there is no positive; callers that tolerate empty classes
    must filter first.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    positives = int(labels.sum())
    if positives == 0:
        raise ValueError("average_precision undefined without positives")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order].astype(bool)
    cum_hits = np.cumsum(hits)
    ranks = np.arange(1, len(scores) + 1)
    return float((cum_hits[hits] / ranks[hits]).sum() / positives)


def per_class_average_precision(prediction: PredictionSet, labels: np.ndarray) -> np.ndarray:
    """AP per class; NaN marks classes without a single positive."""
    labels = np.asarray(labels)
    if labels.shape != prediction.scores.shape:
        raise ValueError("labels must align with prediction scores")
    V = prediction.num_classes
    aps = np.full(V, np.nan)
    pos = labels.sum(axis=0)
    for c in range(V):
        if pos[c] > 0:
            aps[c] = average_precision(prediction.scores[:, c], labels[:, c])
    return aps


def mean_ap(prediction: PredictionSet, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """mAP over classes that have at least one positive, plus per-class APs."""
    aps = per_class_average_precision(prediction, labels)
    valid = ~np.isnan(aps)
    if not valid.any():
        return 0.0, aps
    return float(aps[valid].mean()), aps


def gap_at_k(prediction: PredictionSet, labels: np.ndarray, k: int = 20) -> float:
    """Global average precision over the pooled per-video top-k pairs."""
    if k < 1:
        raise ValueError("k must be >= 1")
    labels = np.asarray(labels)
    if labels.shape != prediction.scores.shape:
        raise ValueError("labels must align with prediction scores")
    scores = prediction.scores
    N, V = scores.shape
    kk = min(k, V)

    pooled_scores = np.empty(N * kk)
    pooled_correct = np.empty(N * kk, dtype=bool)
    for n in range(N):
        top = np.argsort(-scores[n], kind="stable")[:kk]
        pooled_scores[n * kk:(n + 1) * kk] = scores[n, top]
        pooled_correct[n * kk:(n + 1) * kk] = labels[n, top] > 0
    denom = np.minimum(labels.sum(axis=1), k).sum()
    if denom == 0:
        return 0.0

    order = np.argsort(-pooled_scores, kind="stable")
    hits = pooled_correct[order]
    cum_hits = np.cumsum(hits)
    ranks = np.arange(1, len(hits) + 1)
    return float((cum_hits[hits] / ranks[hits]).sum() / denom)


@dataclass
class EvalReport:
    """Per-class APs plus the two summary numbers and positive counts."""

    per_class_ap: np.ndarray  # NaN where a class has no positives
    map_score: float
    gap_score: float
    positives: np.ndarray

    @classmethod
    def from_predictions(cls, prediction: PredictionSet, labels: np.ndarray,
                         k: int = 20) -> "EvalReport":
        labels = np.asarray(labels)
        map_score, aps = mean_ap(prediction, labels)
        gap = gap_at_k(prediction, labels, k=k)
        return cls(per_class_ap=aps, map_score=map_score, gap_score=gap,
                   positives=labels.sum(axis=0).astype(int))

    def write(self, summary_path: str, per_class_path: str) -> None:
        with open(summary_path, "w") as fh:
            fh.write(f"gap={self.gap_score!r}\n")
            fh.write(f"map={self.map_score!r}\n")
            fh.write(f"classes={len(self.per_class_ap)}\n")
            fh.write(f"classes_with_positives={int((self.positives > 0).sum())}\n")
        with open(per_class_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class_id", "ap", "positives"])
            for c, (ap, pos) in enumerate(zip(self.per_class_ap, self.positives)):
                value = 0.0 if np.isnan(ap) else float(ap)
                writer.writerow([c, repr(value), int(pos)])


def read_per_class_ap_csv(path: str) -> np.ndarray:
    """APs from an eval CSV; zero-positive classes come back as 0.0."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["class_id", "ap", "positives"]:
            raise ValueError(f"{path}: not a per-class AP csv")
        rows = [(int(r[0]), float(r[1])) for r in reader]
    aps = np.zeros(max(r[0] for r in rows) + 1) if rows else np.zeros(0)
    for cid, ap in rows:
        aps[cid] = ap
    return aps
