"""Dataset format, synthetic data, and dataset-analysis procedures.

Datasets are line-oriented text files: a manifest object on line 1, then one
self-describing record per line with id, labels, and frames as nested decimal
arrays.  Text keeps the files diff-able and lets any language reimplement the
reader in a few lines.  Floats are written with repr precision so a write
followed by a read returns bit-identical arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .metrics import PredictionSet


@dataclass
class FrameRecord:
    """One variable-length example: id, label set, frames [T, D]."""

    id: str
    labels: list
    frames: np.ndarray

    def __post_init__(self):
        self.labels = [int(c) for c in self.labels]
        if not self.labels:
            raise ValueError(f"record {self.id!r} has no labels")
        if any(b <= a for a, b in zip(self.labels, self.labels[1:])):
            raise ValueError(f"record {self.id!r} labels must be strictly increasing")
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ValueError(f"record {self.id!r} frames must be [T>=1, D]")

    @property
    def true_length(self) -> int:
        return self.frames.shape[0]


@dataclass
class DatasetManifest:
    num_classes: int
    feature_dim: int
    max_len: int = 300
    num_records: int = 0
    split: str = "train"
    scale_mean: np.ndarray | None = None
    scale_std: np.ndarray | None = None

    def to_json(self) -> dict:
        d = {"kind": "manifest", "num_classes": self.num_classes,
             "feature_dim": self.feature_dim, "max_len": self.max_len,
             "num_records": self.num_records, "split": self.split,
             "scale_mean": None if self.scale_mean is None else self.scale_mean.tolist(),
             "scale_std": None if self.scale_std is None else self.scale_std.tolist()}
        return d

    @classmethod
    def from_json(cls, d: dict) -> "DatasetManifest":
        if d.get("kind") != "manifest":
            raise ValueError("line 1 must be a manifest object")
        mean = d.get("scale_mean")
        std = d.get("scale_std")
        return cls(int(d["num_classes"]), int(d["feature_dim"]),
                   int(d.get("max_len", 300)), int(d.get("num_records", 0)),
                   str(d.get("split", "train")),
                   None if mean is None else np.asarray(mean, dtype=np.float64),
                   None if std is None else np.asarray(std, dtype=np.float64))


@dataclass
class Dataset:
    manifest: DatasetManifest
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)


def compute_scaling(records) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean/std over all frames of all records."""
    stacked = np.concatenate([r.frames for r in records], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    return mean, np.maximum(std, 1e-8)


def apply_scaling(frames: np.ndarray, manifest: DatasetManifest) -> np.ndarray:
    """Standardize frames with the manifest's train-split statistics."""
    if manifest.scale_mean is None or manifest.scale_std is None:
        return frames
    return (frames - manifest.scale_mean) / manifest.scale_std


def write_records(path, dataset: Dataset) -> None:
    manifest = replace(dataset.manifest, num_records=len(dataset.records))
    with open(path, "w") as fh:
        fh.write(json.dumps(manifest.to_json()) + "\n")
        for rec in dataset.records:
            if rec.frames.shape[1] != manifest.feature_dim:
                raise ValueError(f"record {rec.id!r} feature dim "
                                 f"{rec.frames.shape[1]} != manifest {manifest.feature_dim}")
            if rec.labels[-1] >= manifest.num_classes or rec.labels[0] < 0:
                raise ValueError(f"record {rec.id!r} labels outside [0, {manifest.num_classes})")
            fh.write(json.dumps({"id": rec.id, "labels": rec.labels,
                                 "frames": rec.frames.tolist()}) + "\n")


def iter_records(path, scaled: bool = False):
    """Stream (manifest, record) pairs; the manifest is yielded first as
    (manifest, None).  Malformed lines are reported with their line number."""
    with open(path) as fh:
        manifest = None
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed line ({exc.msg})") from exc
            if lineno == 1:
                manifest = DatasetManifest.from_json(obj)
                yield manifest, None
                continue
            try:
                rec = FrameRecord(obj["id"], obj["labels"], obj["frames"])
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad record ({exc})") from exc
            if rec.labels[0] < 0 or rec.labels[-1] >= manifest.num_classes:
                raise ValueError(f"{path}:{lineno}: labels outside "
                                 f"[0, {manifest.num_classes})")
            if rec.frames.shape[1] != manifest.feature_dim:
                raise ValueError(f"{path}:{lineno}: feature dim "
                                 f"{rec.frames.shape[1]} != manifest {manifest.feature_dim}")
            if scaled:
                rec = FrameRecord(rec.id, rec.labels, apply_scaling(rec.frames, manifest))
            yield manifest, rec


def read_records(path, scaled: bool = False) -> Dataset:
    """Read a whole dataset file.  scaled=True standardizes frames with the
    manifest statistics (model input path); the default returns raw frames so
    read is the exact inverse of write."""
    manifest = None
    records = []
    for m, rec in iter_records(path, scaled=scaled):
        manifest = m
        if rec is not None:
            records.append(rec)
    if manifest is None:
        raise ValueError(f"{path}: empty file, expected a manifest line")
    return Dataset(manifest, records)


# -- shaping ------------------------------------------------------------------


def pad_or_truncate(rec: FrameRecord, max_len: int = 300) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-length frames plus a 0/1 mask of the true length.

    Short records get zero rows appended; long ones keep their head.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    t, d = rec.frames.shape
    keep = min(t, max_len)
    frames = np.zeros((max_len, d))
    frames[:keep] = rec.frames[:keep]
    mask = np.zeros(max_len)
    mask[:keep] = 1.0
    return frames, mask


def subsample(rec: FrameRecord, rate: int) -> FrameRecord:
    """Keep frames 0, rate, 2*rate, ...  New length is ceil(T / rate)."""
    if rate < 1:
        raise ValueError("rate must be >= 1")
    return FrameRecord(rec.id, rec.labels, rec.frames[::rate])


def batchify(records, num_classes: int, max_len: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack records into (frames [B,L,D], mask [B,L], labels [B,V])."""
    frames, masks = zip(*(pad_or_truncate(r, max_len) for r in records))
    labels = np.zeros((len(records), num_classes))
    for i, rec in enumerate(records):
        labels[i, rec.labels] = 1.0
    return np.stack(frames), np.stack(masks), labels


# -- synthetic data -----------------------------------------------------------

LABEL_THRESHOLD = 0.5       # dot(prototype, mean frame) above this marks the class
TEMPORAL_AMPLITUDE = 1.0    # half-sequence square wave height


def _power_law_marginals(num_classes, target_mean=2.0, exponent=2.0, cap=0.9):
    """Per-class positive rates p_c ~ (c+1)^-exponent scaled toward an
    expected target_mean labels per record, then capped.  Capping trims the
    head rather than redistributing to the tail, which keeps the most
    frequent class holding most of the positive mass."""
    weights = (np.arange(num_classes) + 1.0) ** -exponent
    return np.minimum(target_mean * weights / weights.sum(), cap)


def synth_prototypes(num_classes, feature_dim, seed) -> np.ndarray:
    """The unit class directions a seeded generator plants.

    Orthonormal (QR of a Gaussian matrix) whenever the vocabulary fits the
    feature dimension; plain normalized Gaussian rows otherwise, accepting
    the cross-talk that V > D makes unavoidable.
    """
    proto_seed = np.random.SeedSequence(seed).spawn(4)[0]
    rng = np.random.default_rng(proto_seed)
    g = rng.normal(size=(num_classes, feature_dim))
    if num_classes <= feature_dim:
        q, _ = np.linalg.qr(g.T)
        return q.T[:num_classes]
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def synth_generate(num_classes, num_records, t_range, feature_dim,
                   seed=0, difficulty=0.0) -> dict:
    """Deterministic synthetic train/val/test datasets.

    Each class owns a unit prototype direction.  A record's frames are the sum
    of its planted static prototypes plus noise; its static labels are then
    re-derived from the realized mean frame, so at difficulty 0 the label set
    is exactly a linear threshold function of the mean frame.  A difficulty-
    controlled fraction of classes is temporal instead: their prototype rides
    a +A/-A half-sequence square wave with an exactly zero temporal mean, so
    only order-aware models can detect them.
    """
    if num_classes < 1 or num_records < 1 or feature_dim < 1:
        raise ValueError("num_classes, num_records, feature_dim must be >= 1")
    t_lo, t_hi = int(t_range[0]), int(t_range[1])
    if not (1 <= t_lo <= t_hi):
        raise ValueError("t_range must satisfy 1 <= lo <= hi")
    if not (0.0 <= difficulty <= 1.0):
        raise ValueError("difficulty must be in [0, 1]")

    _, train_seed, val_seed, test_seed = np.random.SeedSequence(seed).spawn(4)
    protos = synth_prototypes(num_classes, feature_dim, seed)

    marginals = _power_law_marginals(num_classes)
    num_temporal = int(round(0.5 * difficulty * num_classes))
    temporal = np.zeros(num_classes, dtype=bool)
    # interleave temporal classes through the frequent half of the vocabulary
    # so they occur often enough to be learnable
    temporal[1:2 * num_temporal:2] = True
    static = ~temporal
    # Noise growth with difficulty is deliberately gentle.  Mean-pooling
    # averages per-frame noise down by 1/sqrt(T) while a recurrent detector
    # has to integrate it frame by frame, so aggressive noise would bury the
    # order signal and break the promise that temporal classes reward
    # order-aware models.
    noise_sigma = 0.05 + 0.2 * difficulty

    def make_split(split, count, seq):
        rng = np.random.default_rng(seq)
        records = []
        for i in range(count):
            t = int(rng.integers(t_lo, t_hi + 1))
            planted = rng.random(num_classes) < marginals
            if not (planted & static).any():
                # every record carries at least one static prototype
                probs = marginals * static
                planted[rng.choice(num_classes, p=probs / probs.sum())] = True
            frames = protos[planted & static].sum(axis=0) + np.zeros((t, feature_dim))
            frames = frames + noise_sigma * rng.normal(size=(t, feature_dim))
            half = t // 2
            wave = np.zeros(t)
            wave[:half] = TEMPORAL_AMPLITUDE
            wave[half:2 * half] = -TEMPORAL_AMPLITUDE
            for c in np.flatnonzero(planted & temporal):
                frames = frames + wave[:, None] * protos[c]
            mean_frame = frames.mean(axis=0)
            derived = set(np.flatnonzero(static & (protos @ mean_frame >= LABEL_THRESHOLD)))
            labels = sorted(derived | set(np.flatnonzero(planted & temporal)))
            if not labels:
                # unreachable in practice; keep records valid regardless
                labels = [int(np.argmax(protos @ mean_frame))]
            records.append(FrameRecord(f"{split}{i:06d}", labels, frames))
        return records

    train = make_split("tr", num_records, train_seed)
    val = make_split("va", max(1, num_records // 5), val_seed)
    test = make_split("te", max(1, num_records // 5), test_seed)
    mean, std = compute_scaling(train)
    out = {}
    for split, records in (("train", train), ("val", val), ("test", test)):
        manifest = DatasetManifest(num_classes, feature_dim, max_len=t_hi,
                                   num_records=len(records), split=split,
                                   scale_mean=mean, scale_std=std)
        out[split] = Dataset(manifest, records)
    return out


# -- dataset analysis ---------------------------------------------------------


def label_distribution(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-class positive counts and the cumulative coverage curve.

    coverage[c] is the fraction of (video, label) pairs whose label index is
    below c; coverage has length V+1 and is non-decreasing from 0 to 1.
    """
    v = dataset.manifest.num_classes
    counts = np.zeros(v)
    for rec in dataset.records:
        counts[rec.labels] += 1
    total = counts.sum()
    coverage = np.concatenate([[0.0], np.cumsum(counts)]) / max(total, 1.0)
    return counts, coverage


def cooccurrence_matrix(dataset: Dataset, top: int = 50) -> np.ndarray:
    """Co-occurrence counts over the first `top` label indices.

    Entry (a, b) counts videos holding both labels; the diagonal holds plain
    positive counts.  Label indices order classes by frequency here, as in
    the source vocabulary, so "first" means "most frequent".
    """
    v = dataset.manifest.num_classes
    if top > v:
        raise ValueError(f"top={top} exceeds vocabulary size {v}")
    mat = np.zeros((top, top))
    for rec in dataset.records:
        inside = [c for c in rec.labels if c < top]
        for a in inside:
            for b in inside:
                mat[a, b] += 1
    return mat


# -- prediction files ---------------------------------------------------------

PREDICTION_HEADER = "VideoId,LabelConfidencePairs"


def write_predictions(path, predictions: PredictionSet, top_k: int = 20) -> None:
    """Challenge-submission CSV: per video, top-k `label score` pairs sorted
    by descending score (ties break on the lower label index)."""
    with open(path, "w") as fh:
        fh.write(PREDICTION_HEADER + "\n")
        for i, vid in enumerate(predictions.ids):
            row = predictions.scores[i]
            k = min(top_k, row.shape[0])
            order = np.argsort(-row, kind="stable")[:k]
            pairs = " ".join(f"{c} {float(row[c])!r}" for c in order)
            fh.write(f"{vid},{pairs}\n")


def read_predictions(path, num_classes: int) -> PredictionSet:
    """Read a prediction CSV back into dense scores; absent pairs score 0."""
    ids, rows = [], []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != PREDICTION_HEADER:
            raise ValueError(f"{path}:1: expected header {PREDICTION_HEADER!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                vid, pairs = line.split(",", 1)
                tokens = pairs.split()
                if len(tokens) % 2:
                    raise ValueError("odd number of pair tokens")
                row = np.zeros(num_classes)
                for c, s in zip(tokens[::2], tokens[1::2]):
                    row[int(c)] = float(s)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad prediction line ({exc})") from exc
            ids.append(vid)
            rows.append(row)
    return PredictionSet(ids, np.array(rows).reshape(len(ids), num_classes))


# -- checkpoints --------------------------------------------------------------


def save_checkpoint(path, arrays: dict, meta: dict | None = None) -> None:
    """JSON checkpoint: named float arrays as nested lists plus a meta dict."""
    payload = {"meta": meta or {},
               "arrays": {k: np.asarray(v, dtype=np.float64).tolist()
                          for k, v in arrays.items()}}
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> tuple[dict, dict]:
    with open(path) as fh:
        payload = json.load(fh)
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in payload["arrays"].items()}
    return arrays, payload.get("meta", {})
