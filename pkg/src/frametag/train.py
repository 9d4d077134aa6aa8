"""Run configuration, the training loop, and model checkpoint round-trips.

A run is declared by a JSON config: a model spec plus optimizer/data
settings.  Training is deterministic given the seed (batch order, dropout,
and initialization all derive from it, and nothing timestamped enters the
logs), so reruns produce byte-identical artifacts.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .dataio import Dataset, batchify, load_checkpoint, read_records, save_checkpoint
from .metrics import EvalReport, PredictionSet, gap_at_k, mean_ap
from .models import Model, ModelSpec, build_model
from .optim import AdamState, adam_step, zero_grads

# §-free tabulation of the published schedule: MoE-style heads start at
# 0.01, recurrent models at 5e-4, the conv net at 0.1 with a sharper decay.
DEFAULT_LR = {"moe": 0.01, "pmoe": 0.01, "attn": 0.01, "attnvlad": 0.01,
              "rnn": 5e-4, "resnet1d": 0.1}
DEFAULT_DECAY = {"resnet1d": (0.1, 10_000_000)}
FALLBACK_DECAY = (0.9, 4_000_000)


class ConfigError(ValueError):
    """Carries every config problem at once."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass
class RunConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    train_path: str = ""
    val_path: str = ""
    out_dir: str = "run"
    seed: int = 0
    epochs: int = 5
    batch_size: int = 128
    max_len: int = 300
    base_lr: float | None = None            # None: model-kind default
    decay_factor: float | None = None
    decay_every_examples: int | None = None
    eval_every_examples: int | None = None  # None: once per epoch
    scale_features: bool = False
    topk: int = 20

    def resolved_lr(self) -> float:
        return self.base_lr if self.base_lr is not None else DEFAULT_LR[self.model.kind]

    def resolved_decay(self) -> tuple[float, int]:
        factor, every = DEFAULT_DECAY.get(self.model.kind, FALLBACK_DECAY)
        if self.decay_factor is not None:
            factor = self.decay_factor
        if self.decay_every_examples is not None:
            every = self.decay_every_examples
        return factor, every

    def problems(self) -> list[str]:
        out = []
        if not self.train_path:
            out.append("train_path is required")
        if not self.val_path:
            out.append("val_path is required")
        if self.epochs < 0:
            out.append("epochs must be >= 0")
        if self.batch_size < 1:
            out.append("batch_size must be >= 1")
        if self.max_len < 1:
            out.append("max_len must be >= 1")
        if self.base_lr is not None and self.base_lr <= 0:
            out.append("base_lr must be positive")
        if self.decay_factor is not None and not 0 < self.decay_factor <= 1:
            out.append("decay_factor must be in (0, 1]")
        if self.decay_every_examples is not None and self.decay_every_examples < 1:
            out.append("decay_every_examples must be >= 1")
        if self.eval_every_examples is not None and self.eval_every_examples < 1:
            out.append("eval_every_examples must be >= 1")
        if self.topk < 1:
            out.append("topk must be >= 1")
        return out


def parse_config(raw: dict) -> RunConfig:
    """Build a validated RunConfig from a plain dict, rejecting unknown keys
    and reporting every problem in one error."""
    problems = []
    known = {f for f in RunConfig.__dataclass_fields__}
    unknown = sorted(set(raw) - known)
    problems.extend(f"unknown option {k!r}" for k in unknown)
    model_dict = raw.get("model", {})
    spec = None
    if not isinstance(model_dict, dict):
        problems.append("model must be an object")
    else:
        try:
            spec = ModelSpec.from_dict(model_dict)
        except (ValueError, TypeError) as exc:
            problems.append(f"model: {exc}")
    kwargs = {k: v for k, v in raw.items() if k in known and k != "model"}
    cfg = None
    try:
        cfg = RunConfig(model=spec or ModelSpec(), **kwargs)
    except (ValueError, TypeError) as exc:
        problems.append(str(exc))
    if cfg is not None:
        problems.extend(cfg.problems())
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path, overrides: dict | None = None) -> RunConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path} is not valid JSON: {exc}"])
    if not isinstance(raw, dict):
        raise ConfigError([f"{path} must contain a JSON object"])
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    return parse_config(raw)


# -- evaluation ----------------------------------------------------------------


def predict_dataset(model: Model, dataset: Dataset, max_len: int,
                    batch_size: int = 256) -> PredictionSet:
    ids, scores = [], []
    records = dataset.records
    v = dataset.manifest.num_classes
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        frames, mask, _ = batchify(chunk, v, max_len)
        scores.append(model.predict(frames, mask))
        ids.extend(r.id for r in chunk)
    stacked = np.concatenate(scores) if scores else np.zeros((0, v))
    return PredictionSet(ids, stacked)


def evaluate_model(model: Model, dataset: Dataset, max_len: int,
                   k: int = 20) -> tuple[EvalReport, PredictionSet]:
    if model.num_classes != dataset.manifest.num_classes:
        raise ValueError(f"model has {model.num_classes} classes, dataset "
                         f"{dataset.manifest.num_classes}")
    if model.input_dim != dataset.manifest.feature_dim:
        raise ValueError(f"model input dim {model.input_dim} != dataset "
                         f"feature dim {dataset.manifest.feature_dim}")
    predictions = predict_dataset(model, dataset, max_len)
    _, labels = batch_labels(dataset)
    return EvalReport.from_predictions(predictions, labels, k=k), predictions


def batch_labels(dataset: Dataset) -> tuple[list[str], np.ndarray]:
    v = dataset.manifest.num_classes
    labels = np.zeros((len(dataset.records), v))
    for i, rec in enumerate(dataset.records):
        labels[i, rec.labels] = 1.0
    return [r.id for r in dataset.records], labels


# -- checkpoints ---------------------------------------------------------------


def save_model_checkpoint(path, model: Model, extra_meta: dict | None = None) -> None:
    arrays = {name: t.data for name, t in model.parameters().items()}
    meta = {"model": model.spec.to_dict(), "input_dim": model.input_dim,
            "num_classes": model.num_classes}
    meta.update(extra_meta or {})
    save_checkpoint(path, arrays, meta)


def load_model_checkpoint(path) -> tuple[Model, dict]:
    arrays, meta = load_checkpoint(path)
    spec = ModelSpec.from_dict(meta["model"])
    model = build_model(spec, int(meta["input_dim"]), int(meta["num_classes"]),
                        np.random.default_rng(0))
    params = model.parameters()
    missing = sorted(set(params) - set(arrays))
    surplus = sorted(set(arrays) - set(params))
    if missing or surplus:
        raise ValueError(f"checkpoint does not match the model spec "
                         f"(missing {missing}, surplus {surplus})")
    for name, t in params.items():
        stored = np.asarray(arrays[name], dtype=np.float64)
        if stored.shape != t.data.shape:
            raise ValueError(f"checkpoint array {name!r} has shape {stored.shape}, "
                             f"model expects {t.data.shape}")
        t.data[...] = stored
    return model, meta


# -- the loop ------------------------------------------------------------------


def run_training(cfg: RunConfig) -> dict:
    """Train per the config; keep the best-validation-GAP checkpoint.

    Returns a summary dict with artifact paths and the logged history.
    """
    train = read_records(cfg.train_path, scaled=cfg.scale_features)
    val = read_records(cfg.val_path, scaled=cfg.scale_features)
    v = train.manifest.num_classes
    d = train.manifest.feature_dim
    if (val.manifest.num_classes, val.manifest.feature_dim) != (v, d):
        raise ValueError("train and val datasets disagree on classes/features")

    build_seed, shuffle_seed, dropout_seed = np.random.SeedSequence(cfg.seed).spawn(3)
    model = build_model(cfg.model, d, v, np.random.default_rng(build_seed))
    dropout_rng = np.random.default_rng(dropout_seed)
    shuffle_rng = np.random.default_rng(shuffle_seed)

    factor, every = cfg.resolved_decay()
    opt = AdamState(base_lr=cfg.resolved_lr(), decay_factor=factor,
                    decay_every_examples=every)
    params = model.parameters()

    os.makedirs(cfg.out_dir, exist_ok=True)
    ckpt_path = os.path.join(cfg.out_dir, "checkpoint.json")
    log_path = os.path.join(cfg.out_dir, "train_log.txt")

    history = []
    best = {"gap": -1.0}
    scored_at = -1

    def checkpoint_eval(epoch, last_loss):
        nonlocal scored_at
        scored_at = opt.examples_seen
        report, _ = evaluate_model(model, val, cfg.max_len, k=cfg.topk)
        line = (f"epoch={epoch} examples={opt.examples_seen} "
                f"lr={opt.effective_lr()!r} train_loss={last_loss!r} "
                f"val_gap={report.gap_score!r} val_map={report.map_score!r}")
        history.append(line)
        if report.gap_score > best["gap"]:
            best["gap"] = report.gap_score
            save_model_checkpoint(ckpt_path, model, {
                "val_gap": report.gap_score, "val_map": report.map_score,
                "examples_seen": opt.examples_seen, "seed": cfg.seed,
                "max_len": cfg.max_len, "topk": cfg.topk,
                "scale_features": cfg.scale_features})
        return report

    checkpoint_eval(0, None)                     # baseline: the initialization
    eval_every = cfg.eval_every_examples or max(1, len(train.records))
    next_eval = eval_every
    last_loss = None
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train.records))
        for start in range(0, len(order), cfg.batch_size):
            chunk = [train.records[i] for i in order[start:start + cfg.batch_size]]
            frames, mask, labels = batchify(chunk, v, cfg.max_len)
            zero_grads(params)
            loss = model.training_loss(frames, mask, labels, rng=dropout_rng)
            loss.backward()
            grads = {n: t.grad for n, t in params.items() if t.grad is not None}
            adam_step(params, grads, opt, examples=len(chunk))
            last_loss = float(loss.data)
            if opt.examples_seen >= next_eval:
                checkpoint_eval(epoch, last_loss)
                next_eval += eval_every
    if opt.examples_seen != scored_at:
        checkpoint_eval(cfg.epochs, last_loss)   # final state not yet scored

    with open(log_path, "w") as fh:
        fh.write("\n".join(history) + "\n")
    return {"checkpoint": ckpt_path, "log": log_path,
            "best_gap": best["gap"], "history": history}
