"""Command-line entry point: synth, analyze, train, eval, predict, fuse.

Exit codes: 0 success; 1 for anything the user can fix (bad flags, bad
config, mismatched inputs); 2 for runtime failures (IO, unexpected errors).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .dataio import (cooccurrence_matrix, label_distribution, read_predictions,
                     read_records, synth_generate, write_predictions, write_records)
from .fusion import per_class_weights, fuse
from .metrics import read_per_class_ap_csv
from .train import (ConfigError, evaluate_model, load_config,
                    load_model_checkpoint, predict_dataset, run_training)


def cmd_synth(args) -> int:
    if args.tmin > args.tmax:
        raise ValueError("--tmin must be <= --tmax")
    splits = synth_generate(args.classes, args.records, (args.tmin, args.tmax),
                            args.dim, seed=args.seed, difficulty=args.difficulty)
    os.makedirs(args.out, exist_ok=True)
    for name, dataset in splits.items():
        path = os.path.join(args.out, f"{name}.jsonl")
        write_records(path, dataset)
        print(f"{name}: {len(dataset.records)} records -> {path}")
    return 0


def cmd_analyze(args) -> int:
    dataset = read_records(args.data)
    counts, coverage = label_distribution(dataset)
    top = min(args.top, dataset.manifest.num_classes)
    matrix = cooccurrence_matrix(dataset, top=top)
    os.makedirs(args.out, exist_ok=True)
    counts_path = os.path.join(args.out, "label_counts.csv")
    with open(counts_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "count"])
        for c, n in enumerate(counts):
            writer.writerow([c, int(n)])
    coverage_path = os.path.join(args.out, "label_coverage.csv")
    with open(coverage_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["labels_per_record", "fraction"])
        for n, frac in enumerate(coverage):
            writer.writerow([n, repr(float(frac))])
    cooc_path = os.path.join(args.out, "cooccurrence.csv")
    with open(cooc_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id"] + list(range(top)))
        for c, row in enumerate(matrix):
            writer.writerow([c] + [int(x) for x in row])
    print(f"wrote {counts_path}, {coverage_path}, {cooc_path}")
    return 0


def cmd_train(args) -> int:
    overrides = {"out_dir": args.out, "seed": args.seed}
    if args.data:
        overrides["train_path"] = os.path.join(args.data, "train.jsonl")
        overrides["val_path"] = os.path.join(args.data, "val.jsonl")
    cfg = load_config(args.config, overrides)
    result = run_training(cfg)
    for line in result["history"]:
        print(line)
    print(f"best val gap {result['best_gap']!r}; "
          f"checkpoint {result['checkpoint']}; log {result['log']}")
    return 0


def _load_for_inference(args):
    model, meta = load_model_checkpoint(args.checkpoint)
    dataset = read_records(args.data, scaled=bool(meta.get("scale_features", False)))
    max_len = int(meta.get("max_len", dataset.manifest.max_len))
    return model, meta, dataset, max_len


def cmd_eval(args) -> int:
    model, _, dataset, max_len = _load_for_inference(args)
    report, _ = evaluate_model(model, dataset, max_len, k=args.topk)
    os.makedirs(args.out, exist_ok=True)
    summary = os.path.join(args.out, "eval_summary.txt")
    per_class = os.path.join(args.out, "eval_per_class.csv")
    report.write(summary, per_class)
    print(f"gap={report.gap_score!r} map={report.map_score!r}")
    print(f"wrote {summary}, {per_class}")
    return 0


def cmd_predict(args) -> int:
    model, _, dataset, max_len = _load_for_inference(args)
    if model.num_classes != dataset.manifest.num_classes:
        raise ValueError(f"model has {model.num_classes} classes, dataset "
                         f"{dataset.manifest.num_classes}")
    predictions = predict_dataset(model, dataset, max_len)
    write_predictions(args.out, predictions, top_k=args.topk)
    print(f"wrote {len(predictions.ids)} rows to {args.out}")
    return 0


def cmd_fuse(args) -> int:
    if args.aps:
        if len(args.aps) != len(args.preds):
            raise ValueError(f"{len(args.preds)} prediction files but "
                             f"{len(args.aps)} AP files")
        ap_rows = [read_per_class_ap_csv(p) for p in args.aps]
        sizes = {len(r) for r in ap_rows}
        if len(sizes) != 1:
            raise ValueError(f"AP files disagree on class count: {sorted(sizes)}")
        aps = np.stack(ap_rows)
        num_classes = aps.shape[1]
    elif args.norm == "avg":
        if not args.classes:
            raise ValueError("avg fusion without --aps needs --classes")
        num_classes = args.classes
        aps = np.full((len(args.preds), num_classes), 1.0)
    else:
        raise ValueError(f"{args.norm} fusion needs --aps")
    predictions = [read_predictions(p, num_classes) for p in args.preds]
    weights = per_class_weights(aps, args.norm)
    fused = fuse(predictions, weights)
    write_predictions(args.out, fused, top_k=args.topk)
    print(f"fused {len(predictions)} models ({args.norm}) -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frametag",
        description="multi-label sequence tagging: data, training, "
                    "evaluation, and ensemble fusion")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", type=int, default=50)
    p.add_argument("--records", type=int, default=1000)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--tmin", type=int, default=10)
    p.add_argument("--tmax", type=int, default=30)
    p.add_argument("--difficulty", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="label distribution and co-occurrence")
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--top", type=int, default=50,
                   help="co-occurrence matrix covers the first TOP classes")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--data", help="directory with train.jsonl/val.jsonl "
                                  "(overrides the config paths)")
    p.add_argument("--out", help="output directory override")
    p.add_argument("--seed", type=int, help="seed override")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--topk", type=int, default=20)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write a top-k prediction CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--topk", type=int, default=20)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("fuse", help="AP-weighted fusion of prediction CSVs")
    p.add_argument("--preds", nargs="+", required=True,
                   help="prediction CSVs, one per model")
    p.add_argument("--aps", nargs="*", default=[],
                   help="per-class AP CSVs, aligned with --preds")
    p.add_argument("--norm", choices=("avg", "l1", "l2", "l3"), default="l1")
    p.add_argument("--classes", type=int,
                   help="class count (avg fusion without --aps)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--topk", type=int, default=20)
    p.set_defaults(func=cmd_fuse)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:               # argparse has printed its message
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"unexpected error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
