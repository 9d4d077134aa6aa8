import json
import os

import numpy as np
import pytest

from frametag.dataio import synth_generate, write_records
from frametag.models import ModelSpec, build_model
from frametag.train import (
    ConfigError,
    RunConfig,
    evaluate_model,
    load_config,
    load_model_checkpoint,
    parse_config,
    predict_dataset,
    run_training,
    save_model_checkpoint,
)


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    splits = synth_generate(8, 60, (4, 8), 10, seed=3)
    paths = {}
    for name, ds in splits.items():
        paths[name] = str(root / f"{name}.jsonl")
        write_records(paths[name], ds)
    return paths


def tiny_config(paths, out, **kw):
    base = dict(model=ModelSpec(kind="moe", mixtures=2),
                train_path=paths["train"], val_path=paths["val"],
                out_dir=str(out), epochs=2, batch_size=16, max_len=8,
                eval_every_examples=60)
    base.update(kw)
    return RunConfig(**base)


# -- config parsing -------------------------------------------------------------


def test_parse_config_collects_every_problem():
    with pytest.raises(ConfigError) as err:
        parse_config({"modle": {}, "epochs": -1, "batch_size": 0,
                      "model": {"kind": "moe", "n_experts": 3},
                      "train_path": "a", "val_path": "b"})
    message = str(err.value)
    for fragment in ("unknown option 'modle'", "epochs", "batch_size", "n_experts"):
        assert fragment in message


def test_parse_config_happy_path():
    cfg = parse_config({"model": {"kind": "rnn", "variant": "stacked"},
                        "train_path": "t", "val_path": "v", "epochs": 1})
    assert cfg.model.kind == "rnn"
    assert cfg.epochs == 1


def test_load_config_applies_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"model": {"kind": "moe"}, "train_path": "t",
                                "val_path": "v", "seed": 1}))
    cfg = load_config(str(path), {"seed": 9, "out_dir": "elsewhere"})
    assert cfg.seed == 9
    assert cfg.out_dir == "elsewhere"
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(str(bad))


def test_default_hyperparameters_mirror_model_kind():
    moe = RunConfig(model=ModelSpec(kind="moe"), train_path="t", val_path="v")
    rnn = RunConfig(model=ModelSpec(kind="rnn"), train_path="t", val_path="v")
    conv = RunConfig(model=ModelSpec(kind="resnet1d"), train_path="t", val_path="v")
    assert moe.resolved_lr() == 0.01 and moe.resolved_decay() == (0.9, 4_000_000)
    assert rnn.resolved_lr() == 5e-4
    assert conv.resolved_lr() == 0.1 and conv.resolved_decay() == (0.1, 10_000_000)
    custom = RunConfig(model=ModelSpec(kind="moe"), train_path="t", val_path="v",
                       base_lr=0.5, decay_factor=0.7, decay_every_examples=100)
    assert custom.resolved_lr() == 0.5
    assert custom.resolved_decay() == (0.7, 100)


# -- checkpoints ----------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    model = build_model(ModelSpec(kind="attn", hops=2, attn_proj=3), 6, 5,
                        np.random.default_rng(4))
    path = str(tmp_path / "ckpt.json")
    save_model_checkpoint(path, model, {"val_gap": 0.5})
    loaded, meta = load_model_checkpoint(path)
    assert meta["val_gap"] == 0.5
    assert loaded.spec == model.spec
    for name, t in model.parameters().items():
        assert np.array_equal(t.data, loaded.parameters()[name].data)


def test_checkpoint_spec_mismatch_rejected(tmp_path):
    model = build_model(ModelSpec(kind="moe"), 6, 5, np.random.default_rng(5))
    path = str(tmp_path / "ckpt.json")
    save_model_checkpoint(path, model)
    raw = json.load(open(path))
    raw["meta"]["model"]["mixtures"] = 7          # arrays no longer fit
    with open(path, "w") as fh:
        json.dump(raw, fh)
    with pytest.raises(ValueError, match="shape"):
        load_model_checkpoint(path)


# -- the training loop ----------------------------------------------------------


def test_zero_epochs_checkpoint_is_the_initialization(tiny_data, tmp_path):
    cfg = tiny_config(tiny_data, tmp_path / "run", epochs=0, seed=11)
    result = run_training(cfg)
    trained, meta = load_model_checkpoint(result["checkpoint"])
    build_seed = np.random.SeedSequence(11).spawn(3)[0]
    fresh = build_model(cfg.model, 10, 8, np.random.default_rng(build_seed))
    for name, t in fresh.parameters().items():
        assert np.array_equal(t.data, trained.parameters()[name].data), name
    assert meta["examples_seen"] == 0
    assert len(result["history"]) == 1


def test_training_improves_and_logs(tiny_data, tmp_path):
    cfg = tiny_config(tiny_data, tmp_path / "run", epochs=3, base_lr=0.05)
    result = run_training(cfg)
    assert os.path.exists(result["checkpoint"])
    with open(result["log"]) as fh:
        logged = fh.read().strip().split("\n")
    assert logged == result["history"]
    first = result["history"][0]
    last = result["history"][-1]
    gap_of = lambda line: float(line.split("val_gap=")[1].split()[0])
    assert gap_of(last) > gap_of(first)
    assert result["best_gap"] >= gap_of(first)
    model, meta = load_model_checkpoint(result["checkpoint"])
    assert meta["val_gap"] == result["best_gap"]


def test_training_is_deterministic(tiny_data, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    res_a = run_training(tiny_config(tiny_data, out_a, seed=21))
    res_b = run_training(tiny_config(tiny_data, out_b, seed=21))
    assert res_a["history"] == res_b["history"]
    with open(res_a["checkpoint"]) as fa, open(res_b["checkpoint"]) as fb:
        assert fa.read() == fb.read()


def test_different_seeds_differ(tiny_data, tmp_path):
    res_a = run_training(tiny_config(tiny_data, tmp_path / "a", seed=1, epochs=1))
    res_b = run_training(tiny_config(tiny_data, tmp_path / "b", seed=2, epochs=1))
    assert res_a["history"] != res_b["history"]


def test_evaluate_model_rejects_mismatches(tiny_data):
    from frametag.dataio import read_records
    val = read_records(tiny_data["val"])
    wrong_v = build_model(ModelSpec(kind="moe"), 10, 9, np.random.default_rng(0))
    with pytest.raises(ValueError, match="classes"):
        evaluate_model(wrong_v, val, max_len=8)
    wrong_d = build_model(ModelSpec(kind="moe"), 11, 8, np.random.default_rng(0))
    with pytest.raises(ValueError, match="feature dim"):
        evaluate_model(wrong_d, val, max_len=8)


def test_predict_dataset_on_empty_split(tiny_data):
    from frametag.dataio import Dataset, read_records
    val = read_records(tiny_data["val"])
    empty = Dataset(val.manifest, [])
    model = build_model(ModelSpec(kind="moe"), 10, 8, np.random.default_rng(0))
    preds = predict_dataset(model, empty, max_len=8)
    assert preds.scores.shape == (0, 8)
