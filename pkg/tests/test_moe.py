import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import frametag.tensor as T
from frametag import grad_check, sigmoid_cross_entropy
from frametag.moe import (
    MoeParams,
    VocabularyPartition,
    blend_overlapping,
    moe_forward,
    partition_vocabulary,
    pmoe_predict,
)

# 0.5*sigmoid(0) + 0.5*sigmoid(2), the two-expert scalar case
TWO_EXPERT_SCALAR = 0.6903985389889412


def params_from(gate_w, gate_b, expert_w, expert_b, k, v):
    return MoeParams(k, v, np.asarray(gate_w, float), np.asarray(gate_b, float),
                     np.asarray(expert_w, float), np.asarray(expert_b, float))


def test_two_expert_scalar_hand_case():
    # D=1, V=1, k=2; x=0 so only biases matter: gates (0,0), experts (0,2)
    p = params_from([[0.0, 0.0]], [0.0, 0.0], [[0.0, 0.0]], [0.0, 2.0], k=2, v=1)
    out = moe_forward(np.zeros((1, 1)), p)
    assert out.data[0, 0] == pytest.approx(TWO_EXPERT_SCALAR, abs=1e-15)


def test_single_mixture_reduces_to_sigmoid():
    rng = np.random.default_rng(0)
    p = MoeParams.init(4, 3, 1, rng, scale=0.5)
    x = rng.normal(size=(6, 4))
    out = moe_forward(x, p).data
    logits = x @ p.expert_w.data + p.expert_b.data
    expected = 1.0 / (1.0 + np.exp(-logits))
    np.testing.assert_allclose(out, expected.reshape(6, 3), atol=1e-15)


def test_identical_experts_ignore_gate():
    rng = np.random.default_rng(1)
    ew = rng.normal(size=(4, 3))
    eb = rng.normal(size=3)
    p = params_from(rng.normal(size=(4, 6)), rng.normal(size=6),
                    np.repeat(ew, 2, axis=1), np.repeat(eb, 2), k=2, v=3)
    x = rng.normal(size=(5, 4))
    single = params_from(np.zeros((4, 3)), np.zeros(3), ew, eb, k=1, v=3)
    np.testing.assert_allclose(moe_forward(x, p).data, moe_forward(x, single).data,
                               atol=1e-15)


def test_scores_are_convex_combinations_of_expert_sigmoids():
    rng = np.random.default_rng(2)
    k, v, d, n = 4, 5, 6, 8
    p = MoeParams.init(d, v, k, rng, scale=1.5)
    x = rng.normal(size=(n, d))
    scores = moe_forward(x, p).data
    expert_logits = (x @ p.expert_w.data + p.expert_b.data).reshape(n, v, k)
    expert_probs = 1.0 / (1.0 + np.exp(-expert_logits))
    assert np.all(scores >= expert_probs.min(axis=-1) - 1e-12)
    assert np.all(scores <= expert_probs.max(axis=-1) + 1e-12)
    assert np.all((scores > 0) & (scores < 1))


def test_moe_rejects_bad_shapes():
    rng = np.random.default_rng(3)
    p = MoeParams.init(4, 3, 2, rng)
    with pytest.raises(ValueError):
        moe_forward(np.zeros((5, 7)), p)
    with pytest.raises(ValueError):
        moe_forward(np.zeros(4), p)
    with pytest.raises(ValueError):
        MoeParams.init(4, 3, 0, rng)
    with pytest.raises(ValueError):
        params_from(np.zeros((4, 5)), np.zeros(6), np.zeros((4, 6)), np.zeros(6), k=2, v=3)


def test_moe_gradients():
    rng = np.random.default_rng(4)
    n, d, v, k = 3, 5, 4, 2
    x = rng.normal(size=(n, d))
    labels = (rng.random((n, v)) < 0.4).astype(float)
    init = MoeParams.init(d, v, k, rng, scale=0.3)

    err = grad_check(
        lambda t: sigmoid_cross_entropy(
            moe_forward(
                T.as_tensor(x),
                MoeParams(k, v, t["gate_w"], t["gate_b"], t["expert_w"], t["expert_b"]),
            ),
            labels,
        ),
        {"gate_w": init.gate_w.data, "gate_b": init.gate_b.data,
         "expert_w": init.expert_w.data, "expert_b": init.expert_b.data},
    )
    assert err < 1e-6


# -- vocabulary partitions ----------------------------------------------------


def test_partition_paper_scale_ordered():
    part = partition_vocabulary(4716, width=500)
    sizes = [len(g) for g in part.groups]
    assert sizes == [500] * 9 + [216]
    np.testing.assert_array_equal(part.groups[0], np.arange(500))
    np.testing.assert_array_equal(part.groups[9], np.arange(4500, 4716))


def test_partition_single_group():
    part = partition_vocabulary(5, width=5)
    assert len(part) == 1
    np.testing.assert_array_equal(part.groups[0], np.arange(5))


def test_partition_random_scheme_is_seeded_cover():
    a = partition_vocabulary(10, width=3, scheme="random", seed=7)
    b = partition_vocabulary(10, width=3, scheme="random", seed=7)
    c = partition_vocabulary(10, width=3, scheme="random", seed=8)
    assert len(a) == 4
    for ga, gb in zip(a.groups, b.groups):
        np.testing.assert_array_equal(ga, gb)
    assert any(not np.array_equal(ga, gc) for ga, gc in zip(a.groups, c.groups))
    assert sorted(np.concatenate(a.groups).tolist()) == list(range(10))


@settings(max_examples=60, deadline=None)
@given(v=st.integers(1, 200), width=st.integers(1, 50),
       scheme=st.sampled_from(["ordered", "random"]), seed=st.integers(0, 999))
def test_partition_disjoint_cover_property(v, width, scheme, seed):
    part = partition_vocabulary(v, width, scheme=scheme, seed=seed)
    labels = np.concatenate(part.groups)
    assert len(labels) == v
    assert sorted(labels.tolist()) == list(range(v))
    assert all(len(g) <= width for g in part.groups)


def test_partition_rejects_bad_groups():
    with pytest.raises(ValueError):
        VocabularyPartition(4, [[0, 1], [1, 2, 3]])
    with pytest.raises(ValueError):
        VocabularyPartition(4, [[0, 1]])
    with pytest.raises(ValueError):
        partition_vocabulary(10, width=3, scheme="zigzag")


# -- parallel prediction ------------------------------------------------------


def test_pmoe_single_group_bit_identical():
    rng = np.random.default_rng(5)
    p = MoeParams.init(6, 9, 2, rng, scale=0.4)
    x = rng.normal(size=(4, 6))
    part = partition_vocabulary(9, width=9)
    full = moe_forward(x, p).data
    split = pmoe_predict(x, part, [p])
    assert np.array_equal(full, split)


def test_pmoe_scatter_and_saturation():
    rng = np.random.default_rng(6)
    part = partition_vocabulary(6, width=3)
    x = rng.normal(size=(4, 5))
    p0 = MoeParams.init(5, 3, 2, rng, scale=0.4)
    p1 = MoeParams.init(5, 3, 2, rng, scale=0.4)
    base = pmoe_predict(x, part, [p0, p1])
    # saturate the second group's experts positive: those classes go to ~1
    hot = MoeParams(2, 3, p1.gate_w.data, p1.gate_b.data,
                    np.zeros_like(p1.expert_w.data), np.full(6, 40.0))
    out = pmoe_predict(x, part, [p0, hot])
    np.testing.assert_allclose(out[:, 3:], 1.0, atol=1e-12)
    assert np.array_equal(out[:, :3], base[:, :3])


def test_pmoe_group_order_is_irrelevant():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(3, 4))
    part = partition_vocabulary(6, width=3)
    p0 = MoeParams.init(4, 3, 2, rng, scale=0.4)
    p1 = MoeParams.init(4, 3, 2, rng, scale=0.4)
    fwd = pmoe_predict(x, part, [p0, p1])
    flipped = VocabularyPartition(6, [part.groups[1], part.groups[0]], "ordered")
    rev = pmoe_predict(x, flipped, [p1, p0])
    assert np.array_equal(fwd, rev)


def test_pmoe_validates_lengths():
    rng = np.random.default_rng(8)
    part = partition_vocabulary(6, width=3)
    p = MoeParams.init(4, 3, 2, rng)
    with pytest.raises(ValueError):
        pmoe_predict(np.zeros((2, 4)), part, [p])
    with pytest.raises(ValueError):
        pmoe_predict(np.zeros((2, 4)), part, [p, MoeParams.init(4, 2, 2, rng)])


# -- range blending -----------------------------------------------------------


def test_blend_single_model_is_identity():
    scores = np.random.default_rng(9).random((3, 5))
    out = blend_overlapping([((0, 5), scores)])
    np.testing.assert_array_equal(out, scores)


def test_blend_overlap_averages():
    full = np.full((2, 4), 0.2)
    head = np.full((2, 2), 0.6)
    out = blend_overlapping([((0, 4), full), ((0, 2), head)])
    np.testing.assert_allclose(out[:, :2], 0.4, atol=1e-15)
    np.testing.assert_allclose(out[:, 2:], 0.2, atol=1e-15)


def test_blend_agreeing_models_unchanged():
    scores = np.random.default_rng(10).random((3, 6))
    out = blend_overlapping([((0, 6), scores), ((0, 3), scores[:, :3].copy())])
    np.testing.assert_allclose(out, scores, atol=1e-15)


def test_blend_rejects_uncovered_class():
    with pytest.raises(ValueError):
        blend_overlapping([((0, 2), np.zeros((1, 2)))], num_classes=4)
