"""Tests for the tensor core: activations, losses, ADAM, grad checking."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import frametag as ft
from frametag.optim import AdamState, adam_step
from frametag.tensor import Tensor, concatenate, matmul, stack

RNG = np.random.default_rng(1234)

# frozen via a 40-digit scalar evaluation of 1/(1+exp(-0.3))
SIGMOID_03 = 0.5744425168116590
# frozen via 40-digit exp/normalize of [1, 2, 3]
SOFTMAX_123 = [0.09003057317038046, 0.24472847105479764, 0.6652409557748219]


def test_sigmoid_symmetry_and_saturation():
    assert ft.sigmoid(0.0).item() == 0.5
    assert abs(ft.sigmoid(50.0).item() - 1.0) < 1e-15
    assert abs(ft.sigmoid(np.array(0.3)).item() - SIGMOID_03) < 1e-15


def test_sigmoid_strictly_inside_unit_interval():
    # Strictness holds while exp(-x) stays above the float64 gap below 1.0;
    # past x ~ 37.4 the quotient rounds to exactly 1.0 and that is fine.
    x = np.array([-700.0, -50.0, 0.0, 30.0, 36.0])
    out = ft.sigmoid(x).data
    assert np.all(out > 0.0) and np.all(out < 1.0)
    assert np.all(np.isfinite(out))
    assert ft.sigmoid(np.array(50.0)).item() == 1.0


def test_softmax_uniform_and_saturated():
    out = ft.softmax(np.zeros(3)).data
    assert np.allclose(out, 1.0 / 3, atol=1e-15)
    out = ft.softmax(np.array([1000.0, 0.0])).data
    assert abs(out[0] - 1.0) < 1e-12 and abs(out[1]) < 1e-12
    out = ft.softmax(np.array([1.0, 2.0, 3.0])).data
    np.testing.assert_allclose(out, SOFTMAX_123, atol=1e-15)


@given(st.lists(st.floats(-30, 30), min_size=2, max_size=8),
       st.floats(-20, 20))
@settings(max_examples=200, deadline=None)
def test_softmax_rows_sum_to_one_and_shift_invariant(vals, shift):
    x = np.array(vals)
    s = ft.softmax(x).data
    assert abs(s.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(ft.softmax(x + shift).data, s, atol=1e-12)


def test_sigmoid_cross_entropy_maximum_entropy_point():
    logits = np.zeros((2, 3))
    labels = RNG.integers(0, 2, size=(2, 3)).astype(float)
    loss = ft.sigmoid_cross_entropy(logits, labels)
    assert abs(loss.item() - np.log(2.0)) < 1e-15


def test_sigmoid_cross_entropy_confident_correct_is_near_zero():
    loss = ft.sigmoid_cross_entropy(np.array([[50.0]]), np.array([[1.0]]))
    assert loss.item() < 1e-15


def test_sigmoid_cross_entropy_matches_naive_formula():
    # naive -y ln(s) - (1-y) ln(1-s) at magnitudes where it is safe
    logits = RNG.uniform(-3, 3, size=(2, 3))
    labels = RNG.integers(0, 2, size=(2, 3)).astype(float)
    s = 1.0 / (1.0 + np.exp(-logits))
    naive = (-labels * np.log(s) - (1 - labels) * np.log(1 - s)).mean()
    assert abs(ft.sigmoid_cross_entropy(logits, labels).item() - naive) < 1e-12


def test_sigmoid_cross_entropy_shape_mismatch():
    with pytest.raises(ValueError):
        ft.sigmoid_cross_entropy(np.zeros((2, 3)), np.zeros((3, 2)))


def test_sigmoid_cross_entropy_added_ignored_class_keeps_total():
    # per-entry contributions of a (-inf-proxy logit, 0 label) column vanish,
    # so the summed loss is invariant; the mean rescales by the entry count.
    logits = RNG.uniform(-3, 3, size=(4, 5))
    labels = RNG.integers(0, 2, size=(4, 5)).astype(float)
    base = ft.sigmoid_cross_entropy(logits, labels).item() * logits.size
    ext_logits = np.concatenate([logits, np.full((4, 1), -50.0)], axis=1)
    ext_labels = np.concatenate([labels, np.zeros((4, 1))], axis=1)
    ext = ft.sigmoid_cross_entropy(ext_logits, ext_labels).item() * ext_logits.size
    assert abs(base - ext) < 1e-12


def test_loss_decreases_along_negative_gradient():
    logits = Tensor(RNG.uniform(-2, 2, size=(3, 4)), requires_grad=True)
    labels = RNG.integers(0, 2, size=(3, 4)).astype(float)
    loss = ft.sigmoid_cross_entropy(logits, labels)
    loss.backward()
    g = logits.grad
    base = loss.item()
    for t in (1e-3, 1e-2, 1e-1):
        probe = ft.sigmoid_cross_entropy(logits.data - t * g, labels).item()
        assert probe < base


def test_smoothed_softmax_single_label_reduces_to_softmax_ce():
    logits = RNG.uniform(-2, 2, size=(3, 5))
    labels = np.zeros((3, 5))
    labels[np.arange(3), [0, 2, 4]] = 1.0
    expected = 0.0
    for n in range(3):
        p = np.exp(logits[n]) / np.exp(logits[n]).sum()
        expected += -np.log(p[np.argmax(labels[n])])
    expected /= 3
    assert abs(ft.smoothed_softmax_loss(logits, labels).item() - expected) < 1e-12


def test_smoothed_softmax_two_positives_uniform_logits():
    logits = np.zeros((1, 4))
    labels = np.array([[1.0, 1.0, 0.0, 0.0]])
    assert abs(ft.smoothed_softmax_loss(logits, labels).item() - np.log(4.0)) < 1e-14


def test_smoothed_softmax_matches_normalize_then_ce_oracle():
    logits = RNG.uniform(-3, 3, size=(4, 6))
    labels = (RNG.random((4, 6)) < 0.4).astype(float)
    labels[labels.sum(axis=1) == 0, 0] = 1.0
    target = labels / labels.sum(axis=1, keepdims=True)
    expected = 0.0
    for n in range(4):
        p = np.exp(logits[n]) / np.exp(logits[n]).sum()
        expected += -(target[n] * np.log(p)).sum()
    expected /= 4
    assert abs(ft.smoothed_softmax_loss(logits, labels).item() - expected) < 1e-12


def test_smoothed_softmax_rejects_empty_label_row():
    with pytest.raises(ValueError):
        ft.smoothed_softmax_loss(np.zeros((2, 3)), np.array([[1.0, 0, 0], [0, 0, 0]]))


# -- ADAM ----------------------------------------------------------------


def test_adam_zero_gradients_is_identity():
    params = {"w": Tensor(RNG.standard_normal((3, 2)), requires_grad=True)}
    before = params["w"].data.copy()
    state = AdamState(base_lr=0.05)
    for _ in range(7):
        adam_step(params, {"w": np.zeros((3, 2))}, state, examples=10)
    assert np.array_equal(params["w"].data, before)


def test_adam_first_step_closed_form():
    params = {"w": Tensor(np.array(1.0), requires_grad=True)}
    state = AdamState(base_lr=0.01)
    adam_step(params, {"w": np.array(1.0)}, state)
    # bias-corrected m/sqrt(v) is exactly 1 on the first step
    assert abs(params["w"].item() - (1.0 - 0.01 / (1.0 + 1e-8))) < 1e-15


def test_adam_lr_decay_schedule():
    state = AdamState(base_lr=0.01, decay_factor=0.9, decay_every_examples=4_000_000)
    assert state.effective_lr() == 0.01
    state.examples_seen = 4_000_000
    assert abs(state.effective_lr() - 0.009) < 1e-15
    state.examples_seen = 8_000_000
    assert abs(state.effective_lr() - 0.01 * 0.81) < 1e-15


def test_adam_rejects_non_finite_gradient():
    params = {"w": Tensor(np.ones(2), requires_grad=True)}
    state = AdamState(base_lr=0.01)
    with pytest.raises(ValueError):
        adam_step(params, {"w": np.array([1.0, np.nan])}, state)


# -- gradient checking -----------------------------------------------------


def test_grad_check_linear_map_is_exact():
    x = RNG.standard_normal(4)

    def fn(t):
        return matmul(t["W"], Tensor(x)).sum()

    err = ft.grad_check(fn, {"W": RNG.standard_normal((3, 4))})
    assert err < 1e-10


def test_grad_check_sigmoid_sum():
    err = ft.grad_check(lambda t: ft.sigmoid(t["x"]).sum(),
                        {"x": RNG.uniform(-2, 2, size=(3, 5))})
    assert err < 1e-7


def test_grad_check_composite_ops():
    def fn(t):
        a = ft.softmax(t["a"], axis=1)
        h = matmul(a, t["b"])
        parts = concatenate([h, h * 2.0], axis=1)
        piled = stack([parts, parts], axis=0)
        return (piled ** 2).mean()

    err = ft.grad_check(fn, {"a": RNG.standard_normal((3, 4)),
                             "b": RNG.standard_normal((4, 2))})
    assert err < 1e-7


def test_stop_gradient_blocks_everything_upstream():
    x = Tensor(RNG.standard_normal(3), requires_grad=True)
    y = Tensor(RNG.standard_normal(3), requires_grad=True)
    out = (ft.stop_gradient(x * 2.0) * y).sum()
    out.backward()
    assert x.grad is None
    np.testing.assert_array_equal(y.grad, 2.0 * x.data)


def test_backward_accumulates_through_fanout():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    y = (x * x + x).sum()
    y.backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_deep_chain_backward_does_not_recurse_out():
    x = Tensor(np.array(0.5), requires_grad=True)
    y = x
    for _ in range(5000):
        y = y * 1.0001
    y.backward()
    assert x.grad is not None and np.isfinite(x.grad)
