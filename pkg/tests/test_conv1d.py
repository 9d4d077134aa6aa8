import numpy as np
import pytest

import frametag.tensor as T
from frametag import grad_check
from frametag.conv1d import (
    BatchNormParams,
    BottleneckParams,
    ResNet1dParams,
    ResNet1dSpec,
    batchnorm,
    bottleneck_block,
    conv1d,
    resnet1d_forward,
    resnet1d_logits,
)

DESK = dict(channels=(8, 8, 16, 32, 64), blocks=(1, 1, 1, 1))


def conv_oracle(x, w, stride=1, pad=0):
    k = w.shape[0]
    if pad:
        x = np.concatenate([np.zeros((pad, x.shape[1])), x,
                            np.zeros((pad, x.shape[1]))])
    t_out = (x.shape[0] - k) // stride + 1
    out = np.zeros((t_out, w.shape[2]))
    for t in range(t_out):
        for kk in range(k):
            out[t] += x[t * stride + kk] @ w[kk]
    return out


# -- convolution ---------------------------------------------------------------


def test_conv_identity_kernel_is_identity():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 4))
    w = np.eye(4)[None]                                   # [1, 4, 4]
    np.testing.assert_allclose(conv1d(x, w).data, x, atol=1e-15)


def test_conv_averaging_kernel_keeps_constant_interior():
    x = np.full((8, 3), 2.5)
    w = np.stack([np.eye(3) / 3.0] * 3)                   # [3, 3, 3] mean over window
    out = conv1d(x, w, pad=1).data
    np.testing.assert_allclose(out[1:-1], x[1:-1], atol=1e-12)
    np.testing.assert_allclose(out[0], x[0] * 2 / 3, atol=1e-12)


def test_conv_matches_sliding_window_oracle():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(5, 2))
    w = rng.normal(size=(3, 2, 4))
    np.testing.assert_allclose(conv1d(x, w).data, conv_oracle(x, w), atol=1e-12)
    np.testing.assert_allclose(conv1d(x, w, stride=2).data,
                               conv_oracle(x, w, stride=2), atol=1e-12)
    np.testing.assert_allclose(conv1d(x, w, pad=2).data,
                               conv_oracle(x, w, pad=2), atol=1e-12)


def test_conv_batch_matches_per_sequence():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 7, 2))
    w = rng.normal(size=(3, 2, 5))
    batched = conv1d(x, w, stride=2, pad=1).data
    for b in range(3):
        np.testing.assert_allclose(batched[b], conv_oracle(x[b], w, 2, 1), atol=1e-12)


def test_conv_bias_and_errors():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 2))
    w = rng.normal(size=(1, 2, 3))
    bias = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(conv1d(x, w, bias=bias).data,
                               x @ w[0] + bias, atol=1e-12)
    with pytest.raises(ValueError, match="output length"):
        conv1d(np.zeros((2, 2)), np.zeros((5, 2, 3)))
    with pytest.raises(ValueError, match="channels"):
        conv1d(np.zeros((4, 3)), w)


# -- batch normalization -------------------------------------------------------


def test_batchnorm_affine_mode_is_plain_affine():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(5, 3))
    p = BatchNormParams.init(3, mode="affine")
    assert np.array_equal(batchnorm(x, p).data, x)
    p.gamma.data[...] = 2.0
    p.beta.data[...] = -1.0
    np.testing.assert_allclose(batchnorm(x, p).data, 2.0 * x - 1.0, atol=1e-15)


def test_batchnorm_training_standardizes_and_tracks():
    rng = np.random.default_rng(5)
    x = 3.0 + 2.0 * rng.normal(size=(200, 4))
    p = BatchNormParams.init(4)
    out = batchnorm(x, p, training=True).data
    np.testing.assert_allclose(out.mean(axis=0), np.zeros(4), atol=1e-12)
    np.testing.assert_allclose(out.var(axis=0), np.ones(4), rtol=1e-3)
    np.testing.assert_allclose(p.running_mean, 0.1 * x.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(p.running_var, 0.9 + 0.1 * x.var(axis=0), atol=1e-12)


def test_batchnorm_eval_uses_running_stats():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(7, 2))
    p = BatchNormParams.init(2)
    p.running_mean = np.array([1.0, -1.0])
    p.running_var = np.array([4.0, 0.25])
    out = batchnorm(x, p).data
    expect = (x - p.running_mean) / np.sqrt(p.running_var + p.eps)
    np.testing.assert_allclose(out, expect, atol=1e-12)


def test_batchnorm_rejects_unknown_mode():
    with pytest.raises(ValueError, match="mode"):
        BatchNormParams.init(3, mode="layer")


def test_batchnorm_training_gradient():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(6, 3))

    def fn(t):
        p = BatchNormParams(t["gamma"], t["beta"])
        return batchnorm(t["x"], p, training=True)

    err = grad_check(fn, {"x": x, "gamma": np.ones(3) + 0.1 * rng.normal(size=3),
                          "beta": 0.1 * rng.normal(size=3)})
    assert err < 1e-6


# -- bottleneck blocks ---------------------------------------------------------


def test_block_with_zero_residual_is_relu():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(6, 8))
    p = BottleneckParams.init(8, 8, stride=1, rng=rng, bn_mode="affine")
    for w in (p.w1, p.w2, p.w3):
        w.data[...] = 0.0
    assert np.array_equal(bottleneck_block(x, p).data, np.maximum(x, 0.0))


def test_block_stride_halves_time():
    rng = np.random.default_rng(9)
    p = BottleneckParams.init(4, 8, stride=2, rng=rng, bn_mode="affine")
    assert bottleneck_block(np.ones((7, 4)), p).shape == (4, 8)
    assert bottleneck_block(np.ones((2, 7, 4)), p).shape == (2, 4, 8)


def test_block_requires_projection_when_shape_changes():
    rng = np.random.default_rng(10)
    p = BottleneckParams.init(4, 4, stride=1, rng=rng, bn_mode="affine")
    p.stride = 2                                          # mutate into an illegal shape
    with pytest.raises(ValueError, match="projection"):
        bottleneck_block(np.ones((6, 4)), p)


def test_block_gradient_through_residual_sum():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(5, 4))
    proto = BottleneckParams.init(4, 8, stride=2, rng=rng, bn_mode="affine")
    names = list(proto.parameters())

    def fn(t):
        p = BottleneckParams.init(4, 8, stride=2, rng=np.random.default_rng(0),
                                  bn_mode="affine")
        p.w1, p.w2, p.w3 = t["w1"], t["w2"], t["w3"]
        p.proj_w = t["proj_w"]
        for tag, bn in (("bn1", p.bn1), ("bn2", p.bn2), ("bn3", p.bn3),
                        ("proj_bn", p.proj_bn)):
            bn.gamma = t[f"{tag}.gamma"]
            bn.beta = t[f"{tag}.beta"]
        return bottleneck_block(t["x"], p)

    inputs = {"x": x}
    for name in names:
        inputs[name] = proto.parameters()[name].data.copy()
    assert grad_check(fn, inputs) < 1e-4


# -- full network --------------------------------------------------------------


def desk_net(d=12, v=9, seed=0, **kw):
    spec = ResNet1dSpec(input_dim=d, num_classes=v, **{**DESK, **kw})
    return ResNet1dParams.init(spec, np.random.default_rng(seed), bn_mode="affine")


def install(net, t):
    net.stem_w, net.fc_w, net.fc_b = t["stem.w"], t["fc.w"], t["fc.b"]
    net.stem_bn.gamma = t["stem.bn.gamma"]
    net.stem_bn.beta = t["stem.bn.beta"]
    for s, stage in enumerate(net.stages):
        for b, blk in enumerate(stage):
            pre = f"stage{s}.block{b}."
            blk.w1, blk.w2, blk.w3 = t[pre + "w1"], t[pre + "w2"], t[pre + "w3"]
            for tag, bn in (("bn1", blk.bn1), ("bn2", blk.bn2), ("bn3", blk.bn3)):
                bn.gamma = t[pre + tag + ".gamma"]
                bn.beta = t[pre + tag + ".beta"]
            if blk.proj_w is not None:
                blk.proj_w = t[pre + "proj_w"]
                blk.proj_bn.gamma = t[pre + "proj_bn.gamma"]
                blk.proj_bn.beta = t[pre + "proj_bn.beta"]
    return net


def test_spec_validation():
    ResNet1dSpec(input_dim=4, num_classes=3)              # paper-scale plan builds
    with pytest.raises(ValueError, match="non-decreasing"):
        ResNet1dSpec(4, 3, channels=(8, 4, 16, 32, 64))
    with pytest.raises(ValueError, match="positive"):
        ResNet1dSpec(4, 3, channels=(8, 8, 16, 32, 0))
    with pytest.raises(ValueError, match="blocks"):
        ResNet1dSpec(4, 3, blocks=(1, 1, 0, 1))
    with pytest.raises(ValueError, match="stem width"):
        ResNet1dSpec(4, 3, channels=(8, 16, 32, 64))
    with pytest.raises(ValueError, match="input_dim"):
        ResNet1dSpec(0, 3)


def test_zero_input_zero_bias_scores_half():
    net = desk_net()
    scores = resnet1d_forward(np.zeros((40, 12)), net).data
    assert np.array_equal(scores, np.full(9, 0.5))


def test_desk_scale_shapes():
    net = desk_net()
    single = resnet1d_forward(np.random.default_rng(12).normal(size=(300, 12)), net)
    assert single.shape == (9,)
    assert np.all(single.data > 0) and np.all(single.data < 1)
    batch = resnet1d_forward(np.random.default_rng(13).normal(size=(2, 300, 12)), net)
    assert batch.shape == (2, 9)


def test_pointwise_config_ignores_time_extent_and_order():
    # with every kernel k=1 and no striding the network is a per-frame map
    # followed by an average pool, so frame order cannot matter
    net = desk_net(stem_kernel=1, stem_stride=1, mid_kernel=1, stage_stride=1)
    rng = np.random.default_rng(14)
    x = rng.normal(size=(6, 12))
    base = resnet1d_logits(x, net).data
    perm = resnet1d_logits(x[rng.permutation(6)], net).data
    np.testing.assert_allclose(base, perm, atol=1e-12)
    const = np.tile(x[2], (6, 1))
    np.testing.assert_allclose(resnet1d_logits(const, net).data,
                               resnet1d_logits(x[2:3], net).data, atol=1e-12)


def test_residual_perturbation_scales_linearly():
    net = desk_net(seed=15)
    rng = np.random.default_rng(16)
    x = rng.normal(size=(20, 12))
    for stage in net.stages:
        for blk in stage:
            for w in (blk.w1, blk.w2, blk.w3):
                w.data[...] = 0.0
    base = resnet1d_logits(x, net).data.copy()
    direction = {n: rng.normal(size=t.shape)
                 for n, t in net.parameters().items() if n.endswith("bn3.beta")}

    def deviation(eps):
        for n, t in net.parameters().items():
            if n in direction:
                t.data[...] = eps * direction[n]
        out = np.abs(resnet1d_logits(x, net).data - base).max()
        for n in direction:
            net.parameters()[n].data[...] = 0.0
        return out

    d_large, d_small = deviation(1e-3), deviation(1e-4)
    assert d_large > 0
    assert 4.0 < d_large / d_small < 25.0


def test_gradients_tiny_resnet():
    spec = ResNet1dSpec(input_dim=3, num_classes=2, channels=(4, 4, 4, 4, 4),
                        blocks=(1, 1, 1, 1), stem_kernel=3)
    net = ResNet1dParams.init(spec, np.random.default_rng(17), bn_mode="affine")
    rng = np.random.default_rng(18)
    x = rng.normal(size=(9, 3))
    inputs = {"x": x}
    for name, t in net.parameters().items():
        # zero-initialized betas park pre-activations exactly on the relu
        # kink (zero-padded windows of relu zeros); check at a generic point
        inputs[name] = t.data + 0.05 * rng.normal(size=t.shape)

    def fn(t):
        install(net, {n: v for n, v in t.items() if n != "x"})
        return resnet1d_logits(t["x"], net)

    assert grad_check(fn, inputs) < 1e-4
