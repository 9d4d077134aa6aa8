"""1D residual convolutional classifier over the frame sequence.

The sequence is treated as a 1D signal whose channel axis is the feature
dim: convolutions slide over time only.  Blocks are pre-activation-free
bottlenecks in the ResNet style (1x1 down, 3x1, 1x1 up, projection shortcut
where shape changes), the head is global average pooling into a sigmoid
classifier.  Everything accepts [T, C] or [B, T, C].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functional as F
from . import tensor as T
from .tensor import Tensor, as_tensor


def conv1d(x, kernel, stride=1, pad=0, bias=None) -> Tensor:
    """Cross-correlation along time: kernel [k, Cin, Cout], x [., T, Cin]."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    k, cin, cout = kernel.shape
    if k < 1:
        raise ValueError("kernel size must be >= 1")
    if x.shape[-1] != cin:
        raise ValueError(f"input has {x.shape[-1]} channels, kernel expects {cin}")
    t = x.shape[-2]
    t_out = (t + 2 * pad - k) // stride + 1
    if t_out < 1:
        raise ValueError(f"output length {t_out} < 1 for T={t}, k={k}, "
                         f"stride={stride}, pad={pad}")
    if pad:
        zeros = np.zeros(x.shape[:-2] + (pad, cin))
        x = T.concatenate([zeros, x, zeros], axis=-2)
    starts = np.arange(t_out) * stride
    windows = x[..., starts[:, None] + np.arange(k), :]      # [., T', k, Cin]
    flat = T.reshape(windows, windows.shape[:-2] + (k * cin,))
    out = T.matmul(flat, T.reshape(kernel, (k * cin, cout)))
    if bias is not None:
        out = T.add(out, as_tensor(bias))
    return out


@dataclass
class BatchNormParams:
    """Per-channel normalization with learned affine.

    mode "stats" is the usual batch-norm: batch statistics while training,
    running averages at eval.  mode "affine" skips normalization entirely
    (y = gamma * x + beta), which keeps tests deterministic.
    """

    gamma: Tensor
    beta: Tensor
    mode: str = "stats"
    eps: float = 1e-5
    momentum: float = 0.1
    running_mean: np.ndarray = field(default=None)
    running_var: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.mode not in ("stats", "affine"):
            raise ValueError(f"unknown batchnorm mode {self.mode!r}")
        c = self.gamma.shape[0]
        if self.running_mean is None:
            self.running_mean = np.zeros(c)
        if self.running_var is None:
            self.running_var = np.ones(c)

    @classmethod
    def init(cls, channels, mode="stats"):
        gamma = as_tensor(np.ones(channels))
        beta = as_tensor(np.zeros(channels))
        gamma.requires_grad = beta.requires_grad = True
        return cls(gamma, beta, mode)

    def parameters(self) -> dict:
        return {"gamma": self.gamma, "beta": self.beta}


def batchnorm(x, p: BatchNormParams, training=False) -> Tensor:
    x = as_tensor(x)
    if p.mode == "affine":
        return T.add(T.mul(x, p.gamma), p.beta)
    axes = tuple(range(x.ndim - 1))                          # all but channels
    if training:
        mu = T.tmean(x, axis=axes, keepdims=True)
        centered = T.add(x, T.mul(mu, -1.0))
        var = T.tmean(T.mul(centered, centered), axis=axes, keepdims=True)
        n = p.momentum
        p.running_mean = (1 - n) * p.running_mean + n * mu.data.reshape(-1)
        p.running_var = (1 - n) * p.running_var + n * var.data.reshape(-1)
        root = T.power(T.add(var, p.eps), -0.5)
        return T.add(T.mul(T.mul(centered, root), p.gamma), p.beta)
    xhat = T.mul(T.add(x, -p.running_mean),
                 1.0 / np.sqrt(p.running_var + p.eps))
    return T.add(T.mul(xhat, p.gamma), p.beta)


def _conv_weight(rng, k, cin, cout):
    w = as_tensor(rng.normal(0.0, 1.0 / np.sqrt(k * cin), size=(k, cin, cout)))
    w.requires_grad = True
    return w


@dataclass
class BottleneckParams:
    """1x1 down to cout//4, 3x1 (carries the stride), 1x1 back up."""

    w1: Tensor
    bn1: BatchNormParams
    w2: Tensor
    bn2: BatchNormParams
    w3: Tensor
    bn3: BatchNormParams
    stride: int = 1
    mid_kernel: int = 3
    proj_w: Tensor | None = None
    proj_bn: BatchNormParams | None = None

    @classmethod
    def init(cls, cin, cout, stride, rng, bn_mode="stats", mid_kernel=3):
        mid = max(1, cout // 4)
        kw = {}
        if stride != 1 or cin != cout:
            kw["proj_w"] = _conv_weight(rng, 1, cin, cout)
            kw["proj_bn"] = BatchNormParams.init(cout, bn_mode)
        return cls(_conv_weight(rng, 1, cin, mid), BatchNormParams.init(mid, bn_mode),
                   _conv_weight(rng, mid_kernel, mid, mid),
                   BatchNormParams.init(mid, bn_mode),
                   _conv_weight(rng, 1, mid, cout), BatchNormParams.init(cout, bn_mode),
                   stride=stride, mid_kernel=mid_kernel, **kw)

    def parameters(self) -> dict:
        out = {"w1": self.w1, "w2": self.w2, "w3": self.w3}
        for tag, bn in (("bn1", self.bn1), ("bn2", self.bn2), ("bn3", self.bn3)):
            for name, t in bn.parameters().items():
                out[f"{tag}.{name}"] = t
        if self.proj_w is not None:
            out["proj_w"] = self.proj_w
            for name, t in self.proj_bn.parameters().items():
                out[f"proj_bn.{name}"] = t
        return out


def bottleneck_block(x, p: BottleneckParams, training=False) -> Tensor:
    x = as_tensor(x)
    cin, cout = p.w1.shape[1], p.w3.shape[2]
    if p.proj_w is None and (p.stride != 1 or cin != cout):
        raise ValueError("shape changes across the block but no projection present")
    h = T.relu(batchnorm(conv1d(x, p.w1), p.bn1, training))
    h = T.relu(batchnorm(conv1d(h, p.w2, stride=p.stride, pad=p.mid_kernel // 2),
                         p.bn2, training))
    h = batchnorm(conv1d(h, p.w3), p.bn3, training)
    if p.proj_w is not None:
        shortcut = batchnorm(conv1d(x, p.proj_w, stride=p.stride), p.proj_bn, training)
    else:
        shortcut = x
    return T.relu(T.add(h, shortcut))


@dataclass
class ResNet1dSpec:
    """Channel plan: first entry is the stem width, the rest are stages."""

    input_dim: int
    num_classes: int
    channels: tuple = (512, 512, 1024, 2048, 4096)
    blocks: tuple = (3, 4, 6, 3)
    stem_kernel: int = 7
    stem_stride: int = 2
    mid_kernel: int = 3
    stage_stride: int = 2           # downsampling entering stages 2..4

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.blocks = tuple(self.blocks)
        if len(self.channels) != len(self.blocks) + 1:
            raise ValueError("need one stem width plus one channel count per stage")
        if any(c < 1 for c in self.channels):
            raise ValueError("channels must be positive")
        if any(a > b for a, b in zip(self.channels, self.channels[1:])):
            raise ValueError("channels must be non-decreasing across stages")
        if any(b < 1 for b in self.blocks):
            raise ValueError("blocks per stage must be >= 1")
        if min(self.stem_kernel, self.mid_kernel,
               self.stem_stride, self.stage_stride) < 1:
            raise ValueError("kernel sizes and strides must be >= 1")
        if self.input_dim < 1 or self.num_classes < 1:
            raise ValueError("input_dim and num_classes must be >= 1")


@dataclass
class ResNet1dParams:
    spec: ResNet1dSpec
    stem_w: Tensor
    stem_bn: BatchNormParams
    stages: list                    # list of lists of BottleneckParams
    fc_w: Tensor
    fc_b: Tensor

    @classmethod
    def init(cls, spec: ResNet1dSpec, rng, bn_mode="stats"):
        stem_w = _conv_weight(rng, spec.stem_kernel, spec.input_dim, spec.channels[0])
        stem_bn = BatchNormParams.init(spec.channels[0], bn_mode)
        stages, cin = [], spec.channels[0]
        for cout, depth in zip(spec.channels[1:], spec.blocks):
            stage = []
            for i in range(depth):
                stride = spec.stage_stride if (i == 0 and len(stages) > 0) else 1
                stage.append(BottleneckParams.init(cin, cout, stride, rng,
                                                   bn_mode, spec.mid_kernel))
                cin = cout
            stages.append(stage)
        fc_w = as_tensor(rng.normal(0.0, 1.0 / np.sqrt(cin),
                                    size=(cin, spec.num_classes)))
        fc_b = as_tensor(np.zeros(spec.num_classes))
        fc_w.requires_grad = fc_b.requires_grad = True
        return cls(spec, stem_w, stem_bn, stages, fc_w, fc_b)

    def parameters(self) -> dict:
        out = {"stem.w": self.stem_w, "fc.w": self.fc_w, "fc.b": self.fc_b}
        for name, t in self.stem_bn.parameters().items():
            out[f"stem.bn.{name}"] = t
        for s, stage in enumerate(self.stages):
            for b, block in enumerate(stage):
                for name, t in block.parameters().items():
                    out[f"stage{s}.block{b}.{name}"] = t
        return out


def resnet1d_logits(x, p: ResNet1dParams, training=False) -> Tensor:
    """Stem conv -> stages -> global average pool -> linear.  No sigmoid."""
    x = as_tensor(x)
    if x.shape[-1] != p.spec.input_dim:
        raise ValueError(f"input dim {x.shape[-1]} != spec {p.spec.input_dim}")
    h = T.relu(batchnorm(conv1d(x, p.stem_w, stride=p.spec.stem_stride,
                                pad=p.spec.stem_kernel // 2),
                         p.stem_bn, training))
    for stage in p.stages:
        for block in stage:
            h = bottleneck_block(h, block, training)
    pooled = T.tmean(h, axis=-2)
    return T.add(T.matmul(pooled, p.fc_w), p.fc_b)


def resnet1d_forward(x, p: ResNet1dParams, training=False) -> Tensor:
    """Per-class scores in (0, 1)."""
    return F.sigmoid(resnet1d_logits(x, p, training))
