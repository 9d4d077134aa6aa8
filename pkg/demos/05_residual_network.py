"""A 1-D residual network over the frame axis.

Bottleneck blocks (1x1 reduce, 3x1 carry, 1x1 expand, shortcut add) stack
into four stages; global average pooling over the surviving frames feeds a
sigmoid classifier.  The desk-scale plan below keeps the stage layout of
the full-scale design with channel counts cut to run anywhere.
"""

import numpy as np

from frametag import tensor as T
from frametag.conv1d import (
    BottleneckParams,
    ResNet1dParams,
    ResNet1dSpec,
    bottleneck_block,
    conv1d,
    resnet1d_forward,
)

rng = np.random.default_rng(12)

x = rng.normal(size=(10, 3))
k_ident = np.zeros((1, 3, 3))
k_ident[0] = np.eye(3)
print("k=1 identity kernel reproduces the input:",
      np.array_equal(conv1d(x, k_ident).data, x))

block = BottleneckParams.init(cin=3, cout=6, stride=2,
                              rng=rng, bn_mode="affine")
y = bottleneck_block(T.as_tensor(x), block)
print(f"stride-2 bottleneck: 10 frames -> {y.shape[0]}, "
      f"channels 3 -> {y.shape[1]}")

spec = ResNet1dSpec(input_dim=3, num_classes=9,
                    channels=(8, 8, 16, 32, 64), blocks=(1, 1, 1, 1))
net = ResNet1dParams.init(spec, np.random.default_rng(1), bn_mode="affine")
sizes = {name: t.size for name, t in net.parameters().items()}
print(f"\ndesk plan: {sum(sizes.values())} parameters in {len(sizes)} arrays")

probs = resnet1d_forward(rng.normal(size=(2, 40, 3)), net)
print("batch of two 40-frame clips ->", probs.shape)
print("probabilities strictly inside (0, 1):",
      bool((probs.data > 0).all() and (probs.data < 1).all()))
print("zero input scores exactly 0.5 everywhere "
      "(zero residuals, zero biases):",
      np.array_equal(resnet1d_forward(np.zeros((5, 3)), net).data,
                     np.full(9, 0.5)))
