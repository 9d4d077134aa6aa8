"""Two trainable poolings: multi-hop attention and soft-cluster residuals.

Attention pooling scores every frame per hop, softmaxes over time, and
returns the concatenated convex combinations.  The residual aggregation
assigns frames softly to learned centers and accumulates frame-minus-center
residuals per center, so the descriptor says where the frames sat relative
to the codebook.  Three assignment kernels are available; two of them are
the same function in different parameterizations, shown below.
"""

import numpy as np

from frametag import tensor as T
from frametag.agg import (
    AttentionParams,
    VladParams,
    assign,
    assign_alpha,
    assign_decoupled,
    attention_pool,
    normalize_descriptor,
    vlad_aggregate,
    vlad_cluster_loss,
)

rng = np.random.default_rng(8)
frames = rng.normal(size=(7, 4))

attn = AttentionParams.init(input_dim=4, proj_size=6, num_hops=2, rng=rng)
pooled = attention_pool(frames, attn)
print(f"attention pool: 7x4 frames -> {pooled.shape} (2 hops x 4 dims)")
zero_hop = AttentionParams(attn.w_i, T.as_tensor(np.zeros((2, 6))))
flat = attention_pool(frames, zero_hop).data[:4]
print("with zero hop weights every hop is the temporal mean:",
      np.allclose(flat, frames.mean(axis=0)), "\n")

centers = rng.normal(size=(3, 4)) * 2.0
for alpha in (0.5, 5.0, 100.0):
    a = assign_alpha(frames, centers, alpha).data
    print(f"alpha={alpha:>5}: assignment row 0 = {np.round(a[0], 4)}")
print("larger alpha hardens the softmax toward nearest-center assignment\n")

alpha = 1.7
soft = assign_alpha(frames, centers, alpha).data
flat = assign_decoupled(frames, 2 * alpha * centers,
                        -alpha * (centers ** 2).sum(axis=1)).data
print("decoupled kernel with w=2aC, b=-a|C|^2 reproduces the alpha kernel:",
      np.abs(soft - flat).max() < 1e-12, "\n")

params = VladParams.init(4, 3, "attention", rng, scheme="centers")
a = assign(frames, params)
desc = vlad_aggregate(frames, params.centers, a)
norm = normalize_descriptor(desc, num_centers=3)
blocks = norm.data.reshape(3, 4)
print(f"attention-kernel descriptor {desc.shape}, per-center block norms "
      f"after intra+global normalization: "
      f"{np.round(np.linalg.norm(blocks, axis=1), 4)}")
print("cluster compactness penalty:",
      round(float(vlad_cluster_loss(frames, params.centers, a).data), 4))
print("(each block lands at 1/sqrt(K) once both normalizations run)")
