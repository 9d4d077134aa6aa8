"""The four recurrent encoders behind one `encode` call.

stacked        plain (optionally bidirectional) GRU/LSTM layers
context        a frozen single-layer summary of the whole clip is appended
               to every frame before the trained encoder reads it
hierarchical   a frame-level cell summarizes fixed windows, a mixture head
               re-weights each summary, and a clip-level cell reads those
multiscale     parallel cells read the sequence at several strides and
               their final states are concatenated

All variants share the masking contract: zero-padded frames change nothing,
bit for bit.  The context encoder additionally freezes its summary branch
by construction, which the gradient check at the end makes visible.
"""

import numpy as np

from frametag.recur import EncoderSpec, encode, init_encoder

rng = np.random.default_rng(3)
frames = rng.normal(size=(2, 9, 6))
mask = np.ones((2, 9))
mask[1, 6:] = 0.0                      # second clip is only 6 frames long

specs = {
    "stacked": EncoderSpec(variant="stacked", state_dim=5, layers=2),
    "context": EncoderSpec(variant="context", state_dim=5, layers=1),
    "hierarchical": EncoderSpec(variant="hierarchical", state_dim=5,
                                window=3, hidden_mixtures=2),
    "multiscale": EncoderSpec(variant="multiscale", state_dim=5,
                              rates=(1, 2, 4)),
}

encoders = {}
for name, spec in specs.items():
    kwargs = {}
    if spec.variant == "context":
        kwargs["context"] = init_encoder(
            EncoderSpec(variant="stacked", state_dim=6, layers=1), 6, rng)
    encoders[name] = init_encoder(spec, 6, rng, **kwargs)
    out = encode(frames, mask, encoders[name])
    print(f"{name:13s} output {out.shape}, "
          f"params {len(encoders[name].parameters())}")

print("\npad invariance (50 appended zero frames):")
padded = np.concatenate([frames, np.zeros((2, 50, 6))], axis=1)
pmask = np.concatenate([mask, np.zeros((2, 50))], axis=1)
for name, params in encoders.items():
    a = encode(frames, mask, params).data
    b = encode(padded, pmask, params).data
    print(f"  {name:13s} bit-identical: {np.array_equal(a, b)}")

print("\nfrozen context branch:")
encode(frames, mask, encoders["context"]).sum().backward()
for pname, tensor in encoders["context"].parameters().items():
    if pname.startswith("context."):
        flow = tensor.grad is not None and np.any(tensor.grad)
        print(f"  {pname:24s} receives gradient: {bool(flow)}")
