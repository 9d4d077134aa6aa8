"""Recurrent cells and the four sequence-encoder topologies.

All encoders map (frames [B,T,D], mask [B,T]) to a fixed-size state [B,out].
Padding never enters the recurrence: each step computes
h = m*h_new + (1-m)*h_old, and because 0*x is exactly 0 for finite x, a
padded step leaves the state bit-identical.  Backward sequences reverse each
row by its true length, so the same freeze rule covers both directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from . import tensor as T
from .tensor import Tensor, as_tensor, stop_gradient


def _weight(rng, shape):
    t = as_tensor(rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape))
    t.requires_grad = True
    return t


def _bias(shape):
    t = as_tensor(np.zeros(shape))
    t.requires_grad = True
    return t


@dataclass
class RnnCellParams:
    """One recurrent cell.  GRU gates are fused [z, r]; the candidate keeps
    separate input/state maps because the reset gate multiplies the state
    before its matrix.  LSTM gates are fused [i, f, g, o]."""

    kind: str
    input_dim: int
    state_dim: int
    gate_w: Tensor
    gate_b: Tensor
    cand_wx: Tensor | None = None
    cand_uh: Tensor | None = None
    cand_b: Tensor | None = None

    def __post_init__(self):
        if self.kind not in ("gru", "lstm"):
            raise ValueError(f"unknown cell kind {self.kind!r}")
        if self.state_dim < 1:
            raise ValueError("state_dim must be >= 1")
        mult = 2 if self.kind == "gru" else 4
        want = (self.input_dim + self.state_dim, mult * self.state_dim)
        if tuple(self.gate_w.shape) != want:
            raise ValueError(f"gate_w shape {self.gate_w.shape}, expected {want}")
        if self.kind == "gru" and self.cand_wx is None:
            raise ValueError("gru cell needs candidate parameters")

    @classmethod
    def init(cls, kind, input_dim, state_dim, rng):
        mult = 2 if kind == "gru" else 4
        gate_w = _weight(rng, (input_dim + state_dim, mult * state_dim))
        gate_b = _bias(mult * state_dim)
        if kind == "gru":
            return cls(kind, input_dim, state_dim, gate_w, gate_b,
                       _weight(rng, (input_dim, state_dim)),
                       _weight(rng, (state_dim, state_dim)),
                       _bias(state_dim))
        return cls(kind, input_dim, state_dim, gate_w, gate_b)

    def parameters(self) -> dict:
        out = {"gate_w": self.gate_w, "gate_b": self.gate_b}
        if self.kind == "gru":
            out.update(cand_wx=self.cand_wx, cand_uh=self.cand_uh, cand_b=self.cand_b)
        return out


def gru_step(x, h, p: RnnCellParams) -> Tensor:
    """h' = (1-z)*h + z*tanh(Wx + U(r*h)); z, r sigmoid gates on [x, h]."""
    x, h = as_tensor(x), as_tensor(h)
    if x.shape[-1] != p.input_dim or h.shape[-1] != p.state_dim:
        raise ValueError(f"gru_step dims {x.shape[-1]}/{h.shape[-1]} do not match "
                         f"cell {p.input_dim}/{p.state_dim}")
    gates = F.sigmoid(T.add(T.matmul(T.concatenate([x, h], axis=-1), p.gate_w), p.gate_b))
    hdim = p.state_dim
    z = gates[..., :hdim]
    r = gates[..., hdim:]
    cand = T.tanh(T.add(T.add(T.matmul(x, p.cand_wx),
                              T.matmul(T.mul(r, h), p.cand_uh)), p.cand_b))
    return T.add(T.mul(1.0 - z, h), T.mul(z, cand))


def lstm_step(x, state, p: RnnCellParams):
    """(h', c') with c' = f*c + i*tanh(g) and h' = o*tanh(c')."""
    h, c = state
    x, h, c = as_tensor(x), as_tensor(h), as_tensor(c)
    if x.shape[-1] != p.input_dim or h.shape[-1] != p.state_dim:
        raise ValueError(f"lstm_step dims {x.shape[-1]}/{h.shape[-1]} do not match "
                         f"cell {p.input_dim}/{p.state_dim}")
    raw = T.add(T.matmul(T.concatenate([x, h], axis=-1), p.gate_w), p.gate_b)
    hdim = p.state_dim
    i = F.sigmoid(raw[..., :hdim])
    f = F.sigmoid(raw[..., hdim:2 * hdim])
    g = T.tanh(raw[..., 2 * hdim:3 * hdim])
    o = F.sigmoid(raw[..., 3 * hdim:])
    c_new = T.add(T.mul(f, c), T.mul(i, g))
    h_new = T.mul(o, T.tanh(c_new))
    return h_new, c_new


def _reverse_index(mask: np.ndarray) -> tuple:
    """Index pair that reverses each row's valid prefix and fixes the pads."""
    b, t = mask.shape
    lengths = mask.sum(axis=1).astype(int)
    cols = np.broadcast_to(np.arange(t), (b, t))
    rev = np.where(cols < lengths[:, None], lengths[:, None] - 1 - cols, cols)
    return np.arange(b)[:, None], rev


def run_cell(frames, mask, p: RnnCellParams, reverse: bool = False):
    """Unroll one cell over a batch of masked sequences.

    Returns (states [B,T,H], final [B,H]).  With reverse=True the valid
    prefix of each row is visited back-to-front and the returned states are
    re-aligned to the original frame order.
    """
    frames = as_tensor(frames)
    mask = np.asarray(mask, dtype=np.float64)
    b, t = mask.shape
    if reverse:
        idx = _reverse_index(mask)
        frames = T.take(frames, idx)
    h = as_tensor(np.zeros((b, p.state_dim)))
    c = as_tensor(np.zeros((b, p.state_dim)))
    steps = []
    for step in range(t):
        x_t = frames[:, step, :]
        m = mask[:, step][:, None]
        if p.kind == "gru":
            h_new = gru_step(x_t, h, p)
        else:
            h_new, c_new = lstm_step(x_t, (h, c), p)
            c = T.add(T.mul(m, c_new), T.mul(1.0 - m, c))
        h = T.add(T.mul(m, h_new), T.mul(1.0 - m, h))
        steps.append(h)
    states = T.stack(steps, axis=1)
    final = states[:, t - 1, :]
    if reverse:
        states = T.take(states, idx)
    return states, final


@dataclass
class EncoderSpec:
    """Declarative shape of a sequence encoder."""

    variant: str = "stacked"
    cell: str = "gru"
    state_dim: int = 64
    layers: int = 2
    bidirectional: bool = False
    window: int = 15
    rates: tuple = (1, 2, 4)
    hidden_mixtures: int = 2
    dropout: float = 0.0
    project: bool = False
    project_dim: int | None = None

    def __post_init__(self):
        if self.variant not in ("stacked", "context", "hierarchical", "multiscale"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.cell not in ("gru", "lstm"):
            raise ValueError(f"unknown cell {self.cell!r}")
        if self.layers < 1 or self.state_dim < 1:
            raise ValueError("layers and state_dim must be >= 1")
        if self.variant == "hierarchical":
            if self.window < 1:
                raise ValueError("hierarchical encoder needs window >= 1")
            if self.bidirectional:
                raise ValueError("hierarchical encoder is one-directional")
            if self.hidden_mixtures < 1:
                raise ValueError("hidden_mixtures must be >= 1")
        if self.variant == "multiscale":
            self.rates = tuple(int(r) for r in self.rates)
            if not self.rates or any(r < 1 for r in self.rates):
                raise ValueError("rates must be distinct integers >= 1")
            if len(set(self.rates)) != len(self.rates):
                raise ValueError("rates must be distinct")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must be in [0, 1)")


@dataclass
class EncoderParams:
    """Parameters matching an EncoderSpec.

    cells layout by variant:
      stacked:      [layer][direction] -> RnnCellParams
      context:      like stacked, plus a frozen-by-construction sub-encoder
      hierarchical: [frame-level cell, segment-level cell] plus hidden MoE
      multiscale:   [rate][direction] -> RnnCellParams
    """

    spec: EncoderSpec
    input_dim: int
    cells: list
    proj_w: Tensor | None = None
    proj_b: Tensor | None = None
    moe_gate_w: Tensor | None = None
    moe_gate_b: Tensor | None = None
    moe_expert_w: Tensor | None = None
    moe_expert_b: Tensor | None = None
    context: "EncoderParams | None" = None

    def frame_output_dim(self) -> int:
        dirs = 2 if self.spec.bidirectional else 1
        return dirs * self.spec.state_dim

    @property
    def output_dim(self) -> int:
        if self.spec.project:
            return self.proj_w.shape[1]
        dirs = 2 if self.spec.bidirectional else 1
        if self.spec.variant == "multiscale":
            return len(self.spec.rates) * dirs * self.spec.state_dim
        return dirs * self.spec.state_dim

    def parameters(self) -> dict:
        out = {}

        def walk(prefix, cells):
            for i, layer in enumerate(cells):
                if isinstance(layer, RnnCellParams):
                    for k, v in layer.parameters().items():
                        out[f"{prefix}{i}.{k}"] = v
                else:
                    for d, cell in enumerate(layer):
                        for k, v in cell.parameters().items():
                            out[f"{prefix}{i}.dir{d}.{k}"] = v

        walk("cell", self.cells)
        for name in ("proj_w", "proj_b", "moe_gate_w", "moe_gate_b",
                     "moe_expert_w", "moe_expert_b"):
            t = getattr(self, name)
            if t is not None:
                out[name] = t
        if self.context is not None:
            for k, v in self.context.parameters().items():
                out[f"context.{k}"] = v
        return out


def init_encoder(spec: EncoderSpec, input_dim, rng,
                 context: EncoderParams | None = None) -> EncoderParams:
    dirs = 2 if spec.bidirectional else 1
    h = spec.state_dim

    def direction_cells(d_in):
        return [RnnCellParams.init(spec.cell, d_in, h, rng) for _ in range(dirs)]

    if spec.variant in ("stacked", "context"):
        cells = []
        d_in = input_dim
        for _ in range(spec.layers):
            cells.append(direction_cells(d_in))
            d_in = dirs * h
        if spec.variant == "context":
            if context is None:
                raise ValueError("context variant needs a context encoder")
            if context.frame_output_dim() != input_dim:
                raise ValueError(f"context encoder frame dim {context.frame_output_dim()} "
                                 f"must equal input dim {input_dim}")
    elif spec.variant == "hierarchical":
        k = spec.hidden_mixtures
        cells = [RnnCellParams.init(spec.cell, input_dim, h, rng),
                 RnnCellParams.init(spec.cell, h, h, rng)]
        wide = h * k
        return EncoderParams(spec, input_dim, cells,
                             proj_w=_weight(rng, (h, spec.project_dim or h)) if spec.project else None,
                             proj_b=_bias(spec.project_dim or h) if spec.project else None,
                             moe_gate_w=_weight(rng, (h, wide)), moe_gate_b=_bias(wide),
                             moe_expert_w=_weight(rng, (h, wide)), moe_expert_b=_bias(wide))
    else:  # multiscale
        cells = [direction_cells(input_dim) for _ in spec.rates]

    params = EncoderParams(spec, input_dim, cells, context=context)
    if spec.project:
        in_dim = (len(spec.rates) if spec.variant == "multiscale" else 1) * dirs * h
        out_dim = spec.project_dim or spec.state_dim
        params.proj_w = _weight(rng, (in_dim, out_dim))
        params.proj_b = _bias(out_dim)
    return params


def _run_layer(frames, mask, direction_cells):
    """One (possibly bidirectional) layer: per-frame states and final state."""
    states_f, final_f = run_cell(frames, mask, direction_cells[0])
    if len(direction_cells) == 1:
        return states_f, final_f
    states_b, final_b = run_cell(frames, mask, direction_cells[1], reverse=True)
    return (T.concatenate([states_f, states_b], axis=-1),
            T.concatenate([final_f, final_b], axis=-1))


def _stacked_states(frames, mask, params: EncoderParams):
    seq = as_tensor(frames)
    final = None
    for layer in params.cells:
        seq, final = _run_layer(seq, mask, layer)
    return seq, final


def _check_nonempty(mask):
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise ValueError("mask must be [B, T]")
    if np.any(mask.sum(axis=1) < 1):
        raise ValueError("empty sequence: every row needs at least one valid frame")
    return mask


def _dropout(x, rate, training, rng):
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return T.mul(x, keep)


def encode_stacked(frames, mask, params: EncoderParams) -> Tensor:
    mask = _check_nonempty(mask)
    _, final = _stacked_states(frames, mask, params)
    return _project(final, params)


def encode_with_context(frames, mask, params: EncoderParams) -> Tensor:
    """Add the context encoder's per-frame states to the input, without ever
    backpropagating into the context parameters, then encode as stacked."""
    mask = _check_nonempty(mask)
    ctx_states, _ = _stacked_states(frames, mask, params.context)
    enriched = T.add(as_tensor(frames), stop_gradient(ctx_states))
    _, final = _stacked_states(enriched, mask, params)
    return _project(final, params)


def encode_hierarchical(frames, mask, params: EncoderParams,
                        training: bool = False, rng=None) -> Tensor:
    """Window the sequence, encode windows to segment states, pass each
    through a linear-expert MoE, then encode the segment sequence."""
    mask = _check_nonempty(mask)
    frames = as_tensor(frames)
    spec = params.spec
    b, t = mask.shape
    w = spec.window
    seg_states, seg_mask = [], []
    for start in range(0, t, w):
        stop = min(start + w, t)
        _, seg_final = run_cell(frames[:, start:stop, :], mask[:, start:stop],
                                params.cells[0])
        seg_states.append(seg_final)
        seg_mask.append((mask[:, start:stop].sum(axis=1) > 0).astype(np.float64))
    segments = T.stack(seg_states, axis=1)          # [B, S, H]
    seg_mask = np.stack(seg_mask, axis=1)           # [B, S]
    segments = _dropout(segments, spec.dropout, training, rng)
    s = segments.shape[1]
    h = spec.state_dim
    flat = T.reshape(segments, (b * s, h))
    mixed = _hidden_moe(flat, params)
    segments = T.reshape(mixed, (b, s, h))
    _, final = run_cell(segments, seg_mask, params.cells[1])
    return _project(final, params)


def _hidden_moe(x, params: EncoderParams) -> Tensor:
    """Per-unit softmax gates over strictly linear experts."""
    k = params.spec.hidden_mixtures
    out = params.spec.state_dim
    n = x.shape[0]
    gates = F.softmax(T.reshape(T.add(T.matmul(x, params.moe_gate_w), params.moe_gate_b),
                                (n, out, k)), axis=-1)
    experts = T.reshape(T.add(T.matmul(x, params.moe_expert_w), params.moe_expert_b),
                        (n, out, k))
    return T.tsum(T.mul(gates, experts), axis=-1)


def encode_multiscale(frames, mask, params: EncoderParams) -> Tensor:
    """Independent encoders over stride-subsampled streams, finals concatenated."""
    mask = _check_nonempty(mask)
    frames = as_tensor(frames)
    t = mask.shape[1]
    finals = []
    for rate, layer in zip(params.spec.rates, params.cells):
        idx = np.arange(0, t, rate)
        stream = frames[:, idx, :]
        _, final = _run_layer(stream, mask[:, idx], layer)
        finals.append(final)
    return _project(T.concatenate(finals, axis=-1), params)


def _project(final, params: EncoderParams):
    if params.proj_w is None:
        return final
    return T.add(T.matmul(final, params.proj_w), params.proj_b)


def encode(frames, mask, params: EncoderParams, training: bool = False, rng=None) -> Tensor:
    variant = params.spec.variant
    if variant == "stacked":
        return encode_stacked(frames, mask, params)
    if variant == "context":
        return encode_with_context(frames, mask, params)
    if variant == "hierarchical":
        return encode_hierarchical(frames, mask, params, training=training, rng=rng)
    return encode_multiscale(frames, mask, params)
