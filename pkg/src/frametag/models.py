"""Model zoo: every classifier maps (frames [B,L,D], mask [B,L]) to scores.

Six kinds share one interface:

  moe       masked mean pool -> mixture-of-experts head
  pmoe      mean pool -> independent MoE per label group, scattered back
  rnn       recurrent encoder (any variant) -> MoE head on the final state
  attn      multi-hop attention pooling -> MoE head
  attnvlad  soft-assignment VLAD descriptor -> MoE head (+ cluster loss)
  resnet1d  1D residual network -> sigmoid over logits

Prob-output heads train with binary cross-entropy on the probabilities; the
residual network trains on logits ("bce" stable form, or the smoothed
softmax alternative).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import functional as F
from . import tensor as T
from .agg import (AttentionParams, VladParams, assign, attention_pool,
                  normalize_descriptor, vlad_aggregate, vlad_cluster_loss)
from .conv1d import ResNet1dParams, ResNet1dSpec, resnet1d_logits
from .moe import MoeParams, VocabularyPartition, moe_forward, partition_vocabulary, pmoe_predict
from .recur import EncoderParams, EncoderSpec, encode, init_encoder
from .tensor import Tensor, as_tensor

MODEL_KINDS = ("moe", "pmoe", "rnn", "attn", "attnvlad", "resnet1d")


@dataclass
class ModelSpec:
    """Declarative model description; JSON round-trippable for checkpoints."""

    kind: str = "moe"
    mixtures: int = 2               # classification-head experts
    loss: str = "bce"               # "smoothed" is resnet1d-only
    # rnn encoder
    variant: str = "stacked"
    cell: str = "gru"
    state_dim: int = 64
    layers: int = 2
    bidirectional: bool = False
    window: int = 15
    rates: tuple = (1, 2, 4)
    hidden_mixtures: int = 2
    dropout: float = 0.0
    # attention pooling
    hops: int = 4
    attn_proj: int = 64
    # vlad
    centers: int = 10
    kernel: str = "alpha"
    scheme: str = "centers"
    vlad_alpha: float = 1.0
    cluster_weight: float = 1e-3
    vlad_norm: str = "intra+global"
    vlad_proj: int | None = None
    # pmoe
    group_width: int = 500
    partition_scheme: str = "ordered"
    partition_seed: int = 0
    # resnet1d (desk-scale default; the full plan stays configurable)
    channels: tuple = (8, 8, 16, 32, 64)
    blocks: tuple = (1, 1, 1, 1)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; "
                             f"expected one of {MODEL_KINDS}")
        if self.loss not in ("bce", "smoothed"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.loss == "smoothed" and self.kind != "resnet1d":
            raise ValueError("the smoothed softmax loss needs logits; only "
                             "resnet1d provides them")
        if self.mixtures < 1:
            raise ValueError("mixtures must be >= 1")
        self.rates = tuple(self.rates)
        self.channels = tuple(self.channels)
        self.blocks = tuple(self.blocks)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rates"] = list(self.rates)
        d["channels"] = list(self.channels)
        d["blocks"] = list(self.blocks)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown model option(s): {', '.join(unknown)}")
        return cls(**d)

    def encoder_spec(self) -> EncoderSpec:
        return EncoderSpec(variant=self.variant, cell=self.cell,
                           state_dim=self.state_dim, layers=self.layers,
                           bidirectional=self.bidirectional, window=self.window,
                           rates=self.rates, hidden_mixtures=self.hidden_mixtures,
                           dropout=self.dropout)


def masked_mean(frames: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Average over valid frames only; [B, L, D] -> [B, D]."""
    frames = np.asarray(frames, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    counts = mask.sum(axis=-1, keepdims=True)
    if np.any(counts == 0):
        raise ValueError("a record with no valid frames cannot be pooled")
    return (frames * mask[..., None]).sum(axis=-2) / counts


@dataclass
class Model:
    spec: ModelSpec
    input_dim: int
    num_classes: int
    head: MoeParams | None = None
    encoder: EncoderParams | None = None
    attn: AttentionParams | None = None
    vlad: VladParams | None = None
    resnet: ResNet1dParams | None = None
    partition: VocabularyPartition | None = None
    groups: list = field(default_factory=list)

    # -- plumbing -------------------------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        if self.head is not None:
            for name, t in self.head.parameters().items():
                out[f"head.{name}"] = t
        if self.encoder is not None:
            for name, t in self.encoder.parameters().items():
                out[f"enc.{name}"] = t
        if self.attn is not None:
            for name, t in self.attn.parameters().items():
                out[f"attn.{name}"] = t
        if self.vlad is not None:
            for name, t in self.vlad.parameters().items():
                out[f"vlad.{name}"] = t
        if self.resnet is not None:
            for name, t in self.resnet.parameters().items():
                out[f"conv.{name}"] = t
        for i, g in enumerate(self.groups):
            for name, t in g.parameters().items():
                out[f"group{i}.{name}"] = t
        return out

    # -- forward paths ----------------------------------------------------------

    def _features(self, frames, mask, training, rng):
        """Pooled representation ahead of the MoE head, plus any extra loss."""
        kind = self.spec.kind
        if kind in ("moe", "pmoe"):
            return as_tensor(masked_mean(frames, mask)), None
        if kind == "rnn":
            return encode(frames, mask, self.encoder, training=training, rng=rng), None
        if kind == "attn":
            return attention_pool(frames, self.attn, mask=mask), None
        if kind == "attnvlad":
            a = assign(frames, self.vlad, mask=mask)
            desc = vlad_aggregate(frames, self.vlad.centers, a)
            desc = normalize_descriptor(desc, self.vlad.num_centers,
                                        self.spec.vlad_norm)
            extra = None
            if self.spec.cluster_weight > 0:
                extra = T.mul(vlad_cluster_loss(frames, self.vlad.centers, a,
                                                mask=mask),
                              self.spec.cluster_weight)
            return desc, extra
        raise ValueError(f"no pooled features for kind {kind!r}")

    def training_loss(self, frames, mask, labels, rng=None) -> Tensor:
        labels = np.asarray(labels, dtype=np.float64)
        if self.spec.kind == "resnet1d":
            logits = resnet1d_logits(frames, self.resnet, training=True)
            if self.spec.loss == "smoothed":
                return F.smoothed_softmax_loss(logits, labels)
            return F.sigmoid_cross_entropy(logits, labels)
        feats, extra = self._features(frames, mask, training=True, rng=rng)
        if self.spec.kind == "pmoe":
            probs = T.concatenate([moe_forward(feats, p) for p in self.groups],
                                  axis=1)
            y = np.concatenate([labels[:, g] for g in self.partition.groups],
                               axis=1)
        else:
            probs = moe_forward(feats, self.head)
            y = labels
        loss = F.binary_cross_entropy(probs, y)
        if extra is not None:
            loss = T.add(loss, extra)
        return loss

    def predict(self, frames, mask) -> np.ndarray:
        """Per-class probabilities [B, V]; no training-mode noise."""
        with T.no_grad():
            if self.spec.kind == "resnet1d":
                return F.sigmoid(resnet1d_logits(frames, self.resnet)).data
            feats, _ = self._features(frames, mask, training=False, rng=None)
            if self.spec.kind == "pmoe":
                return pmoe_predict(feats.data, self.partition, self.groups)
            return moe_forward(feats, self.head).data


def build_model(spec: ModelSpec, input_dim: int, num_classes: int, rng) -> Model:
    """Instantiate every parameter for a spec; deterministic given the rng."""
    model = Model(spec, input_dim, num_classes)
    k = spec.kind
    if k == "moe":
        model.head = MoeParams.init(input_dim, num_classes, spec.mixtures, rng)
    elif k == "pmoe":
        model.partition = partition_vocabulary(num_classes, spec.group_width,
                                               spec.partition_scheme,
                                               spec.partition_seed)
        model.groups = [MoeParams.init(input_dim, len(g), spec.mixtures, rng)
                        for g in model.partition.groups]
    elif k == "rnn":
        context = None
        if spec.variant == "context":
            # the injected context encoder must emit frame-sized states; a
            # single stacked layer at state_dim = D satisfies that for any D.
            # it receives no gradient through the stop barrier, so it stays
            # a fixed random feature map.
            ctx_spec = EncoderSpec(variant="stacked", cell=spec.cell,
                                   state_dim=input_dim, layers=1)
            context = init_encoder(ctx_spec, input_dim, rng)
        model.encoder = init_encoder(spec.encoder_spec(), input_dim, rng,
                                     context=context)
        model.head = MoeParams.init(model.encoder.output_dim, num_classes,
                                    spec.mixtures, rng)
    elif k == "attn":
        model.attn = AttentionParams.init(input_dim, spec.attn_proj, spec.hops, rng)
        model.head = MoeParams.init(spec.hops * input_dim, num_classes,
                                    spec.mixtures, rng)
    elif k == "attnvlad":
        model.vlad = VladParams.init(input_dim, spec.centers, spec.kernel, rng,
                                     scheme=spec.scheme, alpha=spec.vlad_alpha,
                                     lam=spec.cluster_weight,
                                     proj_size=spec.vlad_proj)
        model.head = MoeParams.init(spec.centers * input_dim, num_classes,
                                    spec.mixtures, rng)
    elif k == "resnet1d":
        conv_spec = ResNet1dSpec(input_dim=input_dim, num_classes=num_classes,
                                 channels=spec.channels, blocks=spec.blocks)
        model.resnet = ResNet1dParams.init(conv_spec, rng)
    return model
