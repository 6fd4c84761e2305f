"""Parameter containers, initialization, and the document/label encoder.

The encoder is a stack of self-attention transformer blocks over learned
token + position embeddings. Label descriptions go through the same encoder
and are summarized by the hidden state at the leading [CLS] position; the
rows are concatenated into the label matrix, which is rebuilt on every
training forward pass so the encoder receives label-side gradients too.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .errors import ContractError, InputError
from .label_attention import AttentionBlockParams, transformer_block
from .tensor import Tensor
from .tokenizer import TokenizedText

INIT_STD = 0.02

ENCODER_GROUP = "encoder"
LABEL_ATTENTION_GROUP = "label_attention"
HEAD_GROUP = "head"
GROUPS = (ENCODER_GROUP, LABEL_ATTENTION_GROUP, HEAD_GROUP)


@dataclass
class HeadParams:
    """Two-layer reduction shared across labels: d_h -> d_h -> logit."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def named(self) -> dict[str, Tensor]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


@dataclass
class Model:
    config: ModelConfig
    token_embedding: Tensor
    position_embedding: Tensor
    encoder_layers: list[AttentionBlockParams]
    label_blocks: list[AttentionBlockParams]
    head: HeadParams


@dataclass
class EncodedDocument:
    """Final hidden states of one document; cls is row 0 of H."""

    tokens: TokenizedText
    H: Tensor
    cls: Tensor


@dataclass
class LabelMatrix:
    """One encoder summary row per label, in fixed label order."""

    U: Tensor
    label_order: tuple

    def __post_init__(self):
        if self.U.shape[0] != len(self.label_order):
            raise ContractError(
                f"label matrix has {self.U.shape[0]} rows for "
                f"{len(self.label_order)} labels"
            )


def _trunc_normal(rng: np.random.Generator, shape, std: float = INIT_STD) -> np.ndarray:
    """Normal(0, std) resampled until everything lies within two sigma."""
    x = rng.normal(0.0, std, size=shape)
    bad = np.abs(x) > 2.0 * std
    while bad.any():
        x[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(x) > 2.0 * std
    return x


def _init_block(rng: np.random.Generator, d_h: int, ffn_mult: int) -> AttentionBlockParams:
    d_ffn = ffn_mult * d_h

    def w(*shape):
        return Tensor(_trunc_normal(rng, shape), requires_grad=True)

    return AttentionBlockParams(
        wq=w(d_h, d_h), wk=w(d_h, d_h), wv=w(d_h, d_h), wo=w(d_h, d_h),
        ffn_w1=w(d_h, d_ffn), ffn_b1=T.zeros((d_ffn,), requires_grad=True),
        ffn_w2=w(d_ffn, d_h), ffn_b2=T.zeros((d_h,), requires_grad=True),
        ln1_gain=T.ones((d_h,), requires_grad=True),
        ln1_bias=T.zeros((d_h,), requires_grad=True),
        ln2_gain=T.ones((d_h,), requires_grad=True),
        ln2_bias=T.zeros((d_h,), requires_grad=True),
    )


def init_model(config: ModelConfig, seed: int = 0) -> Model:
    """Fresh parameters: truncated-normal weights, zero biases, unit gains."""
    rng = np.random.default_rng(seed)
    d_h = config.d_h
    return Model(
        config=config,
        token_embedding=Tensor(
            _trunc_normal(rng, (config.vocab_size, d_h)), requires_grad=True
        ),
        position_embedding=Tensor(
            _trunc_normal(rng, (config.max_seq_len, d_h)), requires_grad=True
        ),
        encoder_layers=[
            _init_block(rng, d_h, config.ffn_mult) for _ in range(config.num_layers)
        ],
        label_blocks=[
            _init_block(rng, d_h, config.ffn_mult)
            for _ in range(config.label_attention_blocks)
        ],
        head=HeadParams(
            w1=Tensor(_trunc_normal(rng, (d_h, d_h)), requires_grad=True),
            b1=T.zeros((d_h,), requires_grad=True),
            w2=Tensor(_trunc_normal(rng, (d_h, 1)), requires_grad=True),
            b2=T.zeros((1,), requires_grad=True),
        ),
    )


def named_parameters(model: Model) -> dict[str, Tensor]:
    """Flat path -> tensor map; iteration order is fixed and documented
    by the checkpoint layout."""
    params: dict[str, Tensor] = {
        f"{ENCODER_GROUP}.token_embedding": model.token_embedding,
        f"{ENCODER_GROUP}.position_embedding": model.position_embedding,
    }
    for i, layer in enumerate(model.encoder_layers):
        for name, t in layer.named().items():
            params[f"{ENCODER_GROUP}.layer{i:02d}.{name}"] = t
    for i, block in enumerate(model.label_blocks):
        for name, t in block.named().items():
            params[f"{LABEL_ATTENTION_GROUP}.block{i:02d}.{name}"] = t
    for name, t in model.head.named().items():
        params[f"{HEAD_GROUP}.{name}"] = t
    return params


def group_of(path: str) -> str:
    group = path.split(".", 1)[0]
    if group not in GROUPS:
        raise ContractError(f"parameter path {path!r} has unknown group")
    return group


def parameter_groups(model: Model) -> dict[str, dict[str, Tensor]]:
    """Exact partition of the parameters into the three optimizer groups."""
    groups: dict[str, dict[str, Tensor]] = {g: {} for g in GROUPS}
    for path, t in named_parameters(model).items():
        groups[group_of(path)][path] = t
    return groups


def encode(
    model: Model,
    tokens: TokenizedText,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> EncodedDocument:
    """Run the encoder stack over one token sequence.

    Hidden states start as token embedding + position embedding and pass
    through every self-attention block; the result keeps one row per input
    position.
    """
    cfg = model.config
    n = len(tokens)
    if n > cfg.max_seq_len:
        raise InputError(
            f"sequence of length {n} exceeds max_seq_len {cfg.max_seq_len}"
        )
    bad = [i for i in tokens.ids if i >= cfg.vocab_size]
    if bad:
        raise InputError(f"token id {bad[0]} outside vocabulary of size {cfg.vocab_size}")
    h = T.add(
        T.embedding_lookup(model.token_embedding, tokens.ids),
        T.slice_rows(model.position_embedding, 0, n),
    )
    for layer in model.encoder_layers:
        h, _ = transformer_block(
            h, h, layer,
            num_heads=cfg.enc_heads,
            scale_mode="per_head",
            dropout=cfg.dropout,
            training=training,
            rng=rng,
        )
    cls = T.reshape(T.slice_rows(h, 0, 1), (cfg.d_h,))
    return EncodedDocument(tokens=tokens, H=h, cls=cls)


def embed_label(
    model: Model,
    description: TokenizedText,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Summary vector of one label description: the [CLS] row of its encoding."""
    return encode(model, description, training=training, rng=rng).cls


def build_label_matrix(
    model: Model,
    descriptions: Sequence[TokenizedText],
    label_order: Sequence | None = None,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> LabelMatrix:
    """Encode every label description and stack the summaries row-wise.

    Called inside each training step rather than cached, so the encoder
    keeps receiving gradients from the label side.
    """
    cfg = model.config
    if len(descriptions) != cfg.num_labels:
        raise ContractError(
            f"{len(descriptions)} descriptions for {cfg.num_labels} labels"
        )
    order = tuple(label_order) if label_order is not None else tuple(range(len(descriptions)))
    if len(order) != len(descriptions):
        raise ContractError("label_order length must match descriptions")
    rows = [embed_label(model, d, training=training, rng=rng) for d in descriptions]
    return LabelMatrix(U=T.concat_rows(rows), label_order=order)
