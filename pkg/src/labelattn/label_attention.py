"""Multi-head cross-attention from label embeddings onto document states.

Label rows act as queries against the document's token states (keys and
values). Each block wraps the attention in the usual residual + layer-norm
sublayers with a feed-forward network, keeps the label-matrix shape
unchanged, and records the per-head attention distributions so predictions
can be explained afterwards.

The same block math drives the document encoder's self-attention (queries,
keys, and values all come from the token states there), so the generic
pieces live here and the encoder imports them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .errors import ContractError, ShapeError
from .tensor import Tensor

EXPLANATION_STRATEGY = "last_block_mean_heads"


@dataclass
class AttentionBlockParams:
    """Projections, feed-forward weights, and layer-norm pairs of one block.

    Query/key/value projections are d_h x d_h combined matrices split into
    equal column groups per head; head width is d_h / num_heads.
    """

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    ffn_w1: Tensor
    ffn_b1: Tensor
    ffn_w2: Tensor
    ffn_b2: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor

    def named(self) -> dict[str, Tensor]:
        return {
            "wq": self.wq, "wk": self.wk, "wv": self.wv, "wo": self.wo,
            "ffn_w1": self.ffn_w1, "ffn_b1": self.ffn_b1,
            "ffn_w2": self.ffn_w2, "ffn_b2": self.ffn_b2,
            "ln1_gain": self.ln1_gain, "ln1_bias": self.ln1_bias,
            "ln2_gain": self.ln2_gain, "ln2_bias": self.ln2_bias,
        }


@dataclass(frozen=True)
class AttentionRecord:
    """Detached attention weights of one block: (heads, labels, positions).

    Every (head, label) row is a distribution over document positions.
    """

    weights: Tensor
    block_index: int

    @property
    def num_heads(self) -> int:
        return self.weights.shape[0]

    @property
    def num_labels(self) -> int:
        return self.weights.shape[1]


def attention_scale(d_h: int, num_heads: int, mode: str) -> float:
    """Score divisor: sqrt of the per-head width, or of the full width."""
    if mode == "per_head":
        return math.sqrt(d_h / num_heads)
    if mode == "full_width":
        return math.sqrt(d_h)
    raise ContractError(f"unknown attention_scale {mode!r}")


def multi_head_attention(
    q_in: Tensor,
    kv_in: Tensor,
    p: AttentionBlockParams,
    num_heads: int,
    scale_mode: str = "per_head",
) -> tuple[Tensor, list[Tensor]]:
    """Scaled dot-product attention over num_heads column groups.

    Returns the projected attention output (rows match q_in) and one
    detached (rows(q_in), rows(kv_in)) weight matrix per head.
    """
    d_h = q_in.shape[1]
    if kv_in.shape[1] != d_h:
        raise ShapeError(f"query width {d_h} != key/value width {kv_in.shape[1]}")
    if d_h % num_heads:
        raise ShapeError(f"width {d_h} not divisible by {num_heads} heads")
    d_k = d_h // num_heads
    inv_scale = 1.0 / attention_scale(d_h, num_heads, scale_mode)

    q = T.matmul(q_in, p.wq)
    k = T.matmul(kv_in, p.wk)
    v = T.matmul(kv_in, p.wv)
    heads: list[Tensor] = []
    weights: list[Tensor] = []
    for i in range(num_heads):
        lo, hi = i * d_k, (i + 1) * d_k
        qi = T.slice_cols(q, lo, hi)
        ki = T.slice_cols(k, lo, hi)
        vi = T.slice_cols(v, lo, hi)
        scores = T.scalar_mul(T.matmul(qi, T.transpose(ki)), inv_scale)
        w = T.softmax_rows(scores)
        heads.append(T.matmul(w, vi))
        weights.append(w)
    out = T.matmul(T.concat_cols(heads) if num_heads > 1 else heads[0], p.wo)
    return out, [w.detach() for w in weights]


def feed_forward(x: Tensor, p: AttentionBlockParams) -> Tensor:
    inner = T.gelu(T.add(T.matmul(x, p.ffn_w1), p.ffn_b1))
    return T.add(T.matmul(inner, p.ffn_w2), p.ffn_b2)


def transformer_block(
    q_in: Tensor,
    kv_in: Tensor,
    p: AttentionBlockParams,
    num_heads: int,
    scale_mode: str = "per_head",
    dropout: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, list[Tensor]]:
    """Attention then FFN, each as LayerNorm(x + Sublayer(x))."""
    attn, weights = multi_head_attention(q_in, kv_in, p, num_heads, scale_mode)
    attn = T.dropout(attn, dropout, training=training, rng=rng)
    a = T.layer_norm(T.add(q_in, attn), p.ln1_gain, p.ln1_bias)
    ffn = T.dropout(feed_forward(a, p), dropout, training=training, rng=rng)
    return T.layer_norm(T.add(a, ffn), p.ln2_gain, p.ln2_bias), weights


def label_attention_block(
    u_in: Tensor,
    h: Tensor,
    p: AttentionBlockParams,
    config: ModelConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
    block_index: int = 0,
) -> tuple[Tensor, AttentionRecord]:
    """One cross-attention block: labels query the document states."""
    if u_in.shape[1] != config.d_h or h.shape[1] != config.d_h:
        raise ShapeError(
            f"expected width {config.d_h}, got U {u_in.shape} and H {h.shape}"
        )
    out, weights = transformer_block(
        u_in, h, p,
        num_heads=config.label_heads,
        scale_mode=config.attention_scale,
        dropout=config.dropout,
        training=training,
        rng=rng,
    )
    stacked = Tensor(np.stack([w.view() for w in weights]))
    return out, AttentionRecord(weights=stacked, block_index=block_index)


def run_label_attention(
    u,
    h: Tensor,
    blocks: list[AttentionBlockParams],
    config: ModelConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, list[AttentionRecord]]:
    """Fold the blocks over the label matrix, collecting every record.

    Accepts a raw tensor or anything exposing the label matrix as .U.
    """
    out = getattr(u, "U", u)
    if not blocks:
        raise ContractError("run_label_attention needs at least one block")
    records: list[AttentionRecord] = []
    for i, p in enumerate(blocks):
        out, rec = label_attention_block(
            out, h, p, config, training=training, rng=rng, block_index=i
        )
        records.append(rec)
    return out, records


def explanation_scores(
    records: list[AttentionRecord],
    label: int,
    strategy: str = EXPLANATION_STRATEGY,
) -> Tensor:
    """Distribution over document positions explaining one label's score.

    Takes the last block's record and averages the label's rows across
    heads, which preserves normalization.
    """
    if strategy != EXPLANATION_STRATEGY:
        raise ContractError(f"unknown explanation strategy {strategy!r}")
    if not records:
        raise ContractError("explanation_scores needs at least one record")
    rec = records[-1]
    if not (0 <= label < rec.num_labels):
        raise ContractError(
            f"label index {label} out of range for {rec.num_labels} labels"
        )
    return Tensor(rec.weights.view()[:, label, :].mean(axis=0))
