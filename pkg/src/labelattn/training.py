"""Optimization: slanted-triangular schedules, AdamW, and the train loop.

Three parameter groups train at their own rates: the encoder and the label
attention stack each follow a slanted-triangular schedule over the total
optimizer-step budget, while the classification head keeps a constant rate.
Batches are realized by gradient accumulation: one tape spans the whole
accumulated batch (documents plus the label-description forward pass), so a
single backward produces exact batch gradients without padded batch matmuls.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .config import (
    LOSS_BCE,
    LOSS_CROSS_ENTROPY,
    LOSS_F_MEASURE,
    MULTI_CLASS,
    MULTI_LABEL,
    TrainConfig,
)
from .data import Corpus, Split, accuracy, micro_prf
from .errors import ConfigError, ContractError, InputError
from .heads import Prediction, binary_cross_entropy, classify, cross_entropy, f_measure_loss
from .label_attention import AttentionRecord, run_label_attention
from .model import (
    Model,
    build_label_matrix,
    encode,
    named_parameters,
    parameter_groups,
)
from .tensor import Tape, Tensor, backward
from .tokenizer import TokenizedText, Vocab, tokenize


def stlr(step: int, total_steps: int, lr_max: float, cut_frac: float, ratio: float) -> float:
    """Slanted-triangular rate: linear rise to lr_max over the warm-up cut,
    then linear decay back toward lr_max / ratio."""
    if total_steps < 1:
        raise ConfigError(f"total_steps must be >= 1, got {total_steps}")
    if not (0 <= step <= total_steps):
        raise ContractError(f"step {step} outside [0, {total_steps}]")
    cut = math.floor(cut_frac * total_steps)
    if cut == 0:
        raise ConfigError(
            f"warm-up of {cut_frac} over {total_steps} steps leaves no warm-up step;"
            " increase epochs or batch count"
        )
    if step < cut:
        p = step / cut
    else:
        p = 1.0 - (step - cut) / (cut * (1.0 / cut_frac - 1.0))
    p = min(max(p, 0.0), 1.0)
    return lr_max * (1.0 + p * (ratio - 1.0)) / ratio


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates and step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), t=0)


def adamw_step(
    param: Tensor,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> None:
    """One AdamW update with bias correction and decoupled weight decay."""
    g = np.asarray(grad, dtype=np.float64).reshape(-1)
    if g.size != param.size or state.m.size != param.size:
        raise ContractError(
            f"adamw_step: parameter has {param.size} entries, "
            f"grad {g.size}, state {state.m.size}"
        )
    state.t += 1
    state.m *= beta1
    state.m += (1.0 - beta1) * g
    state.v *= beta2
    state.v += (1.0 - beta2) * (g * g)
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    param.data -= lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * param.data)


def freeze_encoder(model: Model) -> None:
    """Exclude encoder parameters from optimization.

    The label matrix is still rebuilt every forward pass; gradients simply
    stop at the (now constant) encoder outputs.
    """
    for t in parameter_groups(model)["encoder"].values():
        t.requires_grad = False
        t.grad = None


def forward_document(
    model: Model,
    tokens: TokenizedText,
    label_matrix,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Prediction, list[AttentionRecord]]:
    """Encode one document and classify it against the given label matrix."""
    doc = encode(model, tokens, training=training, rng=rng)
    attended, records = run_label_attention(
        label_matrix, doc.H, model.label_blocks, model.config,
        training=training, rng=rng,
    )
    return classify(attended, model.head, model.config.mode), records


def predict_probs(
    model: Model,
    doc_tokens: list[TokenizedText],
    desc_tokens: list[TokenizedText],
) -> np.ndarray:
    """Eval-mode probabilities, one row per document."""
    lm = build_label_matrix(model, desc_tokens)
    out = np.empty((len(doc_tokens), model.config.num_labels))
    for i, tokens in enumerate(doc_tokens):
        pred, _ = forward_document(model, tokens, lm)
        out[i] = pred.probabilities.data
    return out


def hard_predictions(probs: np.ndarray, mode: str, threshold: float = 0.5) -> np.ndarray:
    if mode == MULTI_LABEL:
        return (probs >= threshold).astype(np.int64)
    return probs.argmax(axis=1).astype(np.int64)


def evaluate(
    model: Model,
    doc_tokens: list[TokenizedText],
    desc_tokens: list[TokenizedText],
    golds,
    threshold: float = 0.5,
) -> dict[str, float]:
    """Metrics for one document set: micro P/R/F1 or accuracy by task mode."""
    probs = predict_probs(model, doc_tokens, desc_tokens)
    preds = hard_predictions(probs, model.config.mode, threshold)
    if model.config.mode == MULTI_LABEL:
        p, r, f1 = micro_prf(preds, np.asarray(golds))
        return {"micro_precision": p, "micro_recall": r, "micro_f1": f1}
    return {"accuracy": accuracy(preds, np.asarray(golds))}


SELECTION_METRIC = {MULTI_LABEL: "micro_f1", MULTI_CLASS: "accuracy"}


@dataclass
class EpochRecord:
    epoch: int
    step: int
    lr_encoder: float
    lr_label_attention: float
    lr_head: float
    train_loss: float
    dev: dict[str, float]

    def to_json(self) -> str:
        return json.dumps(
            {
                "type": "epoch",
                "epoch": self.epoch,
                "step": self.step,
                "lr_encoder": self.lr_encoder,
                "lr_label_attention": self.lr_label_attention,
                "lr_head": self.lr_head,
                "train_loss": self.train_loss,
                "dev": self.dev,
            },
            sort_keys=True,
        )


@dataclass
class TrainingReport:
    metric_name: str
    total_steps: int
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = float("-inf")
    # parameter snapshot of the best epoch; not part of the serialized log
    best_state: dict = field(default_factory=dict, repr=False, compare=False)

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {
                    "type": "run",
                    "metric": self.metric_name,
                    "total_steps": self.total_steps,
                },
                sort_keys=True,
            )
        ]
        lines += [rec.to_json() for rec in self.epochs]
        lines.append(
            json.dumps(
                {
                    "type": "summary",
                    "best_epoch": self.best_epoch,
                    "best_metric": self.best_metric,
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"


def snapshot_params(model: Model) -> dict[str, np.ndarray]:
    return {p: t.data.copy() for p, t in named_parameters(model).items()}


def load_params(model: Model, state: dict[str, np.ndarray]) -> None:
    params = named_parameters(model)
    if state.keys() != params.keys():
        raise ContractError("parameter snapshot does not match this model")
    for p, data in state.items():
        params[p].data[:] = data
        params[p].grad = None


def _batches(order: np.ndarray, batch_size: int):
    for lo in range(0, len(order), batch_size):
        yield order[lo : lo + batch_size]


def _zero_grads(params: dict[str, Tensor]) -> None:
    for t in params.values():
        t.grad = None


def train(
    model: Model,
    vocab: Vocab,
    corpus: Corpus,
    data_split: Split,
    cfg: TrainConfig,
    log=None,
    stop_when=None,
) -> TrainingReport:
    """Run the full optimization loop; returns the per-epoch history.

    The best-dev parameter snapshot is kept on the report (falling back to
    the train split when the dev split is empty). `log`, when given, is
    called with each epoch record; `stop_when`, when given, is called with
    the same record and may end training early by returning True.
    """
    cfg.check_mode(corpus.task_mode)
    if model.config.mode != corpus.task_mode:
        raise ContractError(
            f"model mode {model.config.mode} != corpus mode {corpus.task_mode}"
        )
    if model.config.num_labels != corpus.num_labels:
        raise ContractError(
            f"model expects {model.config.num_labels} labels, corpus has {corpus.num_labels}"
        )
    if not data_split.train:
        raise InputError("training split is empty")

    max_len = model.config.max_seq_len
    doc_tokens = [tokenize(inst.text, vocab, max_len) for inst in corpus.instances]
    desc_tokens = [tokenize(l.description, vocab, max_len) for l in corpus.labels]
    label_order = corpus.label_ids()

    train_idx = np.asarray(data_split.train, dtype=np.int64)
    eval_idx = data_split.dev if data_split.dev else data_split.train
    eval_docs = [doc_tokens[i] for i in eval_idx]
    eval_golds = corpus.gold_matrix(eval_idx)

    steps_per_epoch = math.ceil(len(train_idx) / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    # fail fast if the schedule cannot warm up at all
    stlr(0, total_steps, 1.0, cfg.warm_up_fraction, cfg.stlr_ratio)

    params = named_parameters(model)
    trainable = {p: t for p, t in params.items() if t.requires_grad}
    group_by_path = {
        p: g for g, members in parameter_groups(model).items() for p in members
    }
    states = {p: AdamState.zeros(t.size) for p, t in trainable.items()}
    _zero_grads(params)

    rng = np.random.default_rng(cfg.seed)
    metric_name = SELECTION_METRIC[corpus.task_mode]
    report = TrainingReport(metric_name=metric_name, total_steps=total_steps)

    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = train_idx[rng.permutation(len(train_idx))]
        epoch_loss = 0.0
        lr_by_group = {}
        for batch in _batches(order, cfg.batch_size):
            lr_by_group = {
                "encoder": stlr(
                    step, total_steps, cfg.lr_encoder_max,
                    cfg.warm_up_fraction, cfg.stlr_ratio,
                ),
                "label_attention": stlr(
                    step, total_steps, cfg.lr_label_attention_max,
                    cfg.warm_up_fraction, cfg.stlr_ratio,
                ),
                "head": cfg.lr_head,
            }
            with Tape() as tape:
                lm = build_label_matrix(
                    model, desc_tokens, label_order=label_order,
                    training=True, rng=rng,
                )
                preds: list[Prediction] = []
                golds = []
                for i in batch:
                    pred, _ = forward_document(
                        model, doc_tokens[i], lm, training=True, rng=rng
                    )
                    preds.append(pred)
                    golds.append(corpus.instances[i].gold)
                if cfg.loss == LOSS_F_MEASURE:
                    loss = f_measure_loss(preds, golds)
                else:
                    per_doc = [
                        cross_entropy(pred, gold) if cfg.loss == LOSS_CROSS_ENTROPY
                        else binary_cross_entropy(pred, gold)
                        for pred, gold in zip(preds, golds)
                    ]
                    total = per_doc[0]
                    for extra in per_doc[1:]:
                        total = T.add(total, extra)
                    loss = T.scalar_mul(total, 1.0 / len(per_doc))
                backward(loss, tape)
            for path, t in trainable.items():
                if t.grad is None:
                    continue
                adamw_step(
                    t, t.grad, states[path],
                    lr=lr_by_group[group_by_path[path]],
                    beta1=cfg.beta1, beta2=cfg.beta2,
                    eps=cfg.adam_eps, weight_decay=cfg.weight_decay,
                )
                t.grad = None
            epoch_loss += loss.item() * len(batch)
            step += 1
        dev_metrics = evaluate(
            model, eval_docs, desc_tokens, eval_golds, threshold=cfg.threshold
        )
        record = EpochRecord(
            epoch=epoch,
            step=step,
            lr_encoder=lr_by_group["encoder"],
            lr_label_attention=lr_by_group["label_attention"],
            lr_head=lr_by_group["head"],
            train_loss=epoch_loss / len(train_idx),
            dev=dev_metrics,
        )
        report.epochs.append(record)
        if log is not None:
            log(record)
        if dev_metrics[metric_name] > report.best_metric:
            report.best_metric = dev_metrics[metric_name]
            report.best_epoch = epoch
            report.best_state = snapshot_params(model)
        if stop_when is not None and stop_when(record):
            break
    if not report.best_state:
        report.best_state = snapshot_params(model)
    return report
