"""Classification head and training losses.

One shared two-layer feed-forward reduction maps each attended label row to
a logit; softmax turns the logits into class probabilities (multi-class) or
a sigmoid turns each into an independent label probability (multi-label).
The F-measure loss optimizes soft micro-pooled counts directly, which keeps
a useful gradient on imbalanced label sets where plain binary cross-entropy
saturates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .config import MULTI_CLASS, MULTI_LABEL
from .errors import ContractError, InputError, ShapeError
from .model import HeadParams
from .tensor import Tensor

F_MEASURE_EPS = 1e-8


@dataclass
class Prediction:
    """Per-label logits and probabilities for one document."""

    logits: Tensor
    probabilities: Tensor
    mode: str

    @property
    def num_labels(self) -> int:
        return self.logits.size


@dataclass(frozen=True)
class SoftCounts:
    """Probability-weighted confusion counts pooled over a batch."""

    tp: float
    tn: float
    fp: float
    fn: float

    @property
    def total(self) -> float:
        return self.tp + self.tn + self.fp + self.fn


def classify(o: Tensor, head: HeadParams, mode: str) -> Prediction:
    """Reduce each attended label row to a logit with shared head weights."""
    if mode not in (MULTI_CLASS, MULTI_LABEL):
        raise ContractError(f"unknown mode {mode!r}")
    if o.ndim != 2 or o.shape[1] != head.w1.shape[0]:
        raise ShapeError(
            f"classify expects rows of width {head.w1.shape[0]}, got {o.shape}"
        )
    num_labels = o.shape[0]
    z = T.gelu(T.add(T.matmul(o, head.w1), head.b1))
    logits = T.reshape(T.add(T.matmul(z, head.w2), head.b2), (num_labels,))
    if mode == MULTI_CLASS:
        probs = T.reshape(T.softmax_rows(T.reshape(logits, (1, num_labels))), (num_labels,))
    else:
        probs = T.sigmoid(logits)
    return Prediction(logits=logits, probabilities=probs, mode=mode)


def cross_entropy(pred: Prediction, gold: int) -> Tensor:
    """Negative log probability of the gold class, via log-sum-exp."""
    if pred.mode != MULTI_CLASS:
        raise ContractError(f"cross_entropy needs {MULTI_CLASS} predictions")
    if not (0 <= gold < pred.num_labels):
        raise ContractError(f"gold class {gold} out of range ({pred.num_labels} labels)")
    z = pred.logits
    shift = float(z.data.max())
    lse = T.add_scalar(T.log(T.tsum(T.exp(T.add_scalar(z, -shift)))), shift)
    return T.sub(lse, T.slice_rows(z, gold, gold + 1))


def _check_binary_gold(gold: np.ndarray, num_labels: int) -> np.ndarray:
    gold = np.asarray(gold, dtype=np.float64).reshape(-1)
    if gold.size != num_labels:
        raise ContractError(
            f"gold vector of length {gold.size} for {num_labels} labels"
        )
    if not np.isin(gold, (0.0, 1.0)).all():
        raise InputError("gold labels must be 0 or 1")
    return gold


def binary_cross_entropy(pred: Prediction, gold) -> Tensor:
    """Mean per-label log loss, evaluated on logits so large scores stay finite."""
    if pred.mode != MULTI_LABEL:
        raise ContractError(f"binary_cross_entropy needs {MULTI_LABEL} predictions")
    y = _check_binary_gold(gold, pred.num_labels)
    z = pred.logits
    # -[y log p + (1-y) log(1-p)] == softplus(z) - z*y  for p = sigmoid(z)
    return T.mean(T.sub(T.softplus(z), T.mul(z, Tensor(y))))


def f_measure_loss(
    preds: Sequence[Prediction],
    golds: Sequence,
    eps: float = F_MEASURE_EPS,
) -> Tensor:
    """One minus the mean of a positive- and a negative-class soft F score.

    Soft counts pool every (instance, label) pair of the batch: tp = sum
    p*y, fp = sum p*(1-y), fn = sum (1-p)*y, tn = sum (1-p)*(1-y). Both
    fractions share the fp+fn miss mass in their denominators; eps guards
    the all-positive and all-negative degeneracies. Fully differentiable
    through the probabilities, zero at perfect prediction, one at a total
    miss.
    """
    if not preds:
        raise ContractError("f_measure_loss needs a non-empty batch")
    if len(preds) != len(golds):
        raise ContractError(f"{len(preds)} predictions but {len(golds)} gold vectors")
    total_pos = 0.0
    total_mass = 0.0
    tp = None
    sum_p = None
    for pred, gold in zip(preds, golds):
        if pred.mode != MULTI_LABEL:
            raise ContractError(f"f_measure_loss needs {MULTI_LABEL} predictions")
        y = _check_binary_gold(gold, pred.num_labels)
        total_pos += float(y.sum())
        total_mass += y.size
        p = pred.probabilities
        spy = T.tsum(T.mul(p, Tensor(y)))
        sp = T.tsum(p)
        tp = spy if tp is None else T.add(tp, spy)
        sum_p = sp if sum_p is None else T.add(sum_p, sp)
    fp = T.sub(sum_p, tp)
    fn = T.add_scalar(T.scalar_mul(tp, -1.0), total_pos)
    tn = T.add_scalar(T.scalar_mul(fp, -1.0), total_mass - total_pos)
    miss = T.add(fp, fn)
    f_pos = T.div(T.scalar_mul(tp, 2.0), T.add_scalar(T.add(T.scalar_mul(tp, 2.0), miss), eps))
    f_neg = T.div(T.scalar_mul(tn, 2.0), T.add_scalar(T.add(T.scalar_mul(tn, 2.0), miss), eps))
    score = T.scalar_mul(T.add(f_pos, f_neg), 0.5)
    return T.add_scalar(T.scalar_mul(score, -1.0), 1.0)


def soft_counts(preds: Sequence[Prediction], golds: Sequence) -> SoftCounts:
    """Numeric (graph-free) soft confusion counts, for reporting and checks."""
    if not preds:
        raise ContractError("soft_counts needs a non-empty batch")
    tp = tn = fp = fn = 0.0
    for pred, gold in zip(preds, golds):
        y = _check_binary_gold(gold, pred.num_labels)
        p = pred.probabilities.data
        tp += float((p * y).sum())
        fp += float((p * (1.0 - y)).sum())
        fn += float(((1.0 - p) * y).sum())
        tn += float(((1.0 - p) * (1.0 - y)).sum())
    return SoftCounts(tp=tp, tn=tn, fp=fp, fn=fn)
