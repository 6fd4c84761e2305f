"""Dense float64 tensors with reverse-mode automatic differentiation.

Storage is a flat row-major buffer plus an explicit shape. Every operation
computes its value eagerly and, when a Tape is active and the result depends
on a tensor that requires gradients, appends a backward rule to that tape.
backward() replays the rules in reverse, accumulating gradients additively;
callers are responsible for zeroing parameter gradients between steps.

Broadcasting is deliberately restricted: elementwise ops want matching
shapes, except that a length-n vector may be applied row-wise to an (m, n)
matrix (bias addition). Everything else must be spelled out, which keeps
each backward rule easy to audit.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf as _erf

from .errors import ConfigError, ContractError, InputError, ShapeError

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _prod(shape) -> int:
    n = 1
    for d in shape:
        n *= d
    return n


class Tensor:
    """A dense array with shape metadata and a gradient slot.

    data is always the flat row-major float64 buffer; grad, once populated
    by backward(), is a flat buffer of the same length. view() returns the
    shaped (zero-copy) ndarray.
    """

    __slots__ = ("shape", "data", "grad", "requires_grad")

    def __init__(self, data, shape=None, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if shape is None:
            shape = arr.shape if arr.shape else (1,)
        shape = tuple(int(d) for d in shape)
        if not shape or any(d < 1 for d in shape):
            raise ShapeError(f"tensor dimensions must all be >= 1, got {shape}")
        flat = np.ascontiguousarray(arr).reshape(-1)
        if flat.size != _prod(shape):
            raise ShapeError(
                f"data of length {flat.size} does not fill shape {shape}"
            )
        self.data = flat
        self.shape = shape
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def view(self) -> np.ndarray:
        """Shaped, zero-copy view of the flat buffer."""
        return self.data.reshape(self.shape)

    def grad_view(self) -> np.ndarray:
        if self.grad is None:
            raise ContractError("tensor has no gradient; run backward() first")
        return self.grad.reshape(self.shape)

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data[0])

    def detach(self) -> "Tensor":
        """Copy of the values with no gradient and no graph history."""
        return Tensor(self.data.copy(), self.shape, requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operators cover the common cases; everything else uses the module
    # functions directly.
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, float(other))

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_scalar(self, -float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scalar_mul(self, float(other))

    def __rmul__(self, other):
        return scalar_mul(self, float(other))

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(_prod(shape)), shape, requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(_prod(shape)), shape, requires_grad=requires_grad)


class Tape:
    """Ordered record of executed operations.

    Appending on execution keeps the list topologically sorted for free.
    A tape is confined to one thread; use it as a context manager so nested
    tapes restore correctly.
    """

    __slots__ = ("nodes",)

    def __init__(self):
        # (output, inputs, rule); rule maps the shaped output gradient to
        # one shaped gradient (or None) per input.
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPES.pop()
        return False

    def __len__(self) -> int:
        return len(self.nodes)


_TAPES: list[Tape] = []


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


def _emit(value: np.ndarray, inputs: tuple[Tensor, ...], rule: Callable) -> Tensor:
    out = Tensor(value, requires_grad=any(t.requires_grad for t in inputs))
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape.nodes.append((out, inputs, rule))
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Fill grad slots of everything the scalar loss depends on.

    Gradients accumulate additively, both across fan-out within the tape and
    across repeated backward calls; zero parameter grads between steps.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.grad is None:
        loss.grad = np.ones(1)
    else:
        loss.grad = loss.grad + 1.0
    for out, inputs, rule in reversed(tape.nodes):
        if out.grad is None:
            continue
        grads = rule(out.grad.reshape(out.shape))
        for t, g in zip(inputs, grads):
            if g is None or not t.requires_grad:
                continue
            if t.grad is None:
                t.grad = np.zeros(t.size)
            t.grad += np.asarray(g, dtype=np.float64).reshape(-1)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def _row_broadcast_ok(a: Tensor, b: Tensor) -> bool:
    return a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]


def add(a: Tensor, b: Tensor) -> Tensor:
    """a + b for equal shapes, or matrix + row vector."""
    if a.shape == b.shape:
        def rule(g):
            return g, g
        return _emit(a.view() + b.view(), (a, b), rule)
    if _row_broadcast_ok(a, b):
        def rule(g):
            return g, g.sum(axis=0)
        return _emit(a.view() + b.view()[None, :], (a, b), rule)
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape == b.shape:
        def rule(g):
            return g, -g
        return _emit(a.view() - b.view(), (a, b), rule)
    if _row_broadcast_ok(a, b):
        def rule(g):
            return g, -g.sum(axis=0)
        return _emit(a.view() - b.view()[None, :], (a, b), rule)
    raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; shapes must match exactly."""
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.view(), b.view()

    def rule(g):
        ga = g * bv if a.requires_grad else None
        gb = g * av if b.requires_grad else None
        return ga, gb

    return _emit(av * bv, (a, b), rule)


def div(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise quotient; shapes must match exactly."""
    if a.shape != b.shape:
        raise ShapeError(f"div: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.view(), b.view()

    def rule(g):
        ga = g / bv if a.requires_grad else None
        gb = -g * av / (bv * bv) if b.requires_grad else None
        return ga, gb

    return _emit(av / bv, (a, b), rule)


def scalar_mul(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def rule(g):
        return (g * c,)

    return _emit(x.view() * c, (x,), rule)


def add_scalar(x: Tensor, c: float) -> Tensor:
    def rule(g):
        return (g,)

    return _emit(x.view() + float(c), (x,), rule)


# ---------------------------------------------------------------------------
# linear algebra and layout


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product.

    The forward value uses a fixed per-element reduction order (einsum
    without optimization) instead of BLAS: equal rows of a then produce
    bitwise-equal output rows wherever they sit, which is what makes
    label-permutation equivariance exact downstream. Backward rules have
    no such obligation and use the fast path.
    """
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions disagree between {a.shape} and {b.shape}"
        )
    av, bv = a.view(), b.view()

    def rule(g):
        ga = g @ bv.T if a.requires_grad else None
        gb = av.T @ g if b.requires_grad else None
        return ga, gb

    return _emit(np.einsum("ik,kj->ij", av, bv, optimize=False), (a, b), rule)


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"transpose needs a 2-D tensor, got {x.shape}")

    def rule(g):
        return (g.T,)

    return _emit(x.view().T, (x,), rule)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(d) for d in shape)
    if _prod(shape) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} into {shape}")
    old = x.shape

    def rule(g):
        return (g.reshape(old),)

    return _emit(x.data.reshape(shape), (x,), rule)


def _as_rows(t: Tensor) -> np.ndarray:
    return t.view()[None, :] if t.ndim == 1 else t.view()


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack 1-D tensors (as single rows) and 2-D tensors along rows."""
    if not parts:
        raise ContractError("concat_rows needs at least one tensor")
    blocks = []
    width = None
    for t in parts:
        if t.ndim not in (1, 2):
            raise ShapeError(f"concat_rows supports 1-D and 2-D tensors, got {t.shape}")
        b = _as_rows(t)
        if width is None:
            width = b.shape[1]
        elif b.shape[1] != width:
            raise ShapeError(
                f"concat_rows: width mismatch, expected {width} got {b.shape[1]}"
            )
        blocks.append(b)
    offsets = np.cumsum([0] + [b.shape[0] for b in blocks])
    shapes = [t.shape for t in parts]

    def rule(g):
        return tuple(
            g[offsets[i]:offsets[i + 1]].reshape(shapes[i]) for i in range(len(parts))
        )

    return _emit(np.concatenate(blocks, axis=0), tuple(parts), rule)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ContractError("concat_cols needs at least one tensor")
    height = parts[0].shape[0]
    for t in parts:
        if t.ndim != 2 or t.shape[0] != height:
            raise ShapeError(f"concat_cols: expected 2-D with {height} rows, got {t.shape}")
    offsets = np.cumsum([0] + [t.shape[1] for t in parts])

    def rule(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _emit(np.concatenate([t.view() for t in parts], axis=1), tuple(parts), rule)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    """Rows [start, stop) along the first axis (elements, for 1-D input)."""
    if x.ndim not in (1, 2):
        raise ShapeError(f"slice_rows supports 1-D and 2-D tensors, got {x.shape}")
    if not (0 <= start < stop <= x.shape[0]):
        raise ContractError(
            f"slice_rows [{start}:{stop}] out of range for shape {x.shape}"
        )
    shape = x.shape

    def rule(g):
        gx = np.zeros(shape)
        gx[start:stop] = g
        return (gx,)

    return _emit(x.view()[start:stop].copy(), (x,), rule)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"slice_cols needs a 2-D tensor, got {x.shape}")
    if not (0 <= start < stop <= x.shape[1]):
        raise ContractError(
            f"slice_cols [{start}:{stop}] out of range for shape {x.shape}"
        )
    shape = x.shape

    def rule(g):
        gx = np.zeros(shape)
        gx[:, start:stop] = g
        return (gx,)

    return _emit(x.view()[:, start:stop].copy(), (x,), rule)


def embedding_lookup(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of table by id; gradients accumulate back per row."""
    if table.ndim != 2:
        raise ShapeError(f"embedding_lookup needs a 2-D table, got {table.shape}")
    idx = np.asarray(list(ids), dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ContractError("embedding_lookup needs a non-empty 1-D id sequence")
    rows = table.shape[0]
    bad = (idx < 0) | (idx >= rows)
    if bad.any():
        raise InputError(
            f"embedding_lookup: id {int(idx[bad][0])} outside table of {rows} rows"
        )
    shape = table.shape

    def rule(g):
        gt = np.zeros(shape)
        np.add.at(gt, idx, g)
        return (gt,)

    return _emit(table.view()[idx], (table,), rule)


# ---------------------------------------------------------------------------
# nonlinearities and reductions


def relu(x: Tensor) -> Tensor:
    xv = x.view()

    def rule(g):
        return (g * (xv > 0.0),)

    return _emit(np.maximum(xv, 0.0), (x,), rule)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) gaussian error linear unit."""
    xv = x.view()
    cdf = 0.5 * (1.0 + _erf(xv * _INV_SQRT2))

    def rule(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * xv * xv)
        return (g * (cdf + xv * pdf),)

    return _emit(xv * cdf, (x,), rule)


def sigmoid(x: Tensor) -> Tensor:
    xv = x.view()
    out = np.empty_like(xv)
    pos = xv >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xv[pos]))
    ex = np.exp(xv[~pos])
    out[~pos] = ex / (1.0 + ex)

    def rule(g):
        return (g * out * (1.0 - out),)

    return _emit(out, (x,), rule)


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), computed without overflow for large |x|."""
    xv = x.view()
    out = np.maximum(xv, 0.0) + np.log1p(np.exp(-np.abs(xv)))

    def rule(g):
        s = np.empty_like(xv)
        pos = xv >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-xv[pos]))
        ex = np.exp(xv[~pos])
        s[~pos] = ex / (1.0 + ex)
        return (g * s,)

    return _emit(out, (x,), rule)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.view())

    def rule(g):
        return (g * out,)

    return _emit(out, (x,), rule)


def log(x: Tensor) -> Tensor:
    xv = x.view()
    if (xv <= 0.0).any():
        raise InputError("log requires strictly positive entries")

    def rule(g):
        return (g / xv,)

    return _emit(np.log(xv), (x,), rule)


def tsum(x: Tensor) -> Tensor:
    """Sum of all entries, as a shape-(1,) scalar."""
    shape = x.shape

    def rule(g):
        return (np.full(shape, g.reshape(-1)[0]),)

    return _emit(np.array([x.data.sum()]), (x,), rule)


def mean(x: Tensor) -> Tensor:
    """Mean of all entries, as a shape-(1,) scalar."""
    shape, n = x.shape, x.size

    def rule(g):
        return (np.full(shape, g.reshape(-1)[0] / n),)

    return _emit(np.array([x.data.mean()]), (x,), rule)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction for stability."""
    if x.ndim != 2:
        raise ShapeError(f"softmax_rows needs a 2-D tensor, got {x.shape}")
    xv = x.view()
    shifted = xv - xv.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)

    def rule(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _emit(s, (x,), rule)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization: gain * (x - mean) / sqrt(var + eps) + bias.

    Variance uses denominator n. Rows must have at least two entries.
    """
    if x.ndim != 2:
        raise ShapeError(f"layer_norm needs a 2-D tensor, got {x.shape}")
    n = x.shape[1]
    if n < 2:
        raise ContractError(f"layer_norm needs rows of width >= 2, got {n}")
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError(
            f"layer_norm: gain {gain.shape} and bias {bias.shape} must be ({n},)"
        )
    xv, gv, bv = x.view(), gain.view(), bias.view()
    mu = xv.mean(axis=1, keepdims=True)
    xc = xv - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    istd = 1.0 / np.sqrt(var + eps)
    xhat = xc * istd

    def rule(g):
        gxhat = g * gv
        gx = None
        if x.requires_grad:
            gx = istd * (
                gxhat
                - gxhat.mean(axis=1, keepdims=True)
                - xhat * (gxhat * xhat).mean(axis=1, keepdims=True)
            )
        ggain = (g * xhat).sum(axis=0) if gain.requires_grad else None
        gbias = g.sum(axis=0) if bias.requires_grad else None
        return gx, ggain, gbias

    return _emit(xhat * gv + bv, (x, gain, bias), rule)


def dropout(
    x: Tensor,
    p: float,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Inverted dropout; the identity when p == 0 or not training."""
    if not (0.0 <= p < 1.0):
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if p == 0.0 or not training:
        return x
    if rng is None:
        raise ContractError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)

    def rule(g):
        return (g * keep,)

    return _emit(x.view() * keep, (x,), rule)
