"""Dense tensors with a reverse-mode tape.

Every differentiable primitive lives here: forward math in NumPy, backward as a
closure recorded on the active :class:`Tape`. Buffers are row-major contiguous
float32 by default; float64 is used for gradient checking. Ops never alias
mutable inputs, so recorded saved-values stay valid until the tape is dropped.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from toonflow.errors import ContractError, DimensionError, NumericsError

_FINITE_CHECKS = False


def set_finite_checks(enabled: bool) -> None:
    """Toggle NaN/Inf detection after every primitive (off by default, slow)."""
    global _FINITE_CHECKS
    _FINITE_CHECKS = enabled


class Tensor:
    """Immutable-by-convention array node. Leaves may carry an accumulated .grad."""

    __slots__ = ("data", "requires_grad", "grad", "is_leaf")

    def __init__(self, data: np.ndarray, requires_grad: bool = False):
        self.data = data
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.is_leaf = True

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        """Read-only view of the buffer; callers must not write through it."""
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # Operator sugar; scalars are promoted to same-dtype constants.
    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    def __radd__(self, other):
        return add(_wrap(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _wrap(other, self.dtype))

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    def __rmul__(self, other):
        return mul(_wrap(other, self.dtype), self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ContractError("tensor/tensor division is not a recorded primitive; multiply by a constant instead")
        return mul(self, _wrap(1.0 / other, self.dtype))

    def __neg__(self):
        return mul(self, _wrap(-1.0, self.dtype))

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, dtype=np.float32, requires_grad: bool = False) -> Tensor:
    """Build a leaf tensor from array-like data (copies into contiguous layout)."""
    arr = np.ascontiguousarray(data, dtype=dtype)
    return Tensor(arr, requires_grad=requires_grad)


def const(data, dtype=None) -> Tensor:
    arr = np.ascontiguousarray(data, dtype=dtype) if dtype is not None else np.ascontiguousarray(data)
    return Tensor(arr, requires_grad=False)


def _wrap(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


class _Entry:
    __slots__ = ("out", "parents", "bwd")

    def __init__(self, out: Tensor, parents: tuple[Tensor, ...], bwd: Callable):
        self.out = out
        self.parents = parents
        self.bwd = bwd


_ACTIVE_TAPE: "Tape | None" = None


class Tape:
    """Ordered record of primitive ops; backward replays it exactly in reverse."""

    def __init__(self):
        self.entries: list[_Entry] = []

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise ContractError("a tape is already active; training steps are single-tape")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Accumulate dLoss/dLeaf for every recorded leaf; returns the leaf gradient map.

        Gradients add into existing .grad buffers, so repeated calls accumulate.
        """
        if loss.data.shape != ():
            raise ContractError(f"backward requires a scalar loss, got shape {loss.data.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.data.dtype)}
        holders: dict[int, Tensor] = {id(loss): loss}
        leaf_grads: dict[Tensor, np.ndarray] = {}
        for entry in reversed(self.entries):
            g = grads.pop(id(entry.out), None)
            holders.pop(id(entry.out), None)
            if g is None:
                continue
            parent_grads = entry.bwd(g)
            for parent, pg in zip(entry.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
                    holders[key] = parent
        for key, g in grads.items():
            t = holders[key]
            if t.is_leaf and t.requires_grad:
                if t.grad is None:
                    t.grad = g.astype(t.data.dtype, copy=True)
                else:
                    t.grad = t.grad + g
                leaf_grads[t] = t.grad
        return leaf_grads


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Backward through the active tape (must be inside a `with Tape()` block)."""
    if _ACTIVE_TAPE is None:
        raise ContractError("backward called with no active tape")
    return _ACTIVE_TAPE.backward(loss)


def _record(out: Tensor, parents: tuple[Tensor, ...], bwd: Callable) -> Tensor:
    if _FINITE_CHECKS and not np.all(np.isfinite(out.data)):
        raise NumericsError("non-finite values produced by a primitive op")
    if _ACTIVE_TAPE is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.is_leaf = False
        _ACTIVE_TAPE.entries.append(_Entry(out, parents, bwd))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape` (inverse of NumPy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise and linear primitives
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)
    return _record(out, (a, b), lambda g: (
        _unbroadcast(g, a.data.shape) if a.requires_grad else None,
        _unbroadcast(g, b.data.shape) if b.requires_grad else None,
    ))


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)
    return _record(out, (a, b), lambda g: (
        _unbroadcast(g, a.data.shape) if a.requires_grad else None,
        _unbroadcast(-g, b.data.shape) if b.requires_grad else None,
    ))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)
    ad, bd = a.data, b.data
    return _record(out, (a, b), lambda g: (
        _unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
        _unbroadcast(g * ad, bd.shape) if b.requires_grad else None,
    ))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Stacked matrix product (..., m, k) @ (..., k, n); backward g.bT / aT.g."""
    if a.data.ndim < 2 or b.data.ndim < 2 or a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)
    ad, bd = a.data, b.data

    def bwd(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ bd.swapaxes(-1, -2), ad.shape)
        if b.requires_grad:
            gb = _unbroadcast(ad.swapaxes(-1, -2) @ g, bd.shape)
        return ga, gb

    return _record(out, (a, b), bwd)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    out = Tensor(np.ascontiguousarray(x.data.reshape(shape)))
    orig = x.data.shape
    return _record(out, (x,), lambda g: (g.reshape(orig),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    out = Tensor(np.ascontiguousarray(x.data.transpose(axes)))
    inv = np.argsort(axes)
    return _record(out, (x,), lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        pieces = np.split(g, splits, axis=axis)
        return tuple(piece if p.requires_grad else None for p, piece in zip(parts, pieces))

    return _record(out, tuple(parts), bwd)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along `axis`."""
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = Tensor(np.ascontiguousarray(x.data[idx]))

    def bwd(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        return (full,)

    return _record(out, (x,), bwd)


def row_range_add(x: Tensor, start: int, stop: int, delta: Tensor) -> Tensor:
    """Copy of x with delta added to rows [start, stop) of axis -2."""
    if x.data.shape[-1] != delta.data.shape[-1] or (stop - start) != delta.data.shape[-2]:
        raise DimensionError(f"row_range_add mismatch: x {x.data.shape}, rows [{start},{stop}), delta {delta.data.shape}")
    buf = x.data.copy()
    buf[..., start:stop, :] += delta.data
    out = Tensor(buf)

    def bwd(g):
        gd = None
        if delta.requires_grad:
            gd = _unbroadcast(g[..., start:stop, :], delta.data.shape)
        return (g if x.requires_grad else None, gd)

    return _record(out, (x, delta), bwd)


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(x.data.sum(), dtype=x.data.dtype))
    shape = x.data.shape
    return _record(out, (x,), lambda g: (np.broadcast_to(g, shape).astype(x.data.dtype),))


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    out = Tensor(np.asarray(x.data.mean(), dtype=x.data.dtype))
    shape = x.data.shape
    return _record(out, (x,), lambda g: ((np.broadcast_to(g, shape) / n).astype(x.data.dtype),))


def sum_axis(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape).astype(x.data.dtype),)

    return _record(out, (x,), bwd)


# ---------------------------------------------------------------------------
# Nonlinearities and normalization
# ---------------------------------------------------------------------------


def softmax_lastdim(x: Tensor) -> Tensor:
    """Row-stochastic softmax over the last axis, stabilized by max subtraction."""
    if x.data.shape[-1] < 1:
        raise DimensionError("softmax_lastdim requires last extent >= 1")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    out = Tensor(z)

    def bwd(g):
        dot = (g * z).sum(axis=-1, keepdims=True)
        return (z * (g - dot),)

    return _record(out, (x,), bwd)


def layernorm(x: Tensor, eps: float = 1e-6) -> Tensor:
    """Zero-mean unit-variance normalization of the last axis (no affine)."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv
    out = Tensor(y.astype(x.data.dtype, copy=False))
    n = x.data.shape[-1]

    def bwd(g):
        gy_mean = g.mean(axis=-1, keepdims=True)
        gyy_mean = (g * y).mean(axis=-1, keepdims=True)
        return ((inv * (g - gy_mean - y * gyy_mean)).astype(x.data.dtype, copy=False),)

    return _record(out, (x,), bwd)


def gelu(x: Tensor) -> Tensor:
    """tanh-approximation GELU (smooth everywhere, finite-difference friendly)."""
    c = math.sqrt(2.0 / math.pi)
    x2 = x.data * x.data
    th = np.tanh(x.data * (c + (c * 0.044715) * x2))
    y = 0.5 * x.data * (1.0 + th)
    out = Tensor(y.astype(x.data.dtype, copy=False))

    def bwd(g):
        du = c + (3 * c * 0.044715) * x2
        dy = 0.5 * (1.0 + th) + 0.5 * x.data * (1.0 - th * th) * du
        return ((g * dy).astype(x.data.dtype, copy=False),)

    return _record(out, (x,), bwd)


def silu(x: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-x.data))
    y = x.data * s
    out = Tensor(y.astype(x.data.dtype, copy=False))

    def bwd(g):
        return ((g * (s * (1.0 + x.data * (1.0 - s)))).astype(x.data.dtype, copy=False),)

    return _record(out, (x,), bwd)


# ---------------------------------------------------------------------------
# Attention, rotary rotation, embedding lookup
# ---------------------------------------------------------------------------


def attention(q: Tensor, k: Tensor, v: Tensor, scale: float,
              bias: np.ndarray | None = None,
              probs_sink: list | None = None) -> Tensor:
    """softmax(q kT * scale + bias) v over stacked (..., L, d) inputs.

    Fused primitive: probs are computed once and saved for backward. `bias` is
    an additive constant logit mask (e.g. -inf padding). If `probs_sink` is a
    list, a copy of the attention probabilities is appended (debug/tests).
    """
    if q.data.shape[-1] != k.data.shape[-1] or k.data.shape[-2] != v.data.shape[-2]:
        raise DimensionError(f"attention shape mismatch: q {q.data.shape}, k {k.data.shape}, v {v.data.shape}")
    scores = (q.data @ k.data.swapaxes(-1, -2)) * scale
    if bias is not None:
        scores = scores + bias
    scores -= scores.max(axis=-1, keepdims=True)
    np.exp(scores, out=scores)
    scores /= scores.sum(axis=-1, keepdims=True)
    probs = scores
    if probs_sink is not None:
        probs_sink.append(probs.copy())
    out = Tensor(probs @ v.data)

    def bwd(g):
        gq = gk = gv = None
        gp = g @ v.data.swapaxes(-1, -2)
        gs = probs * (gp - (gp * probs).sum(axis=-1, keepdims=True))
        if q.requires_grad:
            gq = (gs @ k.data) * scale
        if k.requires_grad:
            gk = (gs.swapaxes(-1, -2) @ q.data) * scale
        if v.requires_grad:
            gv = probs.swapaxes(-1, -2) @ g
        return gq, gk, gv

    return _record(out, (q, k, v), bwd)


def rope_rotate(x: Tensor, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    """Pairwise rotary rotation of the last axis.

    x (..., d) is viewed as d/2 complex pairs; cos/sin have shape broadcastable
    to (..., d/2). Position 0 (cos=1, sin=0) is the identity.
    """
    d = x.data.shape[-1]
    if d % 2 != 0 or cos.shape[-1] != d // 2:
        raise DimensionError(f"rope_rotate needs even last dim matching tables: x {x.data.shape}, cos {cos.shape}")
    xv = x.data.reshape(x.data.shape[:-1] + (d // 2, 2))
    x0, x1 = xv[..., 0], xv[..., 1]
    y = np.empty_like(xv)
    y[..., 0] = x0 * cos - x1 * sin
    y[..., 1] = x0 * sin + x1 * cos
    out = Tensor(np.ascontiguousarray(y.reshape(x.data.shape)))

    def bwd(g):
        gv = g.reshape(g.shape[:-1] + (d // 2, 2))
        g0, g1 = gv[..., 0], gv[..., 1]
        gx = np.empty_like(gv)
        gx[..., 0] = g0 * cos + g1 * sin
        gx[..., 1] = -g0 * sin + g1 * cos
        return (np.ascontiguousarray(gx.reshape(g.shape)),)

    return _record(out, (x,), bwd)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather table[ids]; backward scatter-adds into the table gradient."""
    if ids.min() < 0 or ids.max() >= table.data.shape[0]:
        raise ContractError(f"embedding ids out of range [0, {table.data.shape[0]})")
    out = Tensor(table.data[ids])

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _record(out, (table,), bwd)


def mse(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared error against a constant target."""
    if pred.data.shape != target.shape:
        raise DimensionError(f"mse shape mismatch: {pred.data.shape} vs {target.shape}")
    diff = pred.data - target
    out = Tensor(np.asarray((diff * diff).mean(), dtype=pred.data.dtype))
    n = pred.data.size

    def bwd(g):
        return ((2.0 / n) * g * diff,)

    return _record(out, (pred,), bwd)
