"""Dense numpy tensors with tape-based reverse-mode differentiation.

Operations executed while a :class:`Tape` is active are appended to it in
execution order, so the tape is already topologically sorted and
:meth:`Tape.backward` simply walks it in reverse.  Outside a tape (or when no
input requires a gradient) the ops are plain numpy calls.

Broadcasting follows numpy for the elementwise ops; gradients are summed back
to the input shape.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

_state = threading.local()


def _current_tape():
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Records differentiable operations for one forward pass.

    >>> w = Tensor([1.0, 2.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = (w * w).sum()
    >>> grads = tape.backward(loss)
    >>> grads[w].tolist()
    [2.0, 4.0]
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple, Callable]] = []
        self._recorded: set[int] = set()

    def __enter__(self):
        if not hasattr(_state, "stack"):
            _state.stack = []
        _state.stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.stack.pop()
        return False

    def __len__(self):
        return len(self._nodes)

    def record(self, out: "Tensor", parents: tuple, vjp: Callable) -> None:
        self._nodes.append((out, parents, vjp))
        self._recorded.add(id(out))

    def backward(self, loss: "Tensor", set_grad: bool = True) -> "GradMap":
        """Accumulate d(loss)/d(leaf) for every leaf that requires a gradient.

        Returns a mapping tensor -> gradient array.  With ``set_grad`` the
        gradients are also stored on ``leaf.grad`` (overwriting).
        """
        if id(loss) not in self._recorded:
            raise RuntimeError("backward() called on a tensor that was not recorded on this tape")
        if loss.data.size != 1:
            raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for out, parents, vjp in reversed(self._nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            parent_grads = vjp(g)
            for p, pg in zip(parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
                if id(p) not in self._recorded:
                    leaves[key] = p
        result = GradMap()
        for key, leaf in leaves.items():
            g = grads.get(key)
            if g is None:
                continue
            g = np.asarray(g, dtype=leaf.data.dtype).reshape(leaf.shape)
            result[leaf] = g
            if set_grad:
                leaf.grad = g
        return result


class GradMap(dict):
    """dict keyed by tensor identity (tensors are unhashable by value)."""

    def __setitem__(self, key, value):
        super().__setitem__(id(key), (key, value))

    def __getitem__(self, key):
        return super().__getitem__(id(key))[1]

    def __contains__(self, key):
        return super().__contains__(id(key))

    def get(self, key, default=None):
        item = super().get(id(key))
        return default if item is None else item[1]

    def tensors(self):
        return [t for t, _ in super().values()]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind not in "fc":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    # -- basic properties ----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    # -- operator sugar ------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, reciprocal(other))
        return scale(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _make(out_data, parents: Sequence, vjp: Callable) -> Tensor:
    out = Tensor(out_data)
    tape = _current_tape()
    if tape is None:
        return out
    tparents = tuple(p for p in parents if isinstance(p, Tensor))
    if not any(p.requires_grad for p in tparents):
        return out
    out.requires_grad = True
    # vjp returns grads aligned with `parents`; drop the non-tensor slots
    mask = [isinstance(p, Tensor) for p in parents]

    def _vjp(g):
        gs = vjp(g)
        return tuple(gi for gi, m in zip(gs, mask) if m)

    tape.record(out, tparents, _vjp)
    return out


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def no_grad_needed(*xs) -> bool:
    return _current_tape() is None or not any(isinstance(x, Tensor) and x.requires_grad for x in xs)


# -- elementwise arithmetic ----------------------------------------------------


def add(a, b) -> Tensor:
    ad, bd = _data(a), _data(b)
    return _make(ad + bd, (a, b), lambda g: (unbroadcast(g, ad.shape), unbroadcast(g, bd.shape)))


def sub(a, b) -> Tensor:
    ad, bd = _data(a), _data(b)
    return _make(ad - bd, (a, b), lambda g: (unbroadcast(g, ad.shape), unbroadcast(-g, bd.shape)))


def mul(a, b) -> Tensor:
    ad, bd = _data(a), _data(b)
    return _make(
        ad * bd,
        (a, b),
        lambda g: (unbroadcast(g * bd, ad.shape), unbroadcast(g * ad, bd.shape)),
    )


def neg(a) -> Tensor:
    return _make(-_data(a), (a,), lambda g: (-g,))


def scale(a, c: float) -> Tensor:
    return _make(_data(a) * c, (a,), lambda g: (g * c,))


def reciprocal(a) -> Tensor:
    ad = _data(a)
    out = 1.0 / ad
    return _make(out, (a,), lambda g: (-g * out * out,))


def minimum(a, b) -> Tensor:
    """Elementwise minimum; ties route the gradient to ``a``."""
    ad, bd = _data(a), _data(b)
    pick_a = ad <= bd
    return _make(
        np.where(pick_a, ad, bd),
        (a, b),
        lambda g: (unbroadcast(np.where(pick_a, g, 0), ad.shape), unbroadcast(np.where(pick_a, 0, g), bd.shape)),
    )


def where(cond, a, b) -> Tensor:
    cond = np.asarray(cond, dtype=bool)
    ad, bd = _data(a), _data(b)
    return _make(
        np.where(cond, ad, bd),
        (a, b),
        lambda g: (unbroadcast(np.where(cond, g, 0), ad.shape), unbroadcast(np.where(cond, 0, g), bd.shape)),
    )


# -- elementwise nonlinearities ---------------------------------------------------


def relu(a) -> Tensor:
    out = np.maximum(_data(a), 0)
    return _make(out, (a,), lambda g: (g * (out > 0),))


def sigmoid(a) -> Tensor:
    out = _sigmoid(_data(a))
    return _make(out, (a,), lambda g: (g * out * (1 - out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # avoids exp overflow for large |x|
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(np.result_type(x, np.float32), copy=False)


def tanh(a) -> Tensor:
    out = np.tanh(_data(a))
    return _make(out, (a,), lambda g: (g * (1 - out * out),))


def atanh(a) -> Tensor:
    ad = _data(a)
    return _make(np.arctanh(ad), (a,), lambda g: (g / (1 - ad * ad),))


def exp(a) -> Tensor:
    out = np.exp(_data(a))
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    ad = _data(a)
    return _make(np.log(ad), (a,), lambda g: (g / ad,))


def softplus(a) -> Tensor:
    """log(1 + e^a), computed without overflow."""
    ad = _data(a)
    out = np.logaddexp(0, ad)
    return _make(out, (a,), lambda g: (g * _sigmoid(ad),))


def tabs(a) -> Tensor:
    ad = _data(a)
    return _make(np.abs(ad), (a,), lambda g: (g * np.sign(ad),))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; the gradient is zero where clamping was active."""
    ad = _data(a)
    inside = (ad >= lo) & (ad <= hi)
    return _make(np.clip(ad, lo, hi), (a,), lambda g: (g * inside,))


# -- linear algebra and reductions ----------------------------------------------


def matmul(a, b) -> Tensor:
    """``a @ b`` for ``a`` of shape (..., k) and a 2-D ``b`` of shape (k, m)."""
    ad, bd = _data(a), _data(b)
    if bd.ndim != 2:
        raise ValueError(f"matmul expects a 2-D right operand, got {bd.shape}")
    if ad.shape[-1] != bd.shape[0]:
        raise ValueError(f"matmul shape mismatch: {ad.shape} @ {bd.shape}")

    def vjp(g):
        ga = g @ bd.T
        gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, bd.shape[1])
        return ga, gb

    return _make(ad @ bd, (a, b), vjp)


def tsum(a, axis=None) -> Tensor:
    ad = _data(a)
    out = ad.sum(axis=axis)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, ad.shape).copy(),)

    return _make(out, (a,), vjp)


def mean(a, axis=None) -> Tensor:
    ad = _data(a)
    n = ad.size if axis is None else np.prod([ad.shape[i] for i in np.atleast_1d(axis)])
    return scale(tsum(a, axis), 1.0 / n)


def logsumexp(a, axis: int = -1) -> Tensor:
    """Exact Jacobian-logarithm reduction (max-star over an axis)."""
    ad = _data(a)
    m = ad.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0)
    e = np.exp(ad - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (np.log(s) + m).squeeze(axis)

    def vjp(g):
        return (np.expand_dims(g, axis) * (e / s),)

    return _make(out, (a,), vjp)


def tmax(a, axis: int = -1) -> Tensor:
    """Max over an axis (max-log approximation); gradient goes to the first argmax."""
    ad = _data(a)
    idx = ad.argmax(axis=axis)
    out = np.take_along_axis(ad, np.expand_dims(idx, axis), axis).squeeze(axis)

    def vjp(g):
        ga = np.zeros_like(ad)
        np.put_along_axis(ga, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis)
        return (ga,)

    return _make(out, (a,), vjp)


# -- shape manipulation -------------------------------------------------------


def reshape(a, shape) -> Tensor:
    ad = _data(a)
    return _make(ad.reshape(shape), (a,), lambda g: (g.reshape(ad.shape),))


def transpose(a, axes=None) -> Tensor:
    ad = _data(a)
    inv = None if axes is None else np.argsort(axes)
    return _make(np.transpose(ad, axes), (a,), lambda g: (np.transpose(g, inv),))


def concat(xs: Iterable, axis: int = -1) -> Tensor:
    xs = list(xs)
    datas = [_data(x) for x in xs]
    out = np.concatenate(datas, axis=axis)
    bounds = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, xs, vjp)


def stack(xs: Iterable, axis: int = 0) -> Tensor:
    xs = list(xs)
    out = np.stack([_data(x) for x in xs], axis=axis)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return _make(out, xs, vjp)


def _is_basic_index(key) -> bool:
    keys = key if isinstance(key, tuple) else (key,)
    return all(k is None or k is Ellipsis or isinstance(k, (int, np.integer, slice)) for k in keys)


def getitem(a, key) -> Tensor:
    ad = _data(a)
    basic = _is_basic_index(key)

    def vjp(g):
        ga = np.zeros_like(ad)
        if basic:
            ga[key] = g
        else:
            np.add.at(ga, key, g)
        return (ga,)

    return _make(ad[key], (a,), vjp)


def take(a, idx, axis: int = 0) -> Tensor:
    """Gather along ``axis`` (indices may repeat)."""
    ad = _data(a)
    idx = np.asarray(idx)

    def vjp(g):
        ga = np.zeros_like(ad)
        gm = np.moveaxis(ga, axis, 0)
        gg = np.moveaxis(g, axis, 0)
        if idx.ndim == 1 and idx.size:
            # stable sort + reduceat: deterministic and much faster than add.at
            order = np.argsort(idx, kind="stable")
            uniq, starts = np.unique(idx[order], return_index=True)
            gm[uniq] += np.add.reduceat(gg[order], starts, axis=0)
        else:
            np.add.at(gm, idx, gg)
        return (ga,)

    return _make(np.take(ad, idx, axis=axis), (a,), vjp)


def table_sum(a, table: np.ndarray) -> Tensor:
    """Sum rows of ``a`` selected by a padded index table.

    ``out[i] = sum_j a[table[i, j]]`` over entries ``table[i, j] >= 0``, added
    in column order ``j`` so the reduction order is fixed by the table.  Each
    valid index must appear at most once in the whole table.
    """
    ad = _data(a)
    table = np.asarray(table)
    n, width = table.shape
    out = np.zeros((n,) + ad.shape[1:], dtype=ad.dtype)
    cols = []
    for j in range(width):
        rows = np.flatnonzero(table[:, j] >= 0)
        src = table[rows, j]
        cols.append((rows, src))
        out[rows] += ad[src]

    def vjp(g):
        ga = np.zeros_like(ad)
        for rows, src in cols:
            ga[src] = g[rows]
        return (ga,)

    return _make(out, (a,), vjp)


def table_mean(a, table: np.ndarray) -> Tensor:
    """Mean over the valid entries of each table row; rows without entries give 0."""
    counts = (np.asarray(table) >= 0).sum(axis=1)
    inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)
    s = table_sum(a, table)
    inv = inv.astype(s.dtype).reshape((-1,) + (1,) * (s.ndim - 1))
    return mul(s, inv)
