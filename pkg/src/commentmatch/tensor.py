"""Dense float64 tensors with tape-based reverse-mode differentiation.

Everything runs in 64-bit floats so that finite-difference checks at tight
tolerances stay meaningful. Gradients are recorded on an explicit tape:
operations executed inside a ``with Tape() as tape:`` block append their
backward rules in execution order, and ``tape.backward(loss)`` replays the
tape in reverse. Outside a tape block no graph is built, which doubles as
the inference mode.

Tensors are treated as immutable after construction except for their
``grad`` buffer (and, between tapes, in-place parameter updates by an
optimizer). A tape and the tensors it records are confined to a single
logical thread.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for an operation."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        pretty = " vs ".join(str(s) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {pretty}")


class Tensor:
    """A dense float64 array plus an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._not_scalar()

    def _not_scalar(self):
        raise ShapeError("item", self.shape)

    def detach(self) -> np.ndarray:
        """Plain numpy view of the values, outside the gradient graph."""
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # arithmetic sugar; all shapes follow numpy broadcasting
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return narrow(self, key)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def max(self, axis=None, keepdims=False):
        return reduce_max(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float64))


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Execution-ordered record of backward rules for one forward pass.

    Replaying the records in reverse visits each recorded operation exactly
    once. Repeated ``backward`` calls without zeroing accumulate into the
    ``grad`` buffers.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, object]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        _TAPE_STACK.pop()
        return False

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, backward_fn) -> None:
        self._records.append((out, backward_fn))

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` for every requires_grad ancestor of ``loss``."""
        if loss.size != 1:
            raise ShapeError("backward: loss must be scalar", loss.shape)
        # Pass-local accumulation keeps repeated backward calls sound: each
        # call propagates only its own contributions, then adds them into
        # the persistent grad buffers. Entries are [array, owned] pairs;
        # borrowed arrays are only replaced, never mutated in place.
        pending: dict[Tensor, list] = {loss: [np.ones_like(loss.data), True]}
        for out, fn in reversed(self._records):
            entry = pending.pop(out, None)
            if entry is None:
                continue
            g = entry[0]
            out.grad = g if out.grad is None else out.grad + g
            fn(g, pending)
        for t, entry in pending.items():
            g = entry[0]
            t.grad = g if t.grad is None else t.grad + g


def _grad_enabled() -> bool:
    return bool(_TAPE_STACK)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(pending: dict, t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    entry = pending.get(t)
    if entry is None:
        pending[t] = [g, False]
    elif entry[1]:
        entry[0] += g
    else:
        pending[t] = [entry[0] + g, True]


def _owned_buffer(pending: dict, t: Tensor) -> np.ndarray:
    """A mutable full-shape accumulation buffer for scatter-style backward."""
    entry = pending.get(t)
    if entry is None:
        entry = [np.zeros_like(t.data), True]
        pending[t] = entry
    elif not entry[1]:
        entry[0] = np.array(entry[0], dtype=np.float64)
        entry[1] = True
    return entry[0]


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    track = _grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        _TAPE_STACK[-1].record(out, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    squeezed = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if squeezed:
        g = g.sum(axis=squeezed, keepdims=True)
    return g.reshape(shape)


def _broadcast_op(name: str, a, b, fwd, grad_a, grad_b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = fwd(a.data, b.data)
    except ValueError:
        raise ShapeError(name, a.shape, b.shape) from None

    def backward(g, pending):
        _accumulate(pending, a, _unbroadcast(grad_a(g, a.data, b.data), a.shape))
        _accumulate(pending, b, _unbroadcast(grad_b(g, a.data, b.data), b.shape))

    return _make(data, (a, b), backward)


def add(a, b) -> Tensor:
    return _broadcast_op("add", a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _broadcast_op("sub", a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    return _broadcast_op("mul", a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b) -> Tensor:
    return _broadcast_op(
        "div", a, b, np.divide, lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y)
    )


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def backward(g, pending):
        _accumulate(pending, a, -g)

    return _make(-a.data, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    data = a.data @ b.data

    def backward(g, pending):
        _accumulate(pending, a, g @ b.data.T)
        _accumulate(pending, b, a.data.T @ g)

    return _make(data, (a, b), backward)


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("transpose", a.shape)

    def backward(g, pending):
        _accumulate(pending, a, g.T)

    return _make(a.data.T, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(np.atleast_1d(shape))) from None

    def backward(g, pending):
        _accumulate(pending, a, g.reshape(a.shape))

    return _make(data, (a,), backward)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    data = np.exp(a.data)

    def backward(g, pending):
        _accumulate(pending, a, g * data)

    return _make(data, (a,), backward)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g, pending):
        _accumulate(pending, a, g * data * (1.0 - data))

    return _make(data, (a,), backward)


def maximum(a, const: float) -> Tensor:
    """Elementwise max against a scalar constant (the hinge kernel).

    At a tie the subgradient routes to the constant, i.e. d/dx is 0 where
    x == const; deterministic by construction.
    """
    a = _as_tensor(a)
    c = float(const)
    data = np.maximum(a.data, c)

    def backward(g, pending):
        _accumulate(pending, a, g * (a.data > c))

    return _make(data, (a,), backward)


def relu(a) -> Tensor:
    return maximum(a, 0.0)


def _sum_axes(axis, keepdims, shape):
    """Expand a reduced gradient back to the pre-reduction shape."""
    if axis is None:
        return lambda g: np.broadcast_to(g, shape).copy() if np.ndim(g) == 0 else np.full(shape, g)
    ax = axis if isinstance(axis, tuple) else (axis,)

    def expand(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        return np.broadcast_to(g, shape)

    return expand


def reduce_sum(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)
    expand = _sum_axes(axis, keepdims, a.shape)

    def backward(g, pending):
        _accumulate(pending, a, np.asarray(expand(g), dtype=np.float64) * np.ones_like(a.data))

    return _make(data, (a,), backward)


def reduce_mean(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else np.prod(
        [a.shape[i] for i in (axis if isinstance(axis, tuple) else (axis,))]
    )
    expand = _sum_axes(axis, keepdims, a.shape)

    def backward(g, pending):
        _accumulate(pending, a, np.asarray(expand(g), dtype=np.float64) * np.ones_like(a.data) / count)

    return _make(data, (a,), backward)


def reduce_max(a, axis=None, keepdims=False) -> Tensor:
    """Max along an axis; ties route the gradient to the first maximum."""
    a = _as_tensor(a)
    data = a.data.max(axis=axis, keepdims=keepdims)

    if axis is None:
        flat_idx = int(np.argmax(a.data))

        def backward(g, pending):
            buf = np.zeros_like(a.data)
            buf.reshape(-1)[flat_idx] = np.asarray(g).reshape(-1)[0]
            _accumulate(pending, a, buf)

    else:
        idx = np.argmax(a.data, axis=axis)

        def backward(g, pending):
            gk = g if keepdims else np.expand_dims(g, axis)
            buf = np.zeros_like(a.data)
            np.put_along_axis(buf, np.expand_dims(idx, axis), gk, axis=axis)
            _accumulate(pending, a, buf)

    return _make(data, (a,), backward)


def l2_norm(a, axis=None, keepdims=False) -> Tensor:
    """Euclidean norm along an axis; subgradient 0 at an exactly-zero slice."""
    a = _as_tensor(a)
    data = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=keepdims))
    expand = _sum_axes(axis, keepdims, a.shape)

    def backward(g, pending):
        denom = expand(np.where(data > 0.0, data, 1.0))
        mask = expand(np.where(data > 0.0, 1.0, 0.0))
        _accumulate(pending, a, np.asarray(expand(g)) * a.data * mask / denom)

    return _make(data, (a,), backward)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = [_as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("concat", ())
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(p.shape for p in parts)) from None
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g, pending):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(int(lo), int(hi))
            _accumulate(pending, p, g[tuple(sl)])

    return _make(data, parts, backward)


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = [_as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("stack", ())
    shapes = {p.shape for p in parts}
    if len(shapes) != 1:
        raise ShapeError("stack", *(p.shape for p in parts))
    data = np.stack([p.data for p in parts], axis=axis)

    def backward(g, pending):
        for i, p in enumerate(parts):
            _accumulate(pending, p, np.take(g, i, axis=axis))

    return _make(data, parts, backward)


def narrow(a, key) -> Tensor:
    """Basic slicing/indexing (ints and slices only)."""
    a = _as_tensor(a)
    data = a.data[key]

    def backward(g, pending):
        if a.requires_grad:
            _owned_buffer(pending, a)[key] += g

    return _make(data, (a,), backward)


def dot_rows(a, b) -> Tensor:
    """Row-wise dot product of two equal-shape matrices, as an (n, 1) column.

    Fused so the elementwise product is never stored on the tape.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError("dot_rows", a.shape, b.shape)
    data = np.einsum("ij,ij->i", a.data, b.data)[:, None]

    def backward(g, pending):
        _accumulate(pending, a, g * b.data)
        _accumulate(pending, b, g * a.data)

    return _make(data, (a, b), backward)


def add_n(tensors: Iterable[Tensor]) -> Tensor:
    """Sum a list of equal-shape tensors in list order."""
    parts = [_as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("add_n", ())
    shapes = {p.shape for p in parts}
    if len(shapes) != 1:
        raise ShapeError("add_n", *(p.shape for p in parts))
    data = parts[0].data.copy()
    for p in parts[1:]:
        data += p.data

    def backward(g, pending):
        for p in parts:
            _accumulate(pending, p, g)

    return _make(data, parts, backward)


def embedding_lookup(table, ids) -> Tensor:
    """Gather rows of a (V, D) table by integer id; scatter-adds on backward."""
    table = _as_tensor(table)
    if table.ndim != 2:
        raise ShapeError("embedding_lookup", table.shape)
    idx = np.asarray(ids, dtype=np.int64)
    data = table.data[idx]

    def backward(g, pending):
        if table.requires_grad:
            np.add.at(_owned_buffer(pending, table), idx, g)

    return _make(data, (table,), backward)
