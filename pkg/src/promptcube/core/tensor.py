"""Dense float64 tensors with a reverse-mode gradient tape.

Operations executed inside an active :class:`Tape` whose inputs require
gradients are recorded together with a vector-Jacobian closure.  Calling
:func:`backward` replays those closures in reverse order.  Outside a tape
every op is a plain numpy computation and nothing is recorded.
"""

from __future__ import annotations

import numpy as np

_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of executed ops; consumed by exactly one backward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False

    def __enter__(self):
        if self.consumed:
            raise RuntimeError("tape has already been consumed by backward")
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class no_grad:
    """Suspend recording for the enclosed block."""

    def __enter__(self):
        self._saved = list(_TAPE_STACK)
        _TAPE_STACK.clear()

    def __exit__(self, *exc):
        _TAPE_STACK.extend(self._saved)
        return False


class _Node:
    __slots__ = ("out", "inputs", "vjp", "name")

    def __init__(self, out, inputs, vjp, name):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp
        self.name = name


class Tensor:
    """A row-major float64 array that can take part in a gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_tape", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise FloatingPointError("tensor data contains NaN or Inf")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None

    # construction -------------------------------------------------------
    @classmethod
    def _from_op(cls, data: np.ndarray, inputs, vjp, name: str) -> "Tensor":
        if not np.isfinite(data).all():
            raise FloatingPointError(f"non-finite values produced by {name}")
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._tape = None
        tape = active_tape()
        needs = tape is not None and any(t.requires_grad for t in inputs)
        out.requires_grad = needs
        if needs:
            out._tape = tape
            tape.nodes.append(_Node(out, inputs, vjp, name))
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._tape is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self):
        return self.data.shape[0]

    # operator sugar -----------------------------------------------------
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
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def swapaxes(self, a: int, b: int):
        return swapaxes(self, a, b)

    @property
    def T(self):
        return swapaxes(self, -1, -2)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# elementwise arithmetic ---------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(a.data * b.data, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if np.any(b.data == 0):
        raise ZeroDivisionError("division by a tensor containing zeros")
    out = a.data / b.data

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(out, (a, b), vjp, "div")


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    out = a.data ** exponent

    def vjp(g):
        return (g * exponent * a.data ** (exponent - 1),)

    return Tensor._from_op(out, (a,), vjp, "power")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise FloatingPointError("log of non-positive value")
    return Tensor._from_op(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise FloatingPointError("sqrt of negative value")
    out = np.sqrt(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


# contractions and reductions ---------------------------------------------

def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading extents."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs operands with ndim >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner extents disagree: {a.shape} x {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as err:
        raise ValueError(f"matmul batch extents incompatible: {a.shape} x {b.shape}") from err

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            if b.ndim == 2:
                # shared weight matrix: fold the batch into one GEMM
                k = a.shape[-1]
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return Tensor._from_op(out, (a, b), vjp, "matmul")


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor._from_op(np.asarray(out), (a,), vjp, "sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis, keepdims) * (1.0 / n)


# shape manipulation -------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)
    return Tensor._from_op(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = np.ascontiguousarray(np.transpose(a.data, axes))
    return Tensor._from_op(out, (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, axes)


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    out = np.broadcast_to(a.data, shape).copy()
    return Tensor._from_op(out, (a,), lambda g: (_unbroadcast(g, a.shape),), "broadcast_to")


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    out = np.array(a.data[index], dtype=np.float64)

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return Tensor._from_op(out, (a,), vjp, "getitem")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def vjp(g):
        return tuple(
            np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:])
        )

    return Tensor._from_op(out, tuple(tensors), vjp, "concat")


# backward -------------------------------------------------------------------

def backward(loss: Tensor, tape: Tape, params=None) -> dict:
    """Replay ``tape`` in reverse from scalar ``loss``.

    Leaf gradients are accumulated into ``.grad``.  Every tensor in
    ``params`` that the graph never reached receives a zero gradient.
    Returns a mapping from leaf tensor to the gradient contributed here.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape.consumed:
        raise RuntimeError("tape has already been consumed by backward")
    if loss._tape is not tape and params is None:
        raise ValueError("loss was not produced under this tape")
    tape.consumed = True

    grads: dict[int, np.ndarray] = {}
    leaves: dict[int, Tensor] = {}
    if loss._tape is tape:
        grads[id(loss)] = np.ones_like(loss.data)
        for node in reversed(tape.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            for inp, ig in zip(node.inputs, node.vjp(g)):
                if ig is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + ig
                else:
                    grads[key] = ig
                if inp.is_leaf:
                    leaves[key] = inp
    tape.nodes = []

    result = {}
    for key, leaf in leaves.items():
        g = grads[key]
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
        result[leaf] = g
    for p in params or ():
        if p not in result:
            zero = np.zeros_like(p.data)
            if p.grad is None:
                p.grad = zero
            result[p] = zero
    return result
