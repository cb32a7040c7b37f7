"""Dense f64 tensors with tape-based reverse-mode differentiation.

A :class:`Tape` records every primitive applied while it is active.  Each
record keeps the op name, its input tensors, its output tensor and a
vector-Jacobian closure holding whatever the backward rule needs.  Nothing
is recorded when no tape is active, which gives a cheap no-grad mode for
evaluation and sampling.

    with Tape() as tape:
        loss = nc.mse(nc.softmax(W @ x), target)
    grads = tape.backward(loss)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import NumericError

__all__ = [
    "Tensor", "Param", "Tape", "ShapeError", "NumericError",
    "as_tensor", "matmul", "add", "sub", "mul", "neg", "concat", "getitem",
    "reshape", "transpose", "sigmoid", "tanh", "exp", "log", "softmax",
    "logsumexp", "sum", "mean", "mse", "square", "clamp", "layer_norm",
]


class ShapeError(ValueError):
    """Incompatible operand shapes for a primitive."""

    def __init__(self, op: str, *shapes: tuple[int, ...], detail: str = ""):
        self.op = op
        self.shapes = shapes
        msg = f"{op}: incompatible shapes {', '.join(str(s) for s in shapes)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class Tensor:
    __slots__ = ("data", "requires_grad", "name")
    # let ndarray <op> Tensor fall through to our reflected operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return transpose(self)


class Param(Tensor):
    """A named trainable leaf with its own gradient accumulator."""

    __slots__ = ("grad",)

    def __init__(self, data, name: str):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.shape})"


@dataclass
class TapeEntry:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]


_ACTIVE: list["Tape"] = []


@dataclass
class Tape:
    entries: list[TapeEntry] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.entries)

    def backward(self, loss: Tensor, accumulate: bool = True) -> dict[Param, np.ndarray]:
        """Propagate d(loss) back through the recorded entries.

        Returns the gradient of every Param reached; with ``accumulate`` the
        gradients are also added into ``param.grad``.  The tape is cleared
        afterwards.
        """
        if loss.data.size != 1:
            raise ShapeError("backward", loss.shape, detail="loss must be scalar")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        params: dict[int, Param] = {}
        for entry in reversed(self.entries):
            g = grads.pop(id(entry.output), None)
            if g is None:
                continue
            for inp, gi in zip(entry.inputs, entry.vjp(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if isinstance(inp, Param):
                    params[key] = inp
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi
        out = {}
        for key, p in params.items():
            g = grads[key]
            out[p] = g
            if accumulate:
                p.grad = p.grad + g
        self.entries.clear()
        return out


def _tape() -> Tape | None:
    return _ACTIVE[-1] if _ACTIVE else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _finish(op: str, out: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    if not np.isfinite(out).all():
        raise NumericError(f"{op}: non-finite output")
    tape = _tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    res = Tensor(out, requires_grad=needs)
    if needs:
        tape.entries.append(TapeEntry(op, inputs, res, vjp))
    return res


def _swap(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    A, B = a.data, b.data
    if A.ndim < 2 or B.ndim < 2 or A.shape[:-2] != B.shape[:-2] or A.shape[-1] != B.shape[-2]:
        raise ShapeError("matmul", A.shape, B.shape)
    return _finish("matmul", A @ B, (a, b),
                   lambda g: (g @ _swap(B) if a.requires_grad else None,
                              _swap(A) @ g if b.requires_grad else None))


def _bias_shape_ok(A: np.ndarray, B: np.ndarray) -> bool:
    return B.ndim == 1 and A.ndim >= 1 and A.shape[-1] == B.shape[0]


def _scalar(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer))


def add(a, b) -> Tensor:
    if _scalar(b):
        a = as_tensor(a)
        return _finish("add", a.data + b, (a,), lambda g: (g,))
    if _scalar(a):
        return add(b, a)
    a, b = as_tensor(a), as_tensor(b)
    A, B = a.data, b.data
    if A.shape == B.shape:
        return _finish("add", A + B, (a, b), lambda g: (g, g))
    if _bias_shape_ok(A, B):
        n = B.shape[0]
        return _finish("add", A + B, (a, b), lambda g: (g, g.reshape(-1, n).sum(axis=0)))
    raise ShapeError("add", A.shape, B.shape, detail="only equal shapes or matrix + row vector")


def sub(a, b) -> Tensor:
    if _scalar(b):
        a = as_tensor(a)
        return _finish("sub", a.data - b, (a,), lambda g: (g,))
    if _scalar(a):
        b = as_tensor(b)
        return _finish("sub", a - b.data, (b,), lambda g: (-g,))
    a, b = as_tensor(a), as_tensor(b)
    A, B = a.data, b.data
    if A.shape == B.shape:
        return _finish("sub", A - B, (a, b), lambda g: (g, -g))
    if _bias_shape_ok(A, B):
        n = B.shape[0]
        return _finish("sub", A - B, (a, b), lambda g: (g, -g.reshape(-1, n).sum(axis=0)))
    raise ShapeError("sub", A.shape, B.shape, detail="only equal shapes or matrix - row vector")


def mul(a, b) -> Tensor:
    if _scalar(b):
        a = as_tensor(a)
        c = float(b)
        return _finish("mul", a.data * c, (a,), lambda g: (g * c,))
    if _scalar(a):
        return mul(b, a)
    a, b = as_tensor(a), as_tensor(b)
    A, B = a.data, b.data
    if A.shape == B.shape:
        return _finish("mul", A * B, (a, b),
                       lambda g: (g * B if a.requires_grad else None,
                                  g * A if b.requires_grad else None))
    raise ShapeError("mul", A.shape, B.shape, detail="only equal shapes or a scalar")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _finish("neg", -a.data, (a,), lambda g: (-g,))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    datas = [t.data for t in ts]
    try:
        out = np.concatenate(datas, axis=axis)
    except ValueError:
        raise ShapeError("concat", *(d.shape for d in datas), detail=f"axis={axis}") from None
    bounds = np.cumsum([d.shape[axis] for d in datas])[:-1]
    return _finish("concat", out, ts, lambda g: tuple(np.split(g, bounds, axis=axis)))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    fancy = any(isinstance(i, (list, np.ndarray)) for i in (idx if isinstance(idx, tuple) else (idx,)))

    def vjp(g):
        full = np.zeros(shape)
        if fancy:
            np.add.at(full, idx, g)
        else:
            full[idx] = g
        return (full,)

    return _finish("slice", np.array(a.data[idx]), (a,), vjp)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", old, tuple(shape)) from None
    return _finish("reshape", out, (a,), lambda g: (g.reshape(old),))


def transpose(a, axes: Sequence[int] | None = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(range(a.ndim))[::-1]
    inv = tuple(np.argsort(axes))
    return _finish("transpose", np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _finish("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _finish("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    return _finish("exp", y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    if np.any(x <= 0):
        raise NumericError("log: input must be strictly positive")
    return _finish("log", np.log(x), (a,), lambda g: (g / x,))


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    return m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))


def logsumexp(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    x = a.data
    lse = _lse(x, axis)
    p = np.exp(x - lse)
    return _finish("logsumexp", np.squeeze(lse, axis=axis), (a,),
                   lambda g: (np.expand_dims(g, axis) * p,))


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    x = a.data
    y = np.exp(x - _lse(x, axis))

    def vjp(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _finish("softmax", y, (a,), vjp)


def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape
    if axis is None:
        return _finish("sum", np.sum(a.data), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))
    return _finish("sum", np.sum(a.data, axis=axis), (a,),
                   lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),))


def mean(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return mul(sum(a, axis), 1.0 / n)


def square(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _finish("square", x * x, (a,), lambda g: (2.0 * g * x,))


def mse(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("mse", a.shape, b.shape)
    diff = a.data - b.data
    n = diff.size
    return _finish("mse", np.mean(diff * diff), (a, b),
                   lambda g: (2.0 * g * diff / n, -2.0 * g * diff / n))


def clamp(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    x = a.data
    inside = (x >= lo) & (x <= hi)
    return _finish("clamp", np.clip(x, lo, hi), (a,), lambda g: (g * inside,))


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale by ``gain`` and shift by ``bias``."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    X = x.data
    n = X.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError("layer_norm", X.shape, gain.shape, bias.shape)
    mu = X.mean(axis=-1, keepdims=True)
    xc = X - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    G = gain.data

    def vjp(g):
        gx = g * G
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                    - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).reshape(-1, n).sum(axis=0), g.reshape(-1, n).sum(axis=0)

    return _finish("layer_norm", xhat * G + bias.data, (x, gain, bias), vjp)


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))
