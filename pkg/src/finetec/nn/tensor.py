"""Dense float64 tensor with tape-based reverse-mode differentiation.

Every op returns a new tensor and never touches the data of its inputs.
A backward closure is attached to each result; ``Tensor.backward`` walks
the recorded graph in reverse topological order and accumulates
``grad`` on every node that requires it.
"""

from __future__ import annotations

import numpy as np


class NumericError(ArithmeticError):
    """Raised when a non-finite value reaches an op that cannot accept it."""


def _as_array(value) -> np.ndarray:
    return np.array(value, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def backward(self, grad=None) -> None:
        """Unwind the tape from this node.

        ``grad`` defaults to ones, which for a scalar loss is dL/dL = 1.
        """
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        seed = np.ones_like(self.data) if grad is None else _as_array(grad)
        grads: dict[int, np.ndarray] = {id(self): seed}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg

    # operator sugar
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

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)


def tensor(data, requires_grad: bool = False, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple, backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = ""
    out.requires_grad = any(p.requires_grad for p in parents)
    out._parents = parents if out.requires_grad else ()
    out._backward = backward if out.requires_grad else None
    return out


# ---------------------------------------------------------------- arithmetic

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), back)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def back(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _make(a.data - b.data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), back)


def scale(a, c: float) -> Tensor:
    a = _lift(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs operands with ndim >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), back)


# ------------------------------------------------------------- elementwise

def relu(a) -> Tensor:
    a = _lift(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def tanh(a) -> Tensor:
    a = _lift(a)
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def exp(a) -> Tensor:
    a = _lift(a)
    y = np.exp(a.data)
    return _make(y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = _lift(a)
    if not np.all(np.isfinite(a.data)):
        raise NumericError("log of non-finite input")
    if np.any(a.data <= 0):
        raise NumericError("log of non-positive input")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def square(a) -> Tensor:
    a = _lift(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


# -------------------------------------------------------------- reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = _lift(a)
    axes = _norm_axis(axis, a.ndim)
    y = a.data.sum(axis=axes, keepdims=keepdims)

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(y, dtype=np.float64), (a,), back)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return scale(sum(a, axis=axes, keepdims=keepdims), 1.0 / count)


# ------------------------------------------------------------ normalizers

def softmax(a, axis: int = -1) -> Tensor:
    a = _lift(a)
    if not np.all(np.isfinite(a.data)):
        raise NumericError("softmax of non-finite input")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (a,), back)


def layer_norm(a, axis: int = -1, eps: float = 1e-10) -> Tensor:
    """Normalize to zero mean and unit variance along ``axis`` (no affine)."""
    a = _lift(a)
    mu = a.data.mean(axis=axis, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv
    n = a.shape[axis]

    def back(g):
        gm = g.mean(axis=axis, keepdims=True)
        gy = (g * y).mean(axis=axis, keepdims=True)
        return (inv * (g - gm - y * gy),)

    return _make(y, (a,), back)


# ----------------------------------------------------------------- shaping

def reshape(a, shape) -> Tensor:
    a = _lift(a)
    src = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def transpose(a, axes=None) -> Tensor:
    a = _lift(a)
    if axes is None:
        axes = tuple(range(a.ndim))[:-2] + (a.ndim - 1, a.ndim - 2)
    inv = np.argsort(axes)
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def swapaxes(a, i: int, j: int) -> Tensor:
    a = _lift(a)
    return _make(np.swapaxes(a.data, i, j), (a,), lambda g: (np.swapaxes(g, i, j),))


def concat(tensors, axis: int = 0) -> Tensor:
    ts = tuple(_lift(t) for t in tensors)
    sizes = [t.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([t.data for t in ts], axis=axis), ts, back)


def getitem(a, index) -> Tensor:
    a = _lift(a)

    def back(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return (out,)

    return _make(np.array(a.data[index], dtype=np.float64), (a,), back)


def pad(a, widths) -> Tensor:
    """Zero padding; ``widths`` follows ``np.pad``."""
    a = _lift(a)
    widths = [tuple(w) for w in widths]
    sl = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, a.shape))
    return _make(np.pad(a.data, widths), (a,), lambda g: (g[sl],))


def broadcast_to(a, shape) -> Tensor:
    a = _lift(a)
    return _make(np.broadcast_to(a.data, shape).copy(), (a,),
                 lambda g: (_unbroadcast(g, a.shape),))


# ------------------------------------------------------------------ losses

def mse(pred, target) -> Tensor:
    """Mean squared error averaged over every element."""
    pred, target = _lift(pred), _lift(target)
    if pred.shape != target.shape:
        raise ValueError(f"mse shape mismatch {pred.shape} vs {target.shape}")
    return mean(square(sub(pred, target)))


def nll_from_probs(probs, labels) -> Tensor:
    """Mean over the batch of ``-log probs[i, labels[i]]``."""
    probs = _lift(probs)
    labels = np.asarray(labels, dtype=np.int64)
    picked = getitem(probs, (np.arange(len(labels)), labels))
    return scale(sum(log(picked)), -1.0 / len(labels))


def cross_entropy(logits, labels) -> Tensor:
    """Softmax cross-entropy from logits, averaged over the batch."""
    logits = _lift(logits)
    if not np.all(np.isfinite(logits.data)):
        raise NumericError("cross_entropy of non-finite logits")
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - logz
    n = len(labels)
    rows = np.arange(n)
    value = -logp[rows, labels].mean()

    def back(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (g * p / n,)

    return _make(np.asarray(value), (logits,), back)


# -------------------------------------------------------------- structured

def symmetric_from_upper(u, n: int) -> Tensor:
    """(..., n(n+1)/2) row-major upper triangle -> (..., n, n) symmetric matrix."""
    u = _lift(u)
    rows, cols = np.triu_indices(n)
    if u.shape[-1] != rows.size:
        raise ValueError(f"expected {rows.size} upper-triangle entries, got {u.shape[-1]}")
    index = np.empty((n, n), dtype=np.int64)
    index[rows, cols] = np.arange(rows.size)
    index[cols, rows] = np.arange(rows.size)
    diag = rows == cols

    def back(g):
        # off-diagonal entries feed two cells, diagonal entries one
        both = g + np.swapaxes(g, -1, -2)
        gu = both[..., rows, cols]
        gu[..., diag] = g[..., rows[diag], cols[diag]]
        return (gu,)

    return _make(u.data[..., index], (u,), back)
