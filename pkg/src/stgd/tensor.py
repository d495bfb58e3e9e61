"""
Minimal reverse-mode differentiable tensor core.

Every value is a float64 numpy array wrapped in a :class:`Tensor`. Each primitive
records a :class:`Node` holding a closure that maps the output gradient to the
input gradients. ``Tensor.backward`` walks the recorded nodes in reverse creation
order; a :class:`Tape` context additionally keeps an explicit ordered record of
every op executed inside it.

Shapes must match exactly for elementwise ops. The only implicit broadcasts are
python scalars and :func:`add_bias` (a vector over the last axis); anything else
goes through :func:`expand`.
"""

import itertools
import math
import threading
from contextlib import contextmanager
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, NumericError, ShapeError

__all__ = [
    "Tensor", "Tape", "no_grad", "detect_anomaly", "tensor",
    "add", "sub", "mul", "div", "neg", "scale", "shift", "add_bias",
    "matmul", "linear", "exp", "log", "sqrt", "sigmoid", "tanh", "gelu", "relu",
    "maximum", "minimum", "clamp_min", "smooth_l1",
    "sum", "mean", "max", "reshape", "transpose", "expand", "concat", "getitem",
    "take", "gather_rows", "softmax", "layer_norm", "conv1d", "conv2d",
    "cosine_similarity", "attention",
]

ArrayLike = Union[np.ndarray, float, int, Sequence]

_seq = itertools.count()
_state = threading.local()


def _tapes():
    if not hasattr(_state, "tapes"):
        _state.tapes = []
    return _state.tapes


def _grad_enabled():
    return getattr(_state, "grad_enabled", True)


def _anomaly():
    return getattr(_state, "anomaly", False)


@contextmanager
def no_grad():
    """Disable graph construction (inference, finite-difference probes)."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextmanager
def detect_anomaly():
    """Raise :class:`NumericError` naming the first op that produces a non-finite value."""
    prev = _anomaly()
    _state.anomaly = True
    try:
        yield
    finally:
        _state.anomaly = prev


class Node:
    __slots__ = ("op", "parents", "backward", "seq")

    def __init__(self, op, parents, backward, seq):
        self.op = op
        self.parents = parents
        self.backward = backward
        self.seq = seq

    def __repr__(self):
        return f"Node({self.op!r}, seq={self.seq})"


class Tensor:
    """Dense float64 array with optional gradient.

    ``grad`` is only ever populated on leaf tensors created with
    ``requires_grad=True``; intermediate gradients live only during backward.
    """

    __slots__ = ("data", "requires_grad", "grad", "_node", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[Node] = None
        self.name = name

    @classmethod
    def _wrap(cls, arr, requires_grad):
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = requires_grad
        t.grad = None
        t._node = None
        t.name = None
        return t

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad: Optional[ArrayLike] = None):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        A no-op when ``self`` does not require gradient.
        """
        if not self.requires_grad:
            return
        g = _seed_grad(self, grad)
        if self._node is None:
            _accumulate_leaf(self, g)
            return
        order = []
        seen = set()
        stack = [self]
        while stack:
            t = stack.pop()
            if id(t) in seen or t._node is None:
                continue
            seen.add(id(t))
            order.append(t)
            stack.extend(p for p in t._node.parents if p.requires_grad)
        order.sort(key=lambda t: t._node.seq, reverse=True)
        _backprop(order, {id(self): g})

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=4, threshold=8)}{flag})"

    def __len__(self):
        return len(self.data)

    # operators
    def __add__(self, other):
        return shift(self, other) if _is_number(other) else add(self, other)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        return shift(self, -other) if _is_number(other) else sub(self, other)

    def __rsub__(self, other):
        return shift(neg(self), other) if _is_number(other) else sub(other, self)

    def __mul__(self, other):
        return scale(self, other) if _is_number(other) else mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        return scale(self, 1.0 / other) if _is_number(other) else div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def tensor(data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def _is_number(x):
    return isinstance(x, (int, float, np.floating, np.integer)) and not isinstance(x, bool)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _seed_grad(t, grad):
    if grad is None:
        if t.data.size != 1:
            raise ShapeError(f"backward() without an explicit gradient needs a scalar, got shape {t.shape}")
        return np.ones_like(t.data)
    g = np.asarray(grad, dtype=np.float64)
    if g.shape != t.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match tensor shape {t.shape}")
    return g


def _accumulate_leaf(t, g):
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _backprop(order, grads):
    for t in order:
        g = grads.pop(id(t), None)
        if g is None:
            continue
        node = t._node
        pgrads = node.backward(g)
        for p, pg in zip(node.parents, pgrads):
            if pg is None or not p.requires_grad:
                continue
            if p._node is None:
                _accumulate_leaf(p, pg)
            else:
                key = id(p)
                grads[key] = grads[key] + pg if key in grads else pg


class Tape:
    """Ordered record of the primitive ops executed inside a ``with`` block.

    >>> x = Tensor([1.0, 2.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     y = sum(x * x)
    >>> tape.ops
    ['mul', 'sum']
    >>> tape.backward(y); x.grad
    array([2., 4.])
    """

    def __init__(self):
        self.records = []

    def __enter__(self):
        _tapes().append(self)
        return self

    def __exit__(self, *exc):
        _tapes().remove(self)
        return False

    def _record(self, out):
        self.records.append(out)

    @property
    def ops(self):
        return [t._node.op for t in self.records]

    def backward(self, out: Tensor, grad=None):
        """Replay the recorded ops in exact reverse order.

        Gradient only flows through ops on this tape; a parent produced outside
        it is treated as a constant.
        """
        if not out.requires_grad:
            return
        g = _seed_grad(out, grad)
        recorded = {id(t) for t in self.records}
        order = list(reversed(self.records))
        grads = {id(out): g}
        for t in order:
            gt = grads.pop(id(t), None)
            if gt is None:
                continue
            for p, pg in zip(t._node.parents, t._node.backward(gt)):
                if pg is None or not p.requires_grad:
                    continue
                if p._node is None:
                    _accumulate_leaf(p, pg)
                elif id(p) in recorded:
                    grads[id(p)] = grads[id(p)] + pg if id(p) in grads else pg


def _make(op: str, data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    if _anomaly() and not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite value produced by op '{op}'", op=op)
    req = _grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor._wrap(data, req)
    if req:
        out._node = Node(op, tuple(parents), backward, next(_seq))
        for tape in _tapes():
            tape._record(out)
    return out


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} must match exactly")


# ---------------------------------------------------------------------------
# elementwise

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("add", a, b)
    return _make("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("sub", a, b)
    return _make("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _make("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd
    return _make("div", out, (a, b), lambda g: (g / bd, -g * out / bd))


def neg(a: Tensor) -> Tensor:
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _make("scale", a.data * s, (a,), lambda g: (g * s,))


def shift(a: Tensor, s: float) -> Tensor:
    return _make("shift", a.data + float(s), (a,), lambda g: (g,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """``x + b`` with ``b`` a vector broadcast over every axis but the last."""
    if b.ndim != 1 or x.ndim == 0 or x.shape[-1] != b.shape[0]:
        raise ShapeError(f"add_bias: bias {b.shape} does not fit last axis of {x.shape}")
    lead = tuple(range(x.ndim - 1))
    need_b = b.requires_grad
    return _make("add_bias", x.data + b.data, (x, b), lambda g: (g, g.sum(axis=lead) if need_b else None))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _make("log", np.log(ad), (a,), lambda g: (g / ad,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _make("sqrt", out, (a,), lambda g: (0.5 * g / out,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split on sign so neither branch overflows
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    x = a.data
    x2 = x * x
    inner = _GELU_C * x * (1.0 + 0.044715 * x2)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return _make("gelu", out, (a,), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def maximum(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("maximum", a, b)
    pick_a = a.data >= b.data
    return _make("maximum", np.where(pick_a, a.data, b.data), (a, b),
                 lambda g: (g * pick_a, g * ~pick_a))


def minimum(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("minimum", a, b)
    pick_a = a.data <= b.data
    return _make("minimum", np.where(pick_a, a.data, b.data), (a, b),
                 lambda g: (g * pick_a, g * ~pick_a))


def clamp_min(a: Tensor, lo: float) -> Tensor:
    keep = a.data > lo
    return _make("clamp_min", np.where(keep, a.data, lo), (a,), lambda g: (g * keep,))


def smooth_l1(a: Tensor, beta: float = 1.0) -> Tensor:
    """Elementwise Huber-style smooth L1: ``0.5 x^2 / beta`` inside ``|x| < beta``, ``|x| - beta/2`` outside."""
    x = a.data
    ax = np.abs(x)
    inside = ax < beta
    out = np.where(inside, 0.5 * x * x / beta, ax - 0.5 * beta)
    return _make("smooth_l1", out, (a,), lambda g: (g * np.where(inside, x / beta, np.sign(x)),))


# ---------------------------------------------------------------------------
# reductions and shape ops

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def sum(a: Tensor, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)
    shape = a.shape

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _make("sum", np.asarray(out), (a,), backward)


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    n = 1
    for ax in axes:
        n *= a.shape[ax]
    out = a.data.mean(axis=axes, keepdims=keepdims)
    shape = a.shape

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / n, shape).copy(),)

    return _make("mean", np.asarray(out), (a,), backward)


def max(a: Tensor, axis: int = -1, keepdims=False) -> Tensor:  # noqa: A001
    """Max over one axis; the gradient goes to the first maximal entry."""
    axis = axis % a.ndim
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis)
    shape = a.shape

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        full = np.zeros(shape)
        np.put_along_axis(full, np.expand_dims(idx, axis), g, axis)
        return (full,)

    return _make("max", out if keepdims else np.squeeze(out, axis), (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    orig = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot reshape {orig} to {shape}") from e
    return _make("reshape", out, (a,), lambda g: (g.reshape(orig),))


def transpose(a: Tensor, axes=None) -> Tensor:
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def expand(a: Tensor, shape) -> Tensor:
    """Explicit broadcast of size-1 axes (same rank required)."""
    shape = tuple(shape)
    if a.ndim != len(shape) or any(s != t and s != 1 for s, t in zip(a.shape, shape)):
        raise ShapeError(f"expand: cannot expand {a.shape} to {shape}")
    axes = tuple(i for i, (s, t) in enumerate(zip(a.shape, shape)) if s == 1 and t != 1)
    return _make("expand", np.broadcast_to(a.data, shape).copy(), (a,),
                 lambda g: (g.sum(axis=axes, keepdims=True),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    nd = tensors[0].ndim
    axis = axis % nd
    for t in tensors[1:]:
        if t.ndim != nd or any(s != r for i, (s, r) in enumerate(zip(t.shape, tensors[0].shape)) if i != axis):
            raise ShapeError(f"concat: shapes {tensors[0].shape} and {t.shape} differ off axis {axis}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors)))

    return _make("concat", out, tensors, backward)


def getitem(a: Tensor, key) -> Tensor:
    out = a.data[key]
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, key, g)
        return (full,)

    return _make("getitem", np.array(out, dtype=np.float64), (a,), backward)


def take(a: Tensor, idx) -> Tensor:
    """Rows of ``a`` (axis 0) at integer positions ``idx`` of any shape."""
    idx = np.asarray(idx, dtype=np.intp)
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return _make("take", a.data[idx], (a,), backward)


def gather_rows(a: Tensor, idx) -> Tensor:
    """Per-frame gather: ``a[t, idx[t, k]]`` for ``a`` of shape ``(T, N, ...)`` and ``idx`` ``(T, K)``."""
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 2 or idx.shape[0] != a.shape[0]:
        raise ShapeError(f"gather_rows: index shape {idx.shape} does not fit tensor {a.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[1]):
        raise ShapeError(f"gather_rows: index out of range for axis of size {a.shape[1]}")
    rows = np.arange(a.shape[0])[:, None]
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, (rows, idx), g)
        return (full,)

    return _make("gather_rows", a.data[rows, idx], (a,), backward)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for ``(..., m, k) @ (..., k, n)`` with identical leading dims."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    need_a, need_b = a.requires_grad, b.requires_grad

    def backward(g):
        return (g @ np.swapaxes(bd, -1, -2) if need_a else None,
                np.swapaxes(ad, -1, -2) @ g if need_b else None)

    return _make("matmul", ad @ bd, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """``x @ w (+ b)`` applied over the last axis of ``x`` of any rank."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not fit weight {w.shape}")
    lead = x.shape[:-1]
    y = matmul(reshape(x, (-1, x.shape[-1])), w)
    y = reshape(y, lead + (w.shape[1],))
    return add_bias(y, b) if b is not None else y


# ---------------------------------------------------------------------------
# normalisation

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make("softmax", out, (a,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: gamma {gamma.shape} / beta {beta.shape} do not fit {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gd = gamma.data
    lead = tuple(range(x.ndim - 1))

    need_affine = gamma.requires_grad or beta.requires_grad

    def backward(g):
        gx = g * gd
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        if not need_affine:
            return dx, None, None
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make("layer_norm", xhat * gd + beta.data, (x, gamma, beta), backward)


def cosine_similarity(x: Tensor, c: Tensor) -> Tensor:
    """Cosine of every row of ``x`` (shape ``(..., d)``) against the vector ``c``.

    Zero-norm rows score 0 and receive zero gradient.
    """
    if c.ndim != 1 or x.shape[-1] != c.shape[0]:
        raise ShapeError(f"cosine_similarity: {x.shape} vs reference {c.shape}")
    xd, cd = x.data, c.data
    nc = np.linalg.norm(cd)
    nx = np.linalg.norm(xd, axis=-1)
    live = nx > 0
    safe = np.where(live, nx, 1.0)
    out = np.where(live, (xd @ cd) / (safe * nc), 0.0)

    def backward(g):
        g = np.where(live, g, 0.0)
        gx = (g / (safe * nc))[..., None] * cd - (g * out / safe ** 2)[..., None] * xd
        gc = np.tensordot(g / (safe * nc), xd, axes=g.ndim) - (g * out).sum() * cd / nc ** 2
        return gx, gc

    return _make("cosine_similarity", out, (x, c), backward)


# ---------------------------------------------------------------------------
# convolutions (cross-correlation, zero-padded "same")

def _check_kernel(k):
    if k % 2 == 0:
        raise ConfigurationError(f"kernel size must be odd, got {k}")


def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """1D cross-correlation along axis 0.

    ``x`` is ``(T, ..., C_in)``; every middle position is convolved independently.
    ``w`` is ``(C_out, C_in, k)``; output is ``(T, ..., C_out)``.
    """
    c_out, c_in, k = w.shape
    _check_kernel(k)
    if x.shape[-1] != c_in or b.shape != (c_out,):
        raise ShapeError(f"conv1d: input {x.shape}, weight {w.shape}, bias {b.shape} are inconsistent")
    T = x.shape[0]
    p = (k - 1) // 2
    pad = [(p, p)] + [(0, 0)] * (x.ndim - 1)
    xp = np.pad(x.data, pad)
    wd = w.data
    out = np.zeros(x.shape[:-1] + (c_out,))
    for j in range(k):
        out += xp[j:j + T] @ wd[:, :, j].T
    out += b.data

    def backward(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(wd)
        g2 = g.reshape(-1, c_out)
        for j in range(k):
            gxp[j:j + T] += g @ wd[:, :, j]
            gw[:, :, j] = g2.T @ xp[j:j + T].reshape(-1, c_in)
        return gxp[p:p + T], gw, g2.sum(axis=0)

    return _make("conv1d", out, (x, w, b), backward)


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """2D cross-correlation over the two axes before channels.

    ``x`` is ``(..., H, W, C_in)`` (leading axes are independent frames),
    ``w`` is ``(C_out, C_in, k, k)``.
    """
    c_out, c_in, k, k2 = w.shape
    if k != k2:
        raise ShapeError(f"conv2d: non-square kernel {w.shape}")
    _check_kernel(k)
    if x.ndim < 3 or x.shape[-1] != c_in:
        raise ShapeError(f"conv2d: input channels {x.shape} do not match weight {w.shape}")
    if b.shape != (c_out,):
        raise ShapeError(f"conv2d: bias {b.shape} does not match weight {w.shape}")
    H, W = x.shape[-3], x.shape[-2]
    p = (k - 1) // 2
    pad = [(0, 0)] * (x.ndim - 3) + [(p, p), (p, p), (0, 0)]
    xp = np.pad(x.data, pad)
    wd = w.data
    out = np.zeros(x.shape[:-1] + (c_out,))
    for i in range(k):
        for j in range(k):
            out += xp[..., i:i + H, j:j + W, :] @ wd[:, :, i, j].T
    out += b.data

    def backward(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(wd)
        g2 = g.reshape(-1, c_out)
        for i in range(k):
            for j in range(k):
                gxp[..., i:i + H, j:j + W, :] += g @ wd[:, :, i, j]
                gw[:, :, i, j] = g2.T @ xp[..., i:i + H, j:j + W, :].reshape(-1, c_in)
        return gxp[..., p:p + H, p:p + W, :], gw, g2.sum(axis=0)

    return _make("conv2d", out, (x, w, b), backward)


# ---------------------------------------------------------------------------
# attention

def attention(q: Tensor, k: Tensor, v: Tensor, bias: Optional[Tensor] = None,
              return_weights: bool = False):
    """Scaled dot-product attention over the last two axes.

    q: (..., n_q, d), k: (..., n_k, d), v: (..., n_k, d_v); ``bias`` is added to the
    logits and must have shape (..., n_q, n_k).
    """
    logits = scale(matmul(q, transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))),
                   1.0 / math.sqrt(q.shape[-1]))
    if bias is not None:
        logits = add(logits, bias)
    weights = softmax(logits, axis=-1)
    out = matmul(weights, v)
    return (out, weights) if return_weights else out
