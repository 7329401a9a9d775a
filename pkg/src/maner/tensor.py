"""Dense arrays with reverse-mode automatic differentiation, plus Adam.

A :class:`Tensor` wraps a numpy array. Operations on tensors that require
gradients record a node (parents + backward closure) so that
:meth:`Tensor.backward` can walk the graph in reverse topological order.

Precision is chosen per tensor at construction time (``float64`` for
gradient checks, ``float32`` for training); operations keep the dtype of
their inputs.
"""

from __future__ import annotations

import contextlib
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

IGNORE = -1
"""Label sentinel for positions that must not contribute to the loss."""

_GELU_C = math.sqrt(2.0 / math.pi)
_node_ids = itertools.count()
_grad_enabled = True


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    return arr


class Tensor:
    """An n-dimensional array that can take part in a gradient graph."""

    __slots__ = ("data", "grad", "requires_grad", "node_id", "_parents", "_backward", "name")

    def __init__(self, data, dtype=None, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = _check_finite(arr, "Tensor")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node_id: int | None = next(_node_ids) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @classmethod
    def _result(cls, data: np.ndarray, parents: Sequence["Tensor"], backward, op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = _check_finite(data, op)
        out.grad = None
        out.name = None
        track = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = track
        if track:
            out.node_id = next(_node_ids)
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.node_id = None
            out._parents = ()
            out._backward = None
        return out

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return len(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    # -- autodiff -----------------------------------------------------------
    def backward(self) -> None:
        """Populate ``.grad`` on every tensor reachable from this scalar."""
        if self.data.size != 1 or self.data.ndim > 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("backward() called on a tensor outside any gradient graph")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
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
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        return add(_as_tensor(other, self.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def _as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr if np.issubdtype(arr.dtype, np.floating) else arr.astype(np.float64))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise -------------------------------------------------------------
def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    sa, sb = a.shape, b.shape
    return Tensor._result(
        a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add"
    )


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    if not isinstance(b, Tensor):
        c = b
        return Tensor._result(a.data * c, (a,), lambda g: (g * c,), "mul")
    ad, bd = a.data, b.data
    return Tensor._result(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
        "mul",
    )


def neg(a: Tensor) -> Tensor:
    return Tensor._result(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor._result(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    ad = a.data
    return Tensor._result(np.log(ad), (a,), lambda g: (g / ad,), "log")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor._result(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * (x * x * x))
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return Tensor._result(out, (a,), backward, "gelu")


# -- shape ---------------------------------------------------------------------
def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return Tensor._result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return Tensor._result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor._result(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward, "sum")


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis, keepdims), 1.0 / n)


def take_rows(table: Tensor, ids) -> Tensor:
    """Gather rows of a 2-D table: ``table[ids]`` (embedding lookup)."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"take_rows needs a 2-D table, got {table.shape}")
    shape = table.shape

    def backward(g):
        gt = np.zeros(shape, dtype=g.dtype)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, shape[1]))
        return (gt,)

    return Tensor._result(table.data[ids], (table,), backward, "take_rows")


# -- linear algebra --------------------------------------------------------------
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes, with leading-axis broadcasting."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        if bd.ndim == 2:
            k, n = bd.shape
            gb = ad.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return _unbroadcast(ga, ad.shape), gb

    return Tensor._result(ad @ bd, (a, b), backward, "matmul")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax (max subtracted before exponentiation)."""
    if x.shape[axis] < 1:
        raise DimensionError("softmax over an empty axis")
    _check_finite(x.data, "softmax input")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._result(out, (x,), backward, "softmax")


def layer_norm(x: Tensor, scale: Tensor, offset: Tensor, eps: float = 1e-5) -> Tensor:
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * scale.data + offset.data
    d = xd.shape[-1]

    def backward(g):
        gs = (g * xhat).reshape(-1, d).sum(axis=0)
        go = g.reshape(-1, d).sum(axis=0)
        gx_hat = g * scale.data
        gx = inv * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, gs, go

    return Tensor._result(out, (x, scale, offset), backward, "layer_norm")


def dropout(x: Tensor, p: float, rng: np.random.Generator | None) -> Tensor:
    if p <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return Tensor._result(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def masked_cross_entropy(logits: Tensor, labels, active=None) -> Tensor:
    """Mean negative log-likelihood over the non-ignored rows of ``logits``.

    ``labels`` holds one class id per row, or :data:`IGNORE`. ``active`` is an
    optional boolean mask; rows where it is False are skipped whatever their
    label. Skipped rows contribute exactly zero loss and zero gradient.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    k = logits.shape[-1]
    flat = logits.data.reshape(-1, k)
    if flat.shape[0] != labels.shape[0]:
        raise DimensionError(f"{flat.shape[0]} logit rows but {labels.shape[0]} labels")
    mask = labels != IGNORE if active is None else np.asarray(active, dtype=bool).reshape(-1)
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise ValueError("masked_cross_entropy: every position is IGNORE")
    targets = labels[rows]
    if (targets >= k).any() or (targets < 0).any():
        raise IndexError(f"label id out of range for {k} classes")

    sel = flat[rows]
    z = sel - sel.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    logp_t = z[np.arange(rows.size), targets] - lse
    n = rows.size
    loss = np.asarray(-logp_t.sum() / n, dtype=flat.dtype)
    shape = logits.shape

    def backward(g):
        p = np.exp(z - lse[:, None])
        p[np.arange(n), targets] -= 1.0
        full = np.zeros((labels.shape[0], k), dtype=flat.dtype)
        full[rows] = p * (g / n)
        return (full.reshape(shape),)

    return Tensor._result(loss, (logits,), backward, "masked_cross_entropy")


def grad(loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
    """Run backward from ``loss`` and return one gradient per parameter.

    Parameters not reachable from the loss get an all-zero gradient.
    """
    for p in params:
        p.zero_grad()
    loss.backward()
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


# -- Adam --------------------------------------------------------------------------
@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Iterable[np.ndarray], **hyper) -> "AdamState":
        params = list(params)
        return cls(
            m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **hyper
        )


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState):
    """One bias-corrected Adam update, in place. Returns ``(params, state)``."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise DimensionError("params, grads and optimizer state differ in length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionError(f"adam_step shape mismatch: param {p.shape}, grad {g.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
        _check_finite(p, "adam_step")
    return params, state
