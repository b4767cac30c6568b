"""Dense f32 tensors with reverse-mode automatic differentiation.

Every kernel is a pure function over numpy arrays. When any input requires
gradient the kernel records a node with a closure computing the local
vector-Jacobian product; ``backward`` replays the graph in reverse
topological order. Compute is f32 throughout with fixed reduction order, so
identical inputs give bitwise identical outputs.
"""

from __future__ import annotations

import contextlib

import numpy as np
from scipy.special import erf

from .errors import NumericError, ShapeError

_SQRT_2 = np.float32(np.sqrt(2.0))
_INV_SQRT_2PI = np.float32(1.0 / np.sqrt(2.0 * np.pi))
_MASK_VALUE = np.float32(-1e9)


def _as_f32(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float32)
    return a


class Tensor:
    """A node in the autodiff graph: f32 data, optional grad, parents."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_f32(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- bookkeeping ---------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def numel(self) -> int:
        return int(self.data.size)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def assert_finite(self, context: str = "tensor"):
        if not np.all(np.isfinite(self.data)):
            bad = int(np.argmax(~np.isfinite(self.data.ravel())))
            raise NumericError(f"non-finite value in {context} at flat index {bad}")
        return self

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing ------------------------------------------------------

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # operators

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return add(self, mul(other, Tensor(-1.0)))

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape)

    def transpose(self, ax0: int = -2, ax1: int = -1):
        return transpose(self, ax0, ax1)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)


class Parameter(Tensor):
    """A named model weight; frozen parameters never get gradient buffers."""

    __slots__ = ("name", "trainable")

    def __init__(self, data, name: str, trainable: bool = True):
        super().__init__(data, requires_grad=trainable)
        self.name = name
        self.trainable = trainable

    def freeze(self):
        self.trainable = False
        self.requires_grad = False
        self.grad = None

    def unfreeze(self):
        self.trainable = True
        self.requires_grad = True

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape}, trainable={self.trainable})"


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (forwards only)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _node(data: np.ndarray, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a gradient back to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.astype(np.float32)


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- kernels -----------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _node(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _node(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    """2D or batched matrix product with numpy broadcasting semantics."""
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim < 1 or b.data.ndim < 2:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} not supported")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.shape))

    return _node(data, (a, b), backward)


def transpose(a: Tensor, ax0: int = -2, ax1: int = -1) -> Tensor:
    data = np.swapaxes(a.data, ax0, ax1)

    def backward(g):
        a._accumulate(np.swapaxes(g, ax0, ax1))

    return _node(data.copy(), (a,), backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    if start < 0 or start + length > a.shape[axis]:
        raise ShapeError(
            f"narrow: [{start}, {start + length}) out of range for axis {axis} of {a.shape}"
        )
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    data = a.data[idx]

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[idx] = g
        a._accumulate(ga)

    return _node(data.copy(), (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {old} as {tuple(shape)}")

    def backward(g):
        a._accumulate(g.reshape(old))

    return _node(data.copy(), (a,), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Row-wise softmax, numerically stable."""
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    data = (e / e.sum(axis=axis, keepdims=True)).astype(np.float32)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        a._accumulate((data * (g - dot)).astype(np.float32))

    return _node(data, (a,), backward)


def gelu(a: Tensor) -> Tensor:
    """Exact GELU: x * Phi(x)."""
    x = a.data
    cdf = (0.5 * (1.0 + erf(x / _SQRT_2))).astype(np.float32)
    data = x * cdf

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        a._accumulate((g * (cdf + x * pdf)).astype(np.float32))

    return _node(data, (a,), backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    if eps <= 0:
        raise ShapeError(f"layer_norm: eps must be > 0, got {eps}")
    d = a.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain/bias shapes {gain.shape}/{bias.shape} vs feature dim {d}"
        )
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = (1.0 / np.sqrt(var + np.float32(eps))).astype(np.float32)
    xhat = xc * inv
    data = xhat * gain.data + bias.data

    def backward(g):
        if gain.requires_grad:
            gain._accumulate((g * xhat).reshape(-1, d).sum(axis=0))
        if bias.requires_grad:
            bias._accumulate(g.reshape(-1, d).sum(axis=0))
        if a.requires_grad:
            gx = g * gain.data
            s1 = gx.mean(axis=-1, keepdims=True)
            s2 = (gx * xhat).mean(axis=-1, keepdims=True)
            a._accumulate((inv * (gx - s1 - xhat * s2)).astype(np.float32))

    return _node(data, (a, gain, bias), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup: table (V, d) indexed by integer ids (...,) -> (..., d)."""
    ids = np.asarray(ids)
    if ids.min(initial=0) < 0 or (ids.size and ids.max() >= table.shape[0]):
        bad = int(np.argmax((ids < 0) | (ids >= table.shape[0])))
        raise ShapeError(f"embedding: id out of range at flat position {bad}")
    data = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.ravel(), g.reshape(-1, table.shape[1]))
        table._accumulate(gt)

    return _node(data.copy(), (table,), backward)


def causal_mask(scores: Tensor) -> Tensor:
    """Mask attention scores above the diagonal with a large negative value.

    Operates on the trailing (T, T) axes; masked positions pass no gradient.
    """
    t = scores.shape[-1]
    if scores.shape[-2] != t:
        raise ShapeError(f"causal_mask: trailing axes must be square, got {scores.shape}")
    keep = np.tril(np.ones((t, t), dtype=bool))
    data = np.where(keep, scores.data, _MASK_VALUE)

    def backward(g):
        scores._accumulate(np.where(keep, g, np.float32(0.0)))

    return _node(data, (scores,), backward)


def tsum(a: Tensor) -> Tensor:
    data = np.float32(a.data.sum())

    def backward(g):
        a._accumulate(np.full_like(a.data, np.float32(g)))

    return _node(data, (a,), backward)


def tmean(a: Tensor) -> Tensor:
    n = np.float32(a.data.size)
    data = np.float32(a.data.sum() / n)

    def backward(g):
        a._accumulate(np.full_like(a.data, np.float32(g) / n))

    return _node(data, (a,), backward)


def dropout(a: Tensor, p: float, rng) -> Tensor:
    """Inverted dropout with a seeded mask; identity when p == 0."""
    if p == 0.0:
        return a
    mask = (rng.uniform(a.shape) >= np.float32(p)).astype(np.float32) / np.float32(1.0 - p)
    return mul(a, Tensor(mask))


def cross_entropy(logits: Tensor, targets: np.ndarray, ignore_index: int = -1) -> Tensor:
    """Mean negative log-likelihood over positions whose target != ignore_index.

    logits: (N, V); targets: integer (N,).
    """
    targets = np.asarray(targets)
    if logits.data.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(
            f"cross_entropy: logits {logits.shape} vs targets {targets.shape}"
        )
    keep = targets != ignore_index
    n_keep = int(keep.sum())
    if n_keep == 0:
        raise ShapeError("cross_entropy: every position is masked")
    m = logits.data.max(axis=-1, keepdims=True)
    z = logits.data - m
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True)).astype(np.float32)
    logp = z - lse
    safe_t = np.where(keep, targets, 0)
    picked = logp[np.arange(len(targets)), safe_t]
    data = np.float32(-(picked * keep).sum() / n_keep)
    if not np.isfinite(data):
        raise NumericError("cross_entropy: non-finite loss")

    def backward(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        onehot[np.arange(len(targets)), safe_t] = 1.0
        gl = (p - onehot) * (keep[:, None] / np.float32(n_keep)) * np.float32(g)
        logits._accumulate(gl.astype(np.float32))

    return _node(data, (logits,), backward)


# -- backward pass -----------------------------------------------------------


def backward(loss: Tensor):
    """Populate .grad on every trainable tensor reachable from a scalar loss."""
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)
