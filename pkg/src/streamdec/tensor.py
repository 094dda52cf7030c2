"""Minimal reverse-mode differentiable tensor core.

A :class:`Tensor` wraps a float64 numpy array and records the operations
applied to it when any input has ``requires_grad=True``. ``backward()`` on a
scalar walks the recorded graph in reverse topological order. Only the
primitives the decoder and the CTC loss actually need are provided.

Broadcasting follows numpy rules for elementwise ops (add, mul, ...); shapes
are validated up front so failures name the op and the offending shapes.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

__all__ = [
    "Tensor", "ShapeError", "tensor", "constant", "no_grad",
    "matmul", "add", "sub", "mul", "scale", "neg", "exp", "log",
    "tsum", "tmean", "reshape", "transpose", "concat", "logaddexp",
    "logsumexp", "softmax", "log_softmax", "layer_norm", "gelu",
    "dropout", "take_last", "mask_rows", "counters", "reset_counters",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


# Global instrumentation: multiply-add count (matmul only) and bytes
# allocated for tensor payloads. Used by the FLOPs bench and the
# memory-scaling property test.
counters = {"macs": 0, "alloc_bytes": 0, "count_macs": False}

_grad_enabled = [True]


def reset_counters():
    counters["macs"] = 0
    counters["alloc_bytes"] = 0


@contextmanager
def no_grad():
    """Disable graph recording (inference mode)."""
    _grad_enabled.append(False)
    try:
        yield
    finally:
        _grad_enabled.pop()


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        counters["alloc_bytes"] += arr.nbytes

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        """Reverse-mode pass from a scalar loss.

        Populates ``grad`` on every reachable tensor with
        ``requires_grad=True``. Repeated calls without zeroing accumulate.
        """
        if self.data.shape != ():
            raise ShapeError(
                f"backward: loss must be scalar, got shape {self.data.shape}")
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones((), dtype=np.float64)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                acc = grads.get(id(parent))
                # never mutate in place: returned arrays may be shared views
                grads[id(parent)] = pg if acc is None else acc + pg

    # operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return _getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape)

    def sum(self, axis=None):
        return tsum(self, axis)


def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad=requires_grad)


def constant(data):
    return Tensor(data, requires_grad=False)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _track(inputs):
    return _grad_enabled[-1] and any(t.requires_grad or t._parents for t in inputs)


def _make(data, parents, backward):
    out = Tensor(data)
    if _track(parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    """Sum gradient g down to the given (broadcast-source) shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


# elementwise ----------------------------------------------------------------

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("add", a.data, b.data)
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(out, (a, b), bwd)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("sub", a.data, b.data)
    out = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _make(out, (a, b), bwd)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("mul", a.data, b.data)
    out = a.data * b.data

    def bwd(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), bwd)


def scale(a, s):
    a = _as_tensor(a)
    s = float(s)
    out = a.data * s

    def bwd(g):
        return (g * s,)

    return _make(out, (a,), bwd)


def neg(a):
    return scale(a, -1.0)


def exp(a):
    a = _as_tensor(a)
    out = np.exp(a.data)

    def bwd(g):
        return (g * out,)

    return _make(out, (a,), bwd)


def log(a):
    a = _as_tensor(a)
    out = np.log(a.data)

    def bwd(g):
        return (g / a.data,)

    return _make(out, (a,), bwd)


def gelu(a):
    """Exact (erf-based) GeLU."""
    from scipy.special import erf
    a = _as_tensor(a)
    x = a.data
    phi = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    out = x * phi

    def bwd(g):
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        return (g * (phi + x * pdf),)

    return _make(out, (a,), bwd)


def logaddexp(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("logaddexp", a.data, b.data)
    out = np.logaddexp(a.data, b.data)

    def bwd(g):
        # exp(x - out) is 0/0 where both inputs are -inf; define it as 0.
        with np.errstate(invalid="ignore"):
            wa = np.where(np.isneginf(out), 0.0, np.exp(a.data - out))
            wb = np.where(np.isneginf(out), 0.0, np.exp(b.data - out))
        return (_unbroadcast(g * wa, a.data.shape),
                _unbroadcast(g * wb, b.data.shape))

    return _make(out, (a, b), bwd)


# reductions / shape ---------------------------------------------------------

def tsum(a, axis=None):
    a = _as_tensor(a)
    out = a.data.sum(axis=axis)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.data.shape),)

    return _make(out, (a,), bwd)


def tmean(a, axis=None):
    a = _as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(tsum(a, axis), 1.0 / n)


def reshape(a, shape):
    a = _as_tensor(a)
    out = a.data.reshape(shape)

    def bwd(g):
        return (g.reshape(a.data.shape),)

    return _make(out, (a,), bwd)


def transpose(a, axes):
    a = _as_tensor(a)
    out = a.data.transpose(axes)
    inv = np.argsort(axes)

    def bwd(g):
        return (g.transpose(inv),)

    return _make(out, (a,), bwd)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tensors, bwd)


def _getitem(a, idx):
    a = _as_tensor(a)
    out = a.data[idx]

    def bwd(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(out, (a,), bwd)


def take_last(a, idx):
    """Index the last axis of ``a`` with an integer array ``idx``.

    Output shape is ``a.shape[:-1] + idx.shape``.
    """
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    out = a.data[..., idx]

    def bwd(g):
        full = np.zeros_like(a.data)
        lead = int(np.prod(a.data.shape[:-1], dtype=np.intp)) if a.data.ndim > 1 else 1
        flat = full.reshape(lead, a.data.shape[-1])
        gf = g.reshape(lead, idx.size)
        np.add.at(flat, (np.arange(lead)[:, None], idx.ravel()[None, :]), gf)
        return (full,)

    return _make(out, (a,), bwd)


# linear algebra -------------------------------------------------------------

def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 1 or b.data.ndim < 1 or a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError(f"matmul: shapes {a.data.shape} and {b.data.shape} not aligned")
    out = np.matmul(a.data, b.data)
    if counters["count_macs"]:
        m = a.data.shape[-2] if a.data.ndim > 1 else 1
        k = a.data.shape[-1]
        n = b.data.shape[-1] if b.data.ndim > 1 else 1
        batch = int(np.prod(out.shape, dtype=np.int64)) // (m * n) if out.shape else 1
        counters["macs"] += batch * m * k * n

    def bwd(g):
        if a.data.ndim == 1 and b.data.ndim == 1:
            return g * b.data, g * a.data
        a2 = a.data if a.data.ndim > 1 else a.data[None, :]
        b2 = b.data if b.data.ndim > 1 else b.data[:, None]
        g2 = g
        if a.data.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        if b.data.ndim == 1:
            g2 = np.expand_dims(g2, -1)
        ga = np.matmul(g2, np.swapaxes(b2, -1, -2))
        gb = np.matmul(np.swapaxes(a2, -1, -2), g2)
        if a.data.ndim == 1:
            ga = ga.reshape(-1, a.data.shape[0]).sum(axis=0)
        else:
            ga = _unbroadcast(ga, a.data.shape)
        if b.data.ndim == 1:
            gb = gb.reshape(-1, b.data.shape[0]).sum(axis=0)
        else:
            gb = _unbroadcast(gb, b.data.shape)
        return ga, gb

    return _make(out, (a, b), bwd)


# softmax family -------------------------------------------------------------

def softmax(a):
    """Softmax over the last axis (max-subtracted)."""
    a = _as_tensor(a)
    m = np.max(a.data, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(a.data - m)
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), bwd)


def log_softmax(a):
    a = _as_tensor(a)
    m = np.max(a.data, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = a.data - m
    lse = np.log(np.exp(s).sum(axis=-1, keepdims=True))
    out = s - lse

    def bwd(g):
        p = np.exp(out)
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return _make(out, (a,), bwd)


def logsumexp(a, axis=-1):
    a = _as_tensor(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.exp(a.data - m).sum(axis=axis)) + np.squeeze(m, axis=axis)

    def bwd(g):
        full = np.expand_dims(out, axis)
        with np.errstate(invalid="ignore"):
            w = np.where(np.isneginf(full), 0.0, np.exp(a.data - full))
        return (np.expand_dims(g, axis) * w,)

    return _make(out, (a,), bwd)


def layer_norm(a, gamma, beta, eps=1e-6):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    a, gamma, beta = _as_tensor(a), _as_tensor(gamma), _as_tensor(beta)
    if gamma.data.shape != a.data.shape[-1:] or beta.data.shape != a.data.shape[-1:]:
        raise ShapeError(
            f"layer_norm: affine shapes {gamma.data.shape}/{beta.data.shape} "
            f"do not match feature dim {a.data.shape[-1:]}")
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data
    n = a.data.shape[-1]

    def bwd(g):
        gg = (g * xhat).sum(axis=tuple(range(g.ndim - 1)))
        gb = g.sum(axis=tuple(range(g.ndim - 1)))
        gx_hat = g * gamma.data
        gx = inv * (gx_hat
                    - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        _ = n
        return gx, gg, gb

    return _make(out, (a, gamma, beta), bwd)


def dropout(a, rate, train, rng):
    """Inverted dropout: at train time keep with prob 1-rate and divide by it."""
    if not (0.0 <= rate < 1.0):
        raise ValueError(f"dropout: rate {rate} outside [0, 1)")
    a = _as_tensor(a)
    if not train or rate == 0.0:
        return a
    keep = 1.0 - rate
    mask = (rng.random(a.data.shape) < keep) / keep
    return mul(a, constant(mask))


def mask_rows(x, row_mask, token):
    """Replace masked rows of ``x`` with a (learnable) token vector.

    ``x`` is [..., L, D], ``row_mask`` a boolean array [..., L], ``token`` a
    [D] tensor broadcast into every masked row. Gradient w.r.t. the token is
    the sum of incoming gradients over masked rows.
    """
    x, token = _as_tensor(x), _as_tensor(token)
    row_mask = np.asarray(row_mask, dtype=bool)
    if row_mask.shape != x.data.shape[:-1]:
        raise ShapeError(
            f"mask_rows: mask shape {row_mask.shape} vs rows {x.data.shape[:-1]}")
    if token.data.shape != x.data.shape[-1:]:
        raise ShapeError(
            f"mask_rows: token shape {token.data.shape} vs feature dim {x.data.shape[-1:]}")
    m = row_mask[..., None]
    out = np.where(m, token.data, x.data)

    def bwd(g):
        gx = np.where(m, 0.0, g)
        gt = g[row_mask].sum(axis=0) if row_mask.any() else np.zeros_like(token.data)
        return gx, gt

    return _make(out, (x, token), bwd)
