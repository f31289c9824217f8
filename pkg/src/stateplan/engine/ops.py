"""Differentiable primitives.

Every function accepts Tensors (scalars and arrays are coerced) and returns a
Tensor. Backward closures return one gradient per parent, already reduced to
that parent's shape.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .tensor import ContractError, ShapeError, Tensor, as_tensor, make_result

__all__ = [
    "add", "sub", "mul", "scale", "matmul", "sum", "mean", "square", "relu", "gelu",
    "reshape", "transpose", "getitem", "concat", "stack", "layer_norm", "softmax",
    "log_softmax", "dropout", "attention", "embedding", "cross_entropy", "mse",
    "l2_normalize",
]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


# -- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return make_result(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add",
    )


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return make_result(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub",
    )


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("mul", a, b)
    ad, bd = a.data, b.data
    return make_result(
        ad * bd, (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)), "mul",
    )


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return make_result(x.data * x.data.dtype.type(c), (x,), lambda g: (g * c,), "scale")


def square(x: Tensor) -> Tensor:
    xd = x.data
    return make_result(xd * xd, (x,), lambda g: (2.0 * xd * g,), "square")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,), "relu")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    xd = x.data
    inner = _GELU_C * (xd + 0.044715 * xd ** 3)
    t = np.tanh(inner)
    out = 0.5 * xd * (1.0 + t)

    def bw(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * xd ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * dinner),)

    return make_result(out.astype(x.dtype), (x,), bw, "gelu")


# -- linear algebra ----------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: incompatible batch dims {a.shape} and {b.shape}") from None
    ad, bd = a.data, b.data

    def bw(g):
        if bd.ndim == 2:
            ga = g @ bd.T
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return _unbroadcast(ga, ad.shape), gb
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return make_result(ad @ bd, (a, b), bw, "matmul")


# -- reductions and shape ----------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axes(axis, x.ndim)
    shape = x.shape

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return make_result(np.sum(x.data, axis=axes, keepdims=keepdims), (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    shape = x.shape

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, shape).copy(),)

    return make_result(np.mean(x.data, axis=axes, keepdims=keepdims), (x,), bw, "mean")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {src} into {tuple(shape)}") from None
    return make_result(out, (x,), lambda g: (g.reshape(src),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def getitem(x: Tensor, idx) -> Tensor:
    shape, dtype = x.shape, x.dtype

    def bw(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, idx, g)
        return (full,)

    return make_result(np.array(x.data[idx]), (x,), bw, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: no inputs")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = " and ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return make_result(out, tensors, lambda g: tuple(np.split(g, sizes, axis=axis)), "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = " and ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"stack: incompatible shapes {shapes}") from None
    n = len(tensors)
    return make_result(
        out, tensors,
        lambda g: tuple(np.squeeze(p, axis=axis) for p in np.split(g, n, axis=axis)), "stack",
    )


# -- normalisation / activations over the last axis --------------------------

def layer_norm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis; a constant row maps to zeros before the affine part."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat
    if gamma is not None:
        if gamma.shape != (xd.shape[-1],):
            raise ShapeError(f"layer_norm: gamma shape {gamma.shape} vs input {xd.shape}")
        out = out * gamma.data
    if beta is not None:
        out = out + beta.data
    parents = [x] + [p for p in (gamma, beta) if p is not None]
    n = xd.shape[-1]

    def bw(g):
        gx = g * gamma.data if gamma is not None else g
        dx = inv / n * (n * gx - gx.sum(-1, keepdims=True) - xhat * (gx * xhat).sum(-1, keepdims=True))
        grads = [dx.astype(xd.dtype)]
        flat_g = g.reshape(-1, n)
        if gamma is not None:
            grads.append((flat_g * xhat.reshape(-1, n)).sum(0))
        if beta is not None:
            grads.append(flat_g.sum(0))
        return grads

    return make_result(out.astype(xd.dtype), parents, bw, "layer_norm")


def softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    return make_result(p, (x,), lambda g: (p * (g - (g * p).sum(-1, keepdims=True)),), "softmax")


def log_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    p = np.exp(out)
    return make_result(out, (x,), lambda g: (g - p * g.sum(-1, keepdims=True),), "log_softmax")


def l2_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    xd = x.data
    norm = np.sqrt((xd * xd).sum(axis=-1, keepdims=True))
    denom = np.maximum(norm, eps)
    y = xd / denom

    def bw(g):
        return ((g - y * (g * y).sum(-1, keepdims=True)) / denom,)

    return make_result(y.astype(xd.dtype), (x,), bw, "l2_normalize")


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: identity in eval mode, unbiased in expectation in train mode."""
    if not training or p <= 0.0:
        return x
    if p >= 1.0:
        raise ContractError(f"dropout: probability must be < 1, got {p}")
    if rng is None:
        raise ContractError("dropout: a random generator is required in training mode")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return make_result(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


# -- attention ---------------------------------------------------------------

def attention(q: Tensor, k: Tensor, v: Tensor, heads: int, return_weights: bool = False):
    """Scaled dot-product multi-head attention.

    ``q`` is ``(..., Lq, D)``; ``k`` and ``v`` are ``(..., Lk, D)`` and may omit
    leading batch dims (a memory shared across the batch). Heads split ``D``.
    """
    D = q.shape[-1]
    if k.shape[-1] != D or v.shape[-1] != D:
        raise ShapeError(f"attention: feature dims differ, q {q.shape} and k {k.shape} / v {v.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: key/value lengths differ, {k.shape} and {v.shape}")
    if heads <= 0 or D % heads:
        raise ShapeError(f"attention: dim {D} not divisible by {heads} heads")
    dh = D // heads
    c = 1.0 / math.sqrt(dh)

    def split(a):  # (..., L, D) -> (..., H, L, dh)
        return np.swapaxes(a.reshape(a.shape[:-1] + (heads, dh)), -2, -3)

    def merge(a):  # (..., H, L, dh) -> (..., L, D)
        a = np.swapaxes(a, -2, -3)
        return a.reshape(a.shape[:-2] + (D,))

    qh, kh, vh = split(q.data), split(k.data), split(v.data)
    scores = (qh @ np.swapaxes(kh, -1, -2)) * qh.dtype.type(c)
    scores -= scores.max(axis=-1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=-1, keepdims=True)
    out = merge(w @ vh)

    def bw(g):
        gh = split(g)
        gw = gh @ np.swapaxes(vh, -1, -2)
        gv = np.swapaxes(w, -1, -2) @ gh
        gs = w * (gw - (gw * w).sum(-1, keepdims=True)) * c
        gq = gs @ kh
        gk = np.swapaxes(gs, -1, -2) @ qh
        return (
            _unbroadcast(merge(gq), q.shape),
            _unbroadcast(merge(gk), k.shape),
            _unbroadcast(merge(gv), v.shape),
        )

    result = make_result(out, (q, k, v), bw, "attention")
    return (result, w) if return_weights else result


# -- lookup and losses -------------------------------------------------------

def embedding(table: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    n = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ShapeError(f"embedding: index out of range for table of shape {table.shape}")
    shape, dtype = table.shape, table.dtype

    def bw(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, shape[-1]))
        return (full,)

    return make_result(table.data[idx], (table,), bw, "embedding")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy over all leading positions, computed from logits."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.shape[:-1] != labels.shape:
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    C = logits.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ContractError(f"cross_entropy: label out of range [0, {C})")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    flat = logp.reshape(-1, C)
    lab = labels.reshape(-1)
    n = max(lab.size, 1)
    loss = -flat[np.arange(lab.size), lab].sum() / n

    def bw(g):
        grad = np.exp(flat)
        grad[np.arange(lab.size), lab] -= 1.0
        return ((grad * (g / n)).reshape(logits.shape).astype(logits.dtype),)

    return make_result(np.asarray(loss, dtype=logits.dtype), (logits,), bw, "cross_entropy")


def mse(pred: Tensor, target) -> Tensor:
    """Mean of squared errors over all elements."""
    pred, target = _pair(pred, target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse: shapes differ, {pred.shape} and {target.shape}")
    diff = pred.data - target.data
    n = max(diff.size, 1)

    def bw(g):
        gd = (2.0 / n) * g * diff
        return gd, -gd

    return make_result(np.asarray((diff * diff).sum() / n, dtype=pred.dtype), (pred, target), bw, "mse")
