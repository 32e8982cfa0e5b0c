"""Differentiable primitives.

Every op computes its value with numpy and attaches a VJP that is itself
composed of ops from this module. Shapes must match exactly; the only
broadcasting is the explicit :func:`broadcast_to`.
"""
from __future__ import annotations

from functools import partial

import numpy as np

from .. import kernels
from . import core
from .core import Tensor, as_tensor, is_grad_enabled, make_node

BCE_CLAMP = 1e-12


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape:
        raise ValueError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def _need(out: Tensor, i: int) -> bool:
    return out.parents[i].requires_grad


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")
    return make_node(a.data + b.data, (a, b), _add_vjp, "add")


def _add_vjp(g, out):
    return g, g


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "sub")
    return make_node(a.data - b.data, (a, b), _sub_vjp, "sub")


def _sub_vjp(g, out):
    return g, (neg(g) if _need(out, 1) else None)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_node(-a.data, (a,), _neg_vjp, "neg")


def _neg_vjp(g, out):
    return (neg(g),)


def mul(a, b) -> Tensor:
    """Element-wise product."""
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")
    return make_node(a.data * b.data, (a, b), _mul_vjp, "mul")


def _mul_vjp(g, out):
    a, b = out.parents
    return (
        mul(g, b) if a.requires_grad else None,
        mul(g, a) if b.requires_grad else None,
    )


def scale(a, s: float) -> Tensor:
    """Multiply by a Python scalar."""
    a = as_tensor(a)
    s = float(s)
    return make_node(a.data * s, (a,), partial(_scale_vjp, s), "scale")


def _scale_vjp(s, g, out):
    return (scale(g, s),)


def shift(a, s: float) -> Tensor:
    """Add a Python scalar."""
    a = as_tensor(a)
    return make_node(a.data + float(s), (a,), _shift_vjp, "shift")


def _shift_vjp(g, out):
    return (g,)


def reciprocal(a, safe: bool = False) -> Tensor:
    """1/a; with ``safe`` the result (and its derivative) is 0 where a == 0."""
    a = as_tensor(a)
    if safe:
        zero = a.data == 0
        data = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, a.data))
    else:
        data = 1.0 / a.data
    return make_node(data, (a,), _reciprocal_vjp, "reciprocal")


def _reciprocal_vjp(g, out):
    return (neg(mul(g, mul(out, out))),)


# ------------------------------------------------------------------- linear


def matmul(a, b) -> Tensor:
    """(m, n) @ (n,) or (m, n) @ (n, p)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim not in (1, 2) or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.data.shape} @ {b.data.shape}")
    return make_node(a.data @ b.data, (a, b), _matmul_vjp, "matmul")


def _matmul_vjp(g, out):
    a, b = out.parents
    da = db = None
    if b.data.ndim == 1:
        if a.requires_grad:
            da = outer(g, b)
    elif a.requires_grad:
        da = matmul(g, transpose(b))
    if b.requires_grad:
        db = matmul(transpose(a), g)
    return da, db


def outer(u, v) -> Tensor:
    u, v = as_tensor(u), as_tensor(v)
    if u.data.ndim != 1 or v.data.ndim != 1:
        raise ValueError("outer: expects two vectors")
    return make_node(np.outer(u.data, v.data), (u, v), _outer_vjp, "outer")


def _outer_vjp(g, out):
    u, v = out.parents
    return (
        matmul(g, v) if u.requires_grad else None,
        matmul(transpose(g), u) if v.requires_grad else None,
    )


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError("transpose: expects a matrix")
    return make_node(np.ascontiguousarray(a.data.T), (a,), _transpose_vjp, "transpose")


def _transpose_vjp(g, out):
    return (transpose(g),)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    return make_node(a.data.reshape(shape), (a,), _reshape_vjp, "reshape")


def _reshape_vjp(g, out):
    return (reshape(g, out.parents[0].data.shape),)


# ------------------------------------------------------- slicing / assembly


def take(a, start: int, stop: int, shape=None) -> Tensor:
    """Contiguous slice ``[start:stop]`` of the flattened tensor, reshaped."""
    a = as_tensor(a)
    flat = a.data.reshape(-1)
    if not 0 <= start <= stop <= flat.size:
        raise IndexError(f"take: [{start}:{stop}] out of range for size {flat.size}")
    data = flat[start:stop]
    if shape is not None:
        data = data.reshape(shape)
    return make_node(data, (a,), partial(_take_vjp, start), "take")


def _take_vjp(start, g, out):
    return (embed(g, start, out.parents[0].data.shape),)


def index(a, i: int) -> Tensor:
    """Scalar element ``i`` of a vector."""
    return take(a, i, i + 1, ())


def embed(a, start: int, shape) -> Tensor:
    """Place ``a`` (flattened) at ``start`` inside zeros of ``shape``."""
    a = as_tensor(a)
    shape = tuple(shape)
    flat = np.zeros(int(np.prod(shape)))
    flat[start : start + a.data.size] = a.data.reshape(-1)
    return make_node(flat.reshape(shape), (a,), partial(_embed_vjp, start), "embed")


def _embed_vjp(start, g, out):
    a = out.parents[0]
    return (take(g, start, start + a.data.size, a.data.shape),)


def concat(parts) -> Tensor:
    """Concatenate along the first axis."""
    parts = tuple(as_tensor(p) for p in parts)
    data = np.concatenate([p.data for p in parts])
    return make_node(data, parts, _concat_vjp, "concat")


def _concat_vjp(g, out):
    grads = []
    offset = 0
    for p in out.parents:
        n = p.data.size
        grads.append(take(g, offset, offset + n, p.data.shape) if p.requires_grad else None)
        offset += n
    return grads


def stack(parts) -> Tensor:
    """Stack equal-shape tensors into a new leading axis."""
    parts = [as_tensor(p) for p in parts]
    flat = concat([reshape(p, (-1,)) if p.data.ndim != 1 else p for p in parts])
    return reshape(flat, (len(parts),) + parts[0].data.shape)


# --------------------------------------------------------------- reductions


def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    return make_node(np.asarray(a.data.sum(axis=axis)), (a,), partial(_sum_vjp, axis), "sum")


def _sum_vjp(axis, g, out):
    return (broadcast_to(g, out.parents[0].data.shape, axis),)


def broadcast_to(a, shape, axis=None) -> Tensor:
    """Inverse of ``sum(., axis)``: repeat ``a`` along ``axis`` (or everywhere)."""
    a = as_tensor(a)
    shape = tuple(shape)
    if axis is None:
        data = np.full(shape, float(a.data))
    else:
        data = np.ascontiguousarray(np.broadcast_to(np.expand_dims(a.data, axis), shape))
    return make_node(data, (a,), partial(_broadcast_vjp, axis), "broadcast")


def _broadcast_vjp(axis, g, out):
    return (sum(g, axis),)


def mean(a) -> Tensor:
    a = as_tensor(a)
    return scale(sum(a), 1.0 / a.data.size)


def l2norm(a) -> Tensor:
    """Euclidean norm of all entries; the gradient at 0 is taken as 0."""
    a = as_tensor(a)
    return make_node(np.asarray(np.sqrt(np.sum(a.data * a.data))), (a,), _l2norm_vjp, "l2norm")


def _l2norm_vjp(g, out):
    a = out.parents[0]
    coef = mul(g, reciprocal(out, safe=True))
    return (mul(broadcast_to(coef, a.data.shape), a),)


# -------------------------------------------------------------- nonlinear


def relu(a) -> Tensor:
    a = as_tensor(a)
    return make_node(np.maximum(a.data, 0.0), (a,), _relu_vjp, "relu")


def _relu_vjp(g, out):
    mask = (out.parents[0].data > 0).astype(np.float64)
    return (mul(g, Tensor(mask)),)


def _sigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    data = _sigmoid_np(np.atleast_1d(a.data)).reshape(a.data.shape)
    return make_node(data, (a,), _sigmoid_vjp, "sigmoid")


def _sigmoid_vjp(g, out):
    return (mul(g, mul(out, shift(neg(out), 1.0))),)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    return make_node(np.tanh(a.data), (a,), _tanh_vjp, "tanh")


def _tanh_vjp(g, out):
    return (mul(g, shift(neg(mul(out, out)), 1.0)),)


def exp(a) -> Tensor:
    a = as_tensor(a)
    return make_node(np.exp(a.data), (a,), _exp_vjp, "exp")


def _exp_vjp(g, out):
    return (mul(g, out),)


def log(a) -> Tensor:
    a = as_tensor(a)
    return make_node(np.log(a.data), (a,), _log_vjp, "log")


def _log_vjp(g, out):
    return (mul(g, reciprocal(out.parents[0])),)


def softmax(a) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 1:
        raise ValueError("softmax: expects a vector")
    e = np.exp(a.data - a.data.max())
    return make_node(e / e.sum(), (a,), _softmax_vjp, "softmax")


def _softmax_vjp(g, out):
    inner = sum(mul(g, out))
    return (mul(out, sub(g, broadcast_to(inner, out.data.shape))),)


def log_softmax(a) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 1:
        raise ValueError("log_softmax: expects a vector")
    shifted = a.data - a.data.max()
    return make_node(shifted - np.log(np.exp(shifted).sum()), (a,), _log_softmax_vjp, "log_softmax")


def _log_softmax_vjp(g, out):
    total = broadcast_to(sum(g), out.data.shape)
    return (sub(g, mul(exp(out), total)),)


def bce(p, target) -> Tensor:
    """Element-wise binary cross-entropy of probabilities ``p`` vs fixed labels.

    ``p`` is clamped to ``[1e-12, 1 - 1e-12]``; clamped entries get no gradient.
    """
    p = as_tensor(p)
    y = np.asarray(target, dtype=np.float64)
    if y.shape != p.data.shape:
        raise ValueError(f"bce: shape mismatch {p.data.shape} vs {y.shape}")
    pc = np.clip(p.data, BCE_CLAMP, 1.0 - BCE_CLAMP)
    data = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    return make_node(data, (p,), partial(_bce_vjp, y), "bce")


def _bce_vjp(y, g, out):
    p = out.parents[0]
    inside = ((p.data >= BCE_CLAMP) & (p.data <= 1.0 - BCE_CLAMP)).astype(np.float64)
    # d/dp = (p - y) / (p (1 - p))
    denom = reciprocal(mul(p, shift(neg(p), 1.0)))
    return (mul(mul(g, Tensor(inside)), mul(sub(p, Tensor(y)), denom)),)


def stop_gradient(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data)


# ------------------------------------------------------ temporal convolution


def conv1d(x, w) -> Tensor:
    """Valid-mode 1-D convolution (cross-correlation).

    ``x``: (C_in, T), ``w``: (C_out, C_in, K) -> (C_out, T - K + 1).
    """
    x, w = as_tensor(x), as_tensor(w)
    cin, T = x.data.shape
    cout, cin_w, K = w.data.shape
    if cin != cin_w or K > T:
        raise ValueError(f"conv1d: input {x.data.shape} incompatible with filters {w.data.shape}")
    return make_node(_conv_np(x.data, w.data), (x, w), _conv1d_vjp, "conv1d")


def _conv_np(x, w):
    K = w.shape[2]
    To = x.shape[1] - K + 1
    out = w[:, :, 0] @ x[:, 0:To]
    for j in range(1, K):
        out = out + w[:, :, j] @ x[:, j : j + To]
    return out


def _conv1d_vjp(g, out):
    x, w = out.parents
    return (
        conv1d_input_grad(g, w, x.data.shape[1]) if x.requires_grad else None,
        conv1d_weight_grad(g, x, w.data.shape[2]) if w.requires_grad else None,
    )


def conv1d_input_grad(g, w, T: int) -> Tensor:
    """Transposed convolution: gradient of ``conv1d`` w.r.t. its input."""
    g, w = as_tensor(g), as_tensor(w)
    K = w.data.shape[2]
    To = g.data.shape[1]
    dx = np.zeros((w.data.shape[1], T))
    for j in range(K):
        dx[:, j : j + To] += w.data[:, :, j].T @ g.data
    return make_node(dx, (g, w), partial(_conv_in_vjp, K), "conv1d_input_grad")


def _conv_in_vjp(K, u, out):
    g, w = out.parents
    return (
        conv1d(u, w) if g.requires_grad else None,
        conv1d_weight_grad(g, u, K) if w.requires_grad else None,
    )


def conv1d_weight_grad(g, x, K: int) -> Tensor:
    """Gradient of ``conv1d`` w.r.t. its filters."""
    g, x = as_tensor(g), as_tensor(x)
    To = g.data.shape[1]
    dw = np.empty((g.data.shape[0], x.data.shape[0], K))
    for j in range(K):
        dw[:, :, j] = g.data @ x.data[:, j : j + To].T
    return make_node(dw, (g, x), _conv_w_vjp, "conv1d_weight_grad")


def _conv_w_vjp(u, out):
    g, x = out.parents
    return (
        conv1d(x, u) if g.requires_grad else None,
        conv1d_input_grad(g, u, x.data.shape[1]) if x.requires_grad else None,
    )


# ---------------------------------------------------------------- LSTM cell


def lstm_cell(W, b, x, h, c) -> Tensor:
    """One LSTM step; returns ``concat(h_new, c_new)``.

    ``W``: (4H, I + H) acting on ``concat(x, h)``; gate order (i, f, g, o).
    """
    W, b, x, h, c = (as_tensor(t) for t in (W, b, x, h, c))
    H = h.data.shape[0]
    if W.data.shape != (4 * H, x.data.shape[0] + H) or b.data.shape != (4 * H,):
        raise ValueError(f"lstm_cell: weight shape {W.data.shape} does not fit H={H}")
    gates, c_new, h_new = kernels.lstm_forward(W.data, b.data, x.data, h.data, c.data)
    data = np.concatenate((h_new, c_new))
    return make_node(data, (W, b, x, h, c), partial(_lstm_vjp, gates, c_new), "lstm_cell")


def _lstm_vjp(gates, c_new, g, out):
    W, b, x, h, c = out.parents
    H = h.data.shape[0]
    I = x.data.shape[0]
    if not is_grad_enabled():
        dW, db, dx, dh, dc = kernels.lstm_backward(
            W.data, x.data, h.data, c.data, gates, c_new, g.data[:H], g.data[H:]
        )
        return Tensor(dW), Tensor(db), Tensor(dx), Tensor(dh), Tensor(dc)
    # Differentiable path: rebuild the cell from primitives so the returned
    # gradients depend on (W, b, x, h, c).
    z = concat((x, h))
    pre = add(matmul(W, z), b)
    i = sigmoid(take(pre, 0, H))
    f = sigmoid(take(pre, H, 2 * H))
    gg = tanh(take(pre, 2 * H, 3 * H))
    o = sigmoid(take(pre, 3 * H, 4 * H))
    cn = add(mul(f, c), mul(i, gg))
    tc = tanh(cn)
    gh = take(g, 0, H)
    gc = take(g, H, 2 * H)
    one_minus = lambda t: shift(neg(t), 1.0)  # noqa: E731
    dc = add(gc, mul(mul(gh, o), one_minus(mul(tc, tc))))
    dpre = concat(
        (
            mul(mul(dc, gg), mul(i, one_minus(i))),
            mul(mul(dc, c), mul(f, one_minus(f))),
            mul(mul(dc, i), one_minus(mul(gg, gg))),
            mul(mul(gh, tc), mul(o, one_minus(o))),
        )
    )
    dW = outer(dpre, z) if W.requires_grad else None
    dz = matmul(transpose(W), dpre)
    return (
        dW,
        dpre,
        take(dz, 0, I) if x.requires_grad else None,
        take(dz, I, I + H) if h.requires_grad else None,
        mul(dc, f) if c.requires_grad else None,
    )


# ------------------------------------------------------ operator overloads


def _radd(a, b):
    return shift(a, b) if np.isscalar(b) else add(a, b)


def _rmul(a, b):
    return scale(a, b) if np.isscalar(b) else mul(a, b)


Tensor.__add__ = _radd
Tensor.__radd__ = _radd
Tensor.__sub__ = lambda a, b: shift(a, -b) if np.isscalar(b) else sub(a, b)
Tensor.__rsub__ = lambda a, b: shift(neg(a), b) if np.isscalar(b) else sub(b, a)
Tensor.__mul__ = _rmul
Tensor.__rmul__ = _rmul
Tensor.__neg__ = neg
Tensor.__matmul__ = matmul
Tensor.__getitem__ = lambda a, i: index(a, i)

core._accumulate = add
