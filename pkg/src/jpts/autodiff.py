"""Minimal reverse-mode automatic differentiation on numpy arrays.

Every operation returns a new :class:`Tensor` that remembers its parents and
a closure mapping the output gradient to parent gradients. :func:`backward`
walks the graph in reverse topological order.

All data is float64. Convolutions are stride 1 with zero "same" padding.
"""

from __future__ import annotations

import itertools

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, ShapeError

LEAKY_SLOPE = 0.3

_node_ids = itertools.count()


class Tensor:
    __slots__ = ("data", "grad", "id", "name", "requires_grad", "needs_grad",
                 "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, *, _parents=(),
                 _backward=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim == 0:
            self.data = self.data.reshape(1)
        self.grad = None
        self.id = next(_node_ids)
        self.name = name
        self.requires_grad = requires_grad
        self.needs_grad = requires_grad or any(p.needs_grad for p in _parents)
        self.op = op
        self._parents = tuple(_parents)
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self.op})"

    def __add__(self, other):
        return add(self, as_tensor(other))

    __radd__ = __add__

    def __matmul__(self, other):
        return matmul(self, other)

    def __mul__(self, c):
        return scale(self, c)

    __rmul__ = __mul__

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


def _node(data, parents, backward_fn, op):
    return Tensor(data, _parents=parents, _backward=backward_fn, op=op)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# --- operations -------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def back(g):
        ga = g @ b.data.T if a.needs_grad else None
        gb = a.data.T @ g if b.needs_grad else None
        return ga, gb

    return _node(a.data @ b.data, (a, b), back, "matmul")


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add cannot broadcast {a.shape} with {b.shape}") from None

    def back(g):
        return (_unbroadcast(g, a.shape) if a.needs_grad else None,
                _unbroadcast(g, b.shape) if b.needs_grad else None)

    return _node(out, (a, b), back, "add")


def scale(x, c):
    """Multiply by a constant scalar."""
    c = float(c)

    def back(g):
        return (g * c,)

    return _node(x.data * c, (x,), back, "scale")


def leaky_relu(x, slope=LEAKY_SLOPE):
    mask = x.data > 0
    out = np.where(mask, x.data, slope * x.data)

    def back(g):
        return (np.where(mask, g, slope * g),)

    return _node(out, (x,), back, "leaky_relu")


def sigmoid(x):
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def back(g):
        return (g * s * (1.0 - s),)

    return _node(s, (x,), back, "sigmoid")


def _softmax(z, axis):
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax_columns(x):
    """Softmax over the rows of each column of a 2-D tensor."""
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_columns needs a 2-D tensor, got shape {x.shape}")
    s = _softmax(x.data, axis=0)

    def back(g):
        return (s * (g - (g * s).sum(axis=0, keepdims=True)),)

    return _node(s, (x,), back, "softmax_columns")


def mse(pred, target):
    """Mean squared error over all elements; ``target`` is treated as constant."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if pred.shape != t.shape:
        raise ShapeError(f"mse shape mismatch: {pred.shape} vs {t.shape}")
    diff = pred.data - t
    n = diff.size

    def back(g):
        return (g * (2.0 / n) * diff,)

    return _node(np.array([np.mean(diff * diff)]), (pred,), back, "mse")


def column_cross_entropy(logits, targets):
    """Cross-entropy of column-softmaxed logits against integer row targets.

    ``logits`` has shape (..., n, n); ``targets`` has shape (..., n) and holds
    the 0-based row index that is correct for each column. The loss is summed
    over columns and averaged over any leading batch dimensions.
    """
    z = logits.data
    if z.ndim < 2 or z.shape[-1] != z.shape[-2]:
        raise ShapeError(f"column_cross_entropy needs (..., n, n) logits, got {logits.shape}")
    t = np.asarray(targets)
    if t.shape != z.shape[:-2] + z.shape[-1:]:
        raise ShapeError(f"targets shape {t.shape} does not match logits {logits.shape}")
    n = z.shape[-1]
    batch = int(np.prod(z.shape[:-2], dtype=np.int64))
    shifted = z - z.max(axis=-2, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-2, keepdims=True))
    log_p = shifted - log_norm
    onehot = (np.arange(n).reshape(n, 1) == t[..., None, :]).astype(np.float64)
    loss = -(log_p * onehot).sum() / batch

    def back(g):
        return (g * (np.exp(log_p) - onehot) / batch,)

    return _node(np.array([loss]), (logits,), back, "column_cross_entropy")


def reshape(x, shape):
    shape = tuple(int(s) for s in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} into {shape}") from None

    def back(g):
        return (g.reshape(x.shape),)

    return _node(out, (x,), back, "reshape")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat failed: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        parts = np.split(g, bounds, axis=axis)
        return tuple(p if t.needs_grad else None for p, t in zip(parts, tensors))

    return _node(out, tuple(tensors), back, "concat")


def conv2d(x, w, b=None):
    """Stride-1 'same' convolution (cross-correlation, as in most DL libraries).

    x: (B, C, H, W) or (C, H, W); w: (O, C, k, k) with odd k; b: (O,).
    """
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise ShapeError(f"conv2d input must be (C,H,W) or (B,C,H,W), got {x.shape}")
    if w.data.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] % 2 == 0:
        raise ShapeError(f"conv2d kernel must be (O,C,k,k) with odd k, got {w.shape}")
    if w.shape[1] != xd.shape[1]:
        raise ShapeError(f"conv2d channel mismatch: input has {xd.shape[1]}, kernel expects {w.shape[1]}")
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(f"conv2d bias must have shape ({w.shape[0]},), got {b.shape}")

    # expand whichever side has fewer channels by the k*k taps
    impl = _conv_scatter if w.shape[0] < w.shape[1] else _conv_gather
    out, grad_fn = impl(xd, w.data, x.needs_grad, w.needs_grad)
    if b is not None:
        out += b.data.reshape(1, -1, 1, 1)
    if squeeze:
        out = out[0]

    def back(g):
        g4 = g[None] if squeeze else g
        gx, gw = grad_fn(g4)
        if gx is not None and squeeze:
            gx = gx[0]
        if b is None:
            return gx, gw
        gb = g4.sum(axis=(0, 2, 3)) if b.needs_grad else None
        return gx, gw, gb

    parents = (x, w, b) if b is not None else (x, w)
    return _node(out, parents, back, "conv2d")


def _conv_gather(xd, w, need_x, need_w):
    """im2col: one GEMM against a (pixels, C*k*k) patch matrix."""
    B, C, H, W = xd.shape
    O, _, k, _ = w.shape
    p = k // 2
    xp = np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p)))
    cols = sliding_window_view(xp, (k, k), axis=(2, 3)).transpose(0, 2, 3, 1, 4, 5)
    cols = cols.reshape(B * H * W, C * k * k)
    wmat = w.reshape(O, C * k * k)
    out = np.ascontiguousarray((cols @ wmat.T).reshape(B, H, W, O).transpose(0, 3, 1, 2))

    def grad_fn(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(B * H * W, O)
        gw = (g2.T @ cols).reshape(w.shape) if need_w else None
        gx = None
        if need_x:
            dcols = (g2 @ wmat).reshape(B, H, W, C, k, k)
            dxp = np.zeros((B, C, H + 2 * p, W + 2 * p))
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i:i + H, j:j + W] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = dxp[:, :, p:p + H, p:p + W]
        return gx, gw

    return out, grad_fn


def _tap_ranges(n, d):
    """Output slice and matching source slice for a tap offset ``d``."""
    lo, hi = max(0, -d), min(n, n - d)
    return slice(lo, hi), slice(lo + d, hi + d)


def _conv_scatter(xd, w, need_x, need_w):
    """Contract channels first for every tap, then add the shifted tap planes."""
    B, C, H, W = xd.shape
    O, _, k, _ = w.shape
    p = k // 2
    xf = xd.transpose(1, 0, 2, 3).reshape(C, B * H * W)
    wr = w.transpose(2, 3, 0, 1).reshape(k * k * O, C)
    taps = (wr @ xf).reshape(k, k, O, B, H, W)
    out = np.zeros((O, B, H, W))
    for i in range(k):
        rows, src_rows = _tap_ranges(H, i - p)
        for j in range(k):
            cols, src_cols = _tap_ranges(W, j - p)
            out[:, :, rows, cols] += taps[i, j][:, :, src_rows, src_cols]
    out = np.ascontiguousarray(out.transpose(1, 0, 2, 3))

    def grad_fn(g):
        gt = g.transpose(1, 0, 2, 3)
        gtaps = np.zeros((k, k, O, B, H, W))
        for i in range(k):
            rows, src_rows = _tap_ranges(H, i - p)
            for j in range(k):
                cols, src_cols = _tap_ranges(W, j - p)
                gtaps[i, j][:, :, src_rows, src_cols] = gt[:, :, rows, cols]
        gtaps = gtaps.reshape(k * k * O, B * H * W)
        gw = (gtaps @ xf.T).reshape(k, k, O, C).transpose(2, 3, 0, 1) if need_w else None
        gx = (wr.T @ gtaps).reshape(C, B, H, W).transpose(1, 0, 2, 3) if need_x else None
        return gx, gw

    return out, grad_fn


_OPS = {
    "matmul": matmul,
    "conv2d": conv2d,
    "add": add,
    "leaky_relu": leaky_relu,
    "sigmoid": sigmoid,
    "softmax_columns": softmax_columns,
    "mse": mse,
    "reshape": reshape,
    "concat": concat,
    "scale": scale,
    "column_cross_entropy": column_cross_entropy,
}


def forward_op(kind, inputs, **attrs):
    """Dispatch an operation by name, e.g. ``forward_op("conv2d", [x, w, b])``."""
    try:
        fn = _OPS[kind]
    except KeyError:
        raise ContractError(f"unknown operation kind {kind!r}") from None
    if kind == "concat":
        return fn(inputs, **attrs)
    return fn(*inputs, **attrs)


# --- backward pass ----------------------------------------------------------

def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack.append((node, True))
        for parent in node._parents:
            if parent.id not in seen and parent.needs_grad:
                stack.append((parent, False))
    return order


def backward(loss):
    """Back-propagate from a scalar ``loss``.

    Returns a map from node id to gradient array for every node that needs a
    gradient, and also stores the gradient on each ``requires_grad`` leaf.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topological_order(loss)
    grads = {loss.id: np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.get(node.id)
        if g is None or node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.needs_grad:
                continue
            prev = grads.get(parent.id)
            grads[parent.id] = pg if prev is None else prev + pg
    for node in order:
        if node.requires_grad:
            node.grad = grads.get(node.id, np.zeros_like(node.data))
    return grads
