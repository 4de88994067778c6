# dpmn/diffcore/ops.py
'''Operator catalog: forward values plus the matching backward rule for each op'''

from functools import lru_cache
from typing import Sequence

import numpy as np
from einops import rearrange as _rearrange
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf, expit

from dpmn.diffcore.node import (
    DiffNode,
    NonFiniteError,
    Precision,
    ShapeError,
    constant,
    get_precision,
)

_SQRT_2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _result(values: np.ndarray, op: str, parents: Sequence[DiffNode], backward_fn) -> DiffNode:
    requires_grad = any(p.requires_grad for p in parents)
    node = DiffNode(
        values,
        requires_grad=requires_grad,
        parents=parents if requires_grad else (),
        backward_fn=backward_fn if requires_grad else None,
        op=op,
    )
    if get_precision() is Precision.VERIFY and not np.all(np.isfinite(node.values)):
        raise NonFiniteError(op)
    return node


def as_node(x) -> DiffNode:
    return x if isinstance(x, DiffNode) else constant(x)


def _broadcast_shape(op: str, a: DiffNode, b: DiffNode) -> tuple[int, ...]:
    # only missing leading dims broadcast
    sa, sb = a.shape, b.shape
    if sa == sb:
        return sa
    if len(sa) > len(sb) and sa[len(sa) - len(sb):] == sb:
        return sa
    if len(sb) > len(sa) and sb[len(sb) - len(sa):] == sa:
        return sb
    raise ShapeError(op, sa, sb, detail="broadcasting is limited to leading dims")


def _unbroadcast(gradient: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if gradient.shape == shape:
        return gradient
    return gradient.reshape(-1, *shape).sum(axis=0)


# elementwise ---------------------------------------------------------------

def add(a, b) -> DiffNode:
    a, b = as_node(a), as_node(b)
    _broadcast_shape("add", a, b)

    def _backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.shape))

    return _result(a.values + b.values, "add", (a, b), _backward)


def sub(a, b) -> DiffNode:
    a, b = as_node(a), as_node(b)
    _broadcast_shape("sub", a, b)

    def _backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(-_unbroadcast(g, b.shape))

    return _result(a.values - b.values, "sub", (a, b), _backward)


def mul(a, b) -> DiffNode:
    a, b = as_node(a), as_node(b)
    _broadcast_shape("mul", a, b)

    def _backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.values, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.values, b.shape))

    return _result(a.values * b.values, "mul", (a, b), _backward)


def neg(x) -> DiffNode:
    x = as_node(x)

    def _backward(g):
        x.accumulate(-g)

    return _result(-x.values, "neg", (x,), _backward)


def absolute(x) -> DiffNode:
    x = as_node(x)

    def _backward(g):
        x.accumulate(g * np.sign(x.values))

    return _result(np.abs(x.values), "abs", (x,), _backward)


def gelu(x) -> DiffNode:
    """Exact GELU, x * Phi(x)."""
    x = as_node(x)
    cdf = 0.5 * (1.0 + erf(x.values / _SQRT_2))

    def _backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.values * x.values)
        x.accumulate(g * (cdf + x.values * pdf))

    return _result(x.values * cdf, "gelu", (x,), _backward)


def sigmoid(x) -> DiffNode:
    x = as_node(x)
    s = expit(x.values)

    def _backward(g):
        x.accumulate(g * s * (1.0 - s))

    return _result(s, "sigmoid", (x,), _backward)


def stop_gradient(x) -> DiffNode:
    x = as_node(x)
    return DiffNode(x.values.copy(), requires_grad=False, op="stop_gradient")


# linear algebra ------------------------------------------------------------

def matmul(a, b) -> DiffNode:
    a, b = as_node(a), as_node(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    if b.ndim != 2 and (a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2]):
        raise ShapeError("matmul", a.shape, b.shape, detail="batch dims must match")

    def _backward(g):
        if a.requires_grad:
            a.accumulate(g @ np.swapaxes(b.values, -1, -2))
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                flat_a = a.values.reshape(-1, a.shape[-1])
                b.accumulate(flat_a.T @ g.reshape(-1, g.shape[-1]))
            else:
                b.accumulate(np.swapaxes(a.values, -1, -2) @ g)

    return _result(a.values @ b.values, "matmul", (a, b), _backward)


# convolutions --------------------------------------------------------------

def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> DiffNode:
    """2-D convolution over an H×W×Cin image with a kh×kw×Cin×Cout kernel."""
    x, weight = as_node(x), as_node(weight)
    if x.ndim != 3 or weight.ndim != 4 or weight.shape[2] != x.shape[2]:
        raise ShapeError("conv2d", x.shape, weight.shape)
    if stride not in (1, 2):
        raise ShapeError("conv2d", x.shape, weight.shape, detail=f"stride {stride} not in (1, 2)")
    h, w, _ = x.shape
    kh, kw, _, c_out = weight.shape
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (w + 2 * padding - kw) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError("conv2d", x.shape, weight.shape, detail="kernel larger than padded input")
    parents = [x, weight]
    if bias is not None:
        bias = as_node(bias)
        if bias.shape != (c_out,):
            raise ShapeError("conv2d", weight.shape, bias.shape, detail="bias must be (Cout,)")
        parents.append(bias)

    padded = np.pad(x.values, ((padding, padding), (padding, padding), (0, 0)))
    patches = sliding_window_view(padded, (kh, kw), axis=(0, 1))[::stride, ::stride]
    out = np.tensordot(patches, weight.values.transpose(2, 0, 1, 3), axes=([2, 3, 4], [0, 1, 2]))
    if bias is not None:
        out = out + bias.values

    def _backward(g):
        if weight.requires_grad:
            gw = np.tensordot(patches, g, axes=([0, 1], [0, 1]))
            weight.accumulate(gw.transpose(1, 2, 0, 3))
        if bias is not None and bias.requires_grad:
            bias.accumulate(g.sum(axis=(0, 1)))
        if x.requires_grad:
            g_patch = np.tensordot(g, weight.values, axes=([2], [3]))
            g_padded = np.zeros_like(padded)
            row_end = stride * (out_h - 1) + 1
            col_end = stride * (out_w - 1) + 1
            for i in range(kh):
                for j in range(kw):
                    g_padded[i:i + row_end:stride, j:j + col_end:stride, :] += g_patch[:, :, i, j, :]
            x.accumulate(g_padded[padding:padding + h, padding:padding + w])

    return _result(out, "conv2d", parents, _backward)


def depthwise_conv2d(x, weight, bias=None) -> DiffNode:
    """3×3 per-channel convolution, stride 1, zero padding 1."""
    x, weight = as_node(x), as_node(weight)
    if x.ndim != 3 or weight.shape != (3, 3, x.shape[2]):
        raise ShapeError("depthwise_conv2d", x.shape, weight.shape)
    h, w, _ = x.shape
    parents = [x, weight]
    if bias is not None:
        bias = as_node(bias)
        if bias.shape != (x.shape[2],):
            raise ShapeError("depthwise_conv2d", x.shape, bias.shape)
        parents.append(bias)

    padded = np.pad(x.values, ((1, 1), (1, 1), (0, 0)))
    patches = sliding_window_view(padded, (3, 3), axis=(0, 1))
    out = np.einsum("hwcij,ijc->hwc", patches, weight.values)
    if bias is not None:
        out = out + bias.values

    def _backward(g):
        if weight.requires_grad:
            weight.accumulate(np.einsum("hwcij,hwc->ijc", patches, g))
        if bias is not None and bias.requires_grad:
            bias.accumulate(g.sum(axis=(0, 1)))
        if x.requires_grad:
            g_padded = np.zeros_like(padded)
            for i in range(3):
                for j in range(3):
                    g_padded[i:i + h, j:j + w, :] += g * weight.values[i, j, :]
            x.accumulate(g_padded[1:1 + h, 1:1 + w])

    return _result(out, "depthwise_conv2d", parents, _backward)


# shape manipulation --------------------------------------------------------

def reshape(x, shape: Sequence[int]) -> DiffNode:
    x = as_node(x)
    try:
        out = x.values.reshape(shape)
    except ValueError as e:
        raise ShapeError("reshape", x.shape, tuple(shape)) from e

    def _backward(g):
        x.accumulate(g.reshape(x.shape))

    return _result(out, "reshape", (x,), _backward)


def transpose(x, axes: Sequence[int]) -> DiffNode:
    x = as_node(x)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError("transpose", x.shape, tuple(axes))
    inverse = np.argsort(axes)

    def _backward(g):
        x.accumulate(g.transpose(inverse))

    return _result(x.values.transpose(axes), "transpose", (x,), _backward)


def getitem(x, index) -> DiffNode:
    x = as_node(x)
    out = x.values[index]

    def _backward(g):
        full = np.zeros_like(x.values)
        full[index] = g
        x.accumulate(full)

    return _result(np.array(out), "slice", (x,), _backward)


def concat(nodes: Sequence, axis: int = -1) -> DiffNode:
    nodes = [as_node(n) for n in nodes]
    if not nodes:
        raise ShapeError("concat", detail="nothing to concatenate")
    ndim = nodes[0].ndim
    axis = axis % ndim
    for n in nodes[1:]:
        if n.ndim != ndim or n.shape[:axis] != nodes[0].shape[:axis] \
                or n.shape[axis + 1:] != nodes[0].shape[axis + 1:]:
            raise ShapeError("concat", nodes[0].shape, n.shape, detail=f"axis {axis}")
    sizes = [n.shape[axis] for n in nodes]
    splits = np.cumsum(sizes)[:-1]

    def _backward(g):
        for n, part in zip(nodes, np.split(g, splits, axis=axis)):
            if n.requires_grad:
                n.accumulate(part)

    return _result(np.concatenate([n.values for n in nodes], axis=axis), "concat", nodes, _backward)


def roll(x, shifts: Sequence[int], axes: Sequence[int]) -> DiffNode:
    x = as_node(x)
    shifts, axes = tuple(shifts), tuple(axes)

    def _backward(g):
        x.accumulate(np.roll(g, tuple(-s for s in shifts), axis=axes))

    return _result(np.roll(x.values, shifts, axis=axes), "roll", (x,), _backward)


@lru_cache(maxsize=256)
def _rearrange_permutation(pattern: str, shape: tuple[int, ...], sizes: tuple) -> np.ndarray:
    positions = np.arange(int(np.prod(shape))).reshape(shape)
    return np.ascontiguousarray(_rearrange(positions, pattern, **dict(sizes))).reshape(-1)


def rearrange(x, pattern: str, **sizes: int) -> DiffNode:
    """einops-style axis rearrangement; backward scatters through the inverse permutation."""
    x = as_node(x)
    try:
        out = np.ascontiguousarray(_rearrange(x.values, pattern, **sizes))
    except Exception as e:  # einops raises its own EinopsError
        raise ShapeError("rearrange", x.shape, detail=f"{pattern}: {e}") from e
    permutation = _rearrange_permutation(pattern, x.shape, tuple(sorted(sizes.items())))

    def _backward(g):
        flat = np.empty(x.size, dtype=g.dtype)
        flat[permutation] = g.reshape(-1)
        x.accumulate(flat.reshape(x.shape))

    return _result(out, "rearrange", (x,), _backward)


def pixel_shuffle(x, r: int) -> DiffNode:
    """H×W×(C·r²) → (H·r)×(W·r)×C with out(y·r+dy, x·r+dx, c) = in(y, x, c·r² + dy·r + dx)."""
    x = as_node(x)
    if x.ndim != 3 or x.shape[2] % (r * r) != 0:
        raise ShapeError("pixel_shuffle", x.shape, r, detail="channels must be divisible by r^2")
    pattern = "h w (c dy dx) -> (h dy) (w dx) c"
    inverse = "(h dy) (w dx) c -> h w (c dy dx)"

    def _backward(g):
        x.accumulate(_rearrange(g, inverse, dy=r, dx=r))

    out = np.ascontiguousarray(_rearrange(x.values, pattern, dy=r, dx=r))
    return _result(out, "pixel_shuffle", (x,), _backward)


def pixel_unshuffle(x, r: int) -> DiffNode:
    """Exact inverse of pixel_shuffle."""
    x = as_node(x)
    if x.ndim != 3 or x.shape[0] % r or x.shape[1] % r:
        raise ShapeError("pixel_unshuffle", x.shape, r, detail="r must divide spatial dims")
    pattern = "(h dy) (w dx) c -> h w (c dy dx)"
    inverse = "h w (c dy dx) -> (h dy) (w dx) c"

    def _backward(g):
        x.accumulate(_rearrange(g, inverse, dy=r, dx=r))

    out = np.ascontiguousarray(_rearrange(x.values, pattern, dy=r, dx=r))
    return _result(out, "pixel_unshuffle", (x,), _backward)


def upsample_nearest(x, r: int) -> DiffNode:
    x = as_node(x)
    if x.ndim != 3:
        raise ShapeError("upsample_nearest", x.shape)
    h, w, c = x.shape
    out = np.repeat(np.repeat(x.values, r, axis=0), r, axis=1)

    def _backward(g):
        x.accumulate(g.reshape(h, r, w, r, c).sum(axis=(1, 3)))

    return _result(out, "upsample_nearest", (x,), _backward)


# reductions / normalization ------------------------------------------------

def _normalize_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def reduce_sum(x, axis=None) -> DiffNode:
    x = as_node(x)
    axes = _normalize_axes(axis, x.ndim)

    def _backward(g):
        x.accumulate(np.broadcast_to(np.expand_dims(g, axes), x.shape))

    return _result(x.values.sum(axis=axes), "sum", (x,), _backward)


def reduce_mean(x, axis=None) -> DiffNode:
    x = as_node(x)
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1

    def _backward(g):
        x.accumulate(np.broadcast_to(np.expand_dims(g, axes), x.shape) / count)

    return _result(x.values.mean(axis=axes), "mean", (x,), _backward)


def global_avg_pool(x) -> DiffNode:
    """H×W×C → C."""
    x = as_node(x)
    if x.ndim != 3:
        raise ShapeError("global_avg_pool", x.shape)
    h, w, _ = x.shape

    def _backward(g):
        x.accumulate(np.broadcast_to(g, x.shape) / (h * w))

    return _result(x.values.mean(axis=(0, 1)), "global_avg_pool", (x,), _backward)


def softmax(x, mask: np.ndarray | None = None) -> DiffNode:
    """Softmax over the last axis; ``mask`` is an additive 0/-inf array applied internally."""
    x = as_node(x)
    logits = x.values if mask is None else x.values + mask
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def _backward(g):
        x.accumulate(s * (g - (g * s).sum(axis=-1, keepdims=True)))

    return _result(s, "softmax", (x,), _backward)


LAYERNORM_VAR_FLOOR = 1e-6


def layernorm(x, gamma, beta, var_floor: float = LAYERNORM_VAR_FLOOR) -> DiffNode:
    """Exact normalization of every row whose variance is at least ``var_floor``.

    Rows below the floor (blank prior patches) are centred and divided by
    sqrt(var_floor) instead.
    """
    x, gamma, beta = as_node(x), as_node(gamma), as_node(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError("layernorm", x.shape, gamma.shape, beta.shape)
    mu = x.values.mean(axis=-1, keepdims=True)
    centered = x.values - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    live = var >= var_floor
    inv_std = 1.0 / np.sqrt(np.where(live, var, var_floor))
    x_hat = centered * inv_std

    def _backward(g):
        if gamma.requires_grad:
            gamma.accumulate((g * x_hat).reshape(-1, d).sum(axis=0))
        if beta.requires_grad:
            beta.accumulate(g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            g_hat = g * gamma.values
            # floored rows have a constant scale, so only the centring term remains
            variance_term = np.where(live, x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True), 0.0)
            x.accumulate(inv_std * (g_hat - g_hat.mean(axis=-1, keepdims=True) - variance_term))

    return _result(x_hat * gamma.values + beta.values, "layernorm", (x, gamma, beta), _backward)
