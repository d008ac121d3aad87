"""Differentiable tensor operations in (N, C, H, W) layout.

Every op takes :class:`~bamsr.autograd.Tensor` inputs, returns a new Tensor,
and registers a backward closure when any input requires grad. Ops also
report their FLOP cost to an active :func:`~bamsr.autograd.count_ops` block
(1 multiply-accumulate = 2 FLOPs, 1 FLOP per element for activations,
elementwise arithmetic and pooling reductions).
"""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autograd import Tensor, as_tensor, make_result, tally

Scalar = Union[int, float]


def _check4d(x: Tensor, name: str) -> None:
    if x.ndim != 4:
        raise ValueError(f"{name} must be 4-D (N, C, H, W), got shape {x.shape}")


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------


def conv2d(x: Tensor, weight: Tensor, bias: Tensor = None, padding: int = 0) -> Tensor:
    """Stride-1 cross-correlation with zero padding.

    ``out[n, o, y, x] = bias[o] + sum_{c,i,j} weight[o, c, i, j] * xpad[n, c, y+i, x+j]``
    """
    _check4d(x, "input")
    _check4d(weight, "weight")
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")
    n, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise ValueError(f"input has {cin} channels but weight expects {wcin}")
    if bias is not None and bias.shape != (cout,):
        raise ValueError(f"bias shape {bias.shape} does not match {cout} output channels")
    hp, wp = h + 2 * padding, w + 2 * padding
    ho, wo = hp - kh + 1, wp - kw + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"kernel {kh}x{kw} larger than padded input {hp}x{wp}")

    xd = x.data
    if padding:
        xd = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    # (N, C, Ho, Wo, kh, kw) -> rows of receptive fields
    win = sliding_window_view(xd, (kh, kw), axis=(2, 3))
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * kh * kw)
    wmat = weight.data.reshape(cout, cin * kh * kw)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    tally("conv2d", 2 * kh * kw * cin * cout * ho * wo * n)

    def _backward(g: np.ndarray):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, cout)
        gw = (g2.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gb = g2.sum(axis=0) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g2 @ wmat).reshape(n, ho, wo, cin, kh, kw)
            gxp = np.zeros((n, cin, hp, wp), dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + ho, j : j + wo] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
            gx = np.ascontiguousarray(gx)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, _backward, "conv2d")


# ---------------------------------------------------------------------------
# Pooling
# ---------------------------------------------------------------------------


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over H and W: (N, C, H, W) -> (N, C, 1, 1)."""
    _check4d(x, "input")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), keepdims=True)
    tally("global_avg_pool", n * c * h * w)

    def _backward(g):
        return (np.broadcast_to(g / (h * w), x.shape).copy(),)

    return make_result(out, (x,), _backward, "global_avg_pool")


def global_max_pool(x: Tensor) -> Tensor:
    """Max over H and W: (N, C, H, W) -> (N, C, 1, 1). Ties go to the first position."""
    _check4d(x, "input")
    n, c, h, w = x.shape
    flat = x.data.reshape(n, c, h * w)
    idx = flat.argmax(axis=2)
    out = np.take_along_axis(flat, idx[..., None], axis=2).reshape(n, c, 1, 1)
    tally("global_max_pool", n * c * h * w)

    def _backward(g):
        gx = np.zeros((n, c, h * w), dtype=g.dtype)
        np.put_along_axis(gx, idx[..., None], g.reshape(n, c, 1), axis=2)
        return (gx.reshape(x.shape),)

    return make_result(out, (x,), _backward, "global_max_pool")


def channel_max_pool(x: Tensor) -> Tensor:
    """Max over channels: (N, C, H, W) -> (N, 1, H, W).

    The gradient goes to the arg-max channel only; ties resolve to the lowest
    channel index.
    """
    _check4d(x, "input")
    n, c, h, w = x.shape
    idx = x.data.argmax(axis=1)[:, None]
    out = np.take_along_axis(x.data, idx, axis=1)
    tally("channel_max_pool", n * c * h * w)

    def _backward(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        np.put_along_axis(gx, idx, g, axis=1)
        return (gx,)

    return make_result(out, (x,), _backward, "channel_max_pool")


def channel_mean_pool(x: Tensor) -> Tensor:
    """Mean over channels: (N, C, H, W) -> (N, 1, H, W)."""
    _check4d(x, "input")
    n, c, h, w = x.shape
    out = x.data.mean(axis=1, keepdims=True)
    tally("channel_mean_pool", n * c * h * w)

    def _backward(g):
        return (np.broadcast_to(g / c, x.shape).copy(),)

    return make_result(out, (x,), _backward, "channel_mean_pool")


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """Channel-wise PReLU. At exactly zero the positive branch (slope 1) applies."""
    _check4d(x, "input")
    c = x.shape[1]
    if slope.shape != (c,):
        raise ValueError(f"slope has shape {slope.shape}, expected ({c},)")
    a = slope.data.reshape(1, c, 1, 1)
    neg = x.data < 0
    out = np.where(neg, a * x.data, x.data)
    tally("prelu", x.data.size)

    def _backward(g):
        gx = np.where(neg, a * g, g) if x.requires_grad else None
        ga = None
        if slope.requires_grad:
            ga = np.where(neg, g * x.data, 0.0).sum(axis=(0, 2, 3)).astype(slope.dtype)
        return gx, ga

    return make_result(out, (x, slope), _backward, "prelu")


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    out = np.where(pos, x.data, 0.0).astype(x.dtype)
    tally("relu", x.data.size)

    def _backward(g):
        return (np.where(pos, g, 0.0).astype(g.dtype),)

    return make_result(out, (x,), _backward, "relu")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep saturated values inside the open interval (0, 1)
    one, zero = z.dtype.type(1), z.dtype.type(0)
    return np.clip(out, np.nextafter(zero, one), np.nextafter(one, zero), out=out)


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    tally("sigmoid", x.data.size)

    def _backward(g):
        return (g * out * (1.0 - out),)

    return make_result(out, (x,), _backward, "sigmoid")


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if not isinstance(b, Tensor):
        out = a.data + b
        tally("add", out.size)
        return make_result(out, (a,), lambda g: (g,), "add")
    _same_shape(a, b, "add")
    out = a.data + b.data
    tally("add", out.size)
    return make_result(out, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if not isinstance(b, Tensor):
        out = a.data - b
        tally("sub", out.size)
        return make_result(out, (a,), lambda g: (g,), "sub")
    _same_shape(a, b, "sub")
    out = a.data - b.data
    tally("sub", out.size)
    return make_result(out, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    """Elementwise product. Tensor operands must share a shape, except that
    size-1 axes of ``b`` broadcast (used for channel or spatial rescaling)."""
    if not isinstance(b, Tensor):
        return scale(a, b)
    if a.shape != b.shape:
        if a.ndim != b.ndim or any(sb not in (1, sa) for sa, sb in zip(a.shape, b.shape)):
            raise ValueError(f"mul: shape mismatch {a.shape} vs {b.shape}")
    out = a.data * b.data
    tally("mul", out.size)

    def _backward(g):
        ga = g * b.data if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), _backward, "mul")


def scale(a: Tensor, factor: Scalar) -> Tensor:
    out = a.data * factor
    tally("scale", out.size)
    return make_result(out, (a,), lambda g: (g * factor,), "scale")


def broadcast_hadamard(channel_w: Tensor, spatial_w: Tensor, features: Tensor) -> Tensor:
    """``out[n,c,h,w] = channel_w[n,c,0,0] * spatial_w[n,0,h,w] * features[n,c,h,w]``."""
    for t, name in ((channel_w, "channel weights"), (spatial_w, "spatial weights"), (features, "features")):
        _check4d(t, name)
    n, c, h, w = features.shape
    if channel_w.shape != (n, c, 1, 1):
        raise ValueError(f"channel weights shape {channel_w.shape}, expected {(n, c, 1, 1)}")
    if spatial_w.shape != (n, 1, h, w):
        raise ValueError(f"spatial weights shape {spatial_w.shape}, expected {(n, 1, h, w)}")
    cw, sw, f = channel_w.data, spatial_w.data, features.data
    weight = cw * sw
    out = weight * f
    tally("broadcast_hadamard", 2 * n * c * h * w)

    def _backward(g):
        gcw = (g * sw * f).sum(axis=(2, 3), keepdims=True) if channel_w.requires_grad else None
        gsw = (g * cw * f).sum(axis=1, keepdims=True) if spatial_w.requires_grad else None
        gf = g * weight if features.requires_grad else None
        return gcw, gsw, gf

    return make_result(out, (channel_w, spatial_w, features), _backward, "broadcast_hadamard")


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    for t in tensors:
        _check4d(t, "input")
    out = np.concatenate([t.data for t in tensors], axis=1)
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def _backward(g):
        return tuple(g[:, bounds[i] : bounds[i + 1]].copy() for i in range(len(tensors)))

    return make_result(out, tuple(tensors), _backward, "concat_channels")


def sum_all(x: Tensor) -> Tensor:
    """Sum of every element, returned with shape (1, 1, 1, 1)."""
    out = np.asarray(x.data.sum(), dtype=x.dtype).reshape(1, 1, 1, 1)

    def _backward(g):
        return (np.full(x.shape, g.reshape(-1)[0], dtype=x.dtype),)

    return make_result(out, (x,), _backward, "sum_all")


# ---------------------------------------------------------------------------
# Rearrangement and resampling
# ---------------------------------------------------------------------------


def pixel_shuffle_array(x: np.ndarray, s: int) -> np.ndarray:
    n, cs2, h, w = x.shape
    c = cs2 // (s * s)
    return x.reshape(n, c, s, s, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h * s, w * s)


def pixel_unshuffle_array(x: np.ndarray, s: int) -> np.ndarray:
    """Inverse of :func:`pixel_shuffle_array`."""
    n, c, hs, ws = x.shape
    h, w = hs // s, ws // s
    return x.reshape(n, c, h, s, w, s).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * s * s, h, w)


def pixel_shuffle(x: Tensor, s: int) -> Tensor:
    """``out[n, c, s*h+i, s*w+j] = in[n, c*s*s + i*s + j, h, w]``."""
    _check4d(x, "input")
    if s < 1:
        raise ValueError(f"scale must be >= 1, got {s}")
    if x.shape[1] % (s * s):
        raise ValueError(f"{x.shape[1]} channels not divisible by s^2={s * s}")
    out = np.ascontiguousarray(pixel_shuffle_array(x.data, s))

    def _backward(g):
        return (np.ascontiguousarray(pixel_unshuffle_array(g, s)),)

    return make_result(out, (x,), _backward, "pixel_shuffle")


def resize_separable(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Apply a separable linear resampler: ``out = rows @ x @ cols.T`` per plane.

    ``rows`` is (Hout, Hin) and ``cols`` is (Wout, Win); both are constants.
    """
    _check4d(x, "input")
    n, c, h, w = x.shape
    if rows.shape[1] != h or cols.shape[1] != w:
        raise ValueError(f"resampler {rows.shape}x{cols.shape} does not fit input {x.shape}")
    rows = rows.astype(x.dtype, copy=False)
    cols = cols.astype(x.dtype, copy=False)
    out = np.matmul(np.matmul(rows, x.data), cols.T)
    ho, wo = rows.shape[0], cols.shape[0]
    tally("resize", 2 * n * c * (ho * h * w + ho * w * wo))

    def _backward(g):
        return (np.matmul(np.matmul(rows.T, g), cols),)

    return make_result(out, (x,), _backward, "resize")


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def l1_loss(prediction: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error, shape (1, 1, 1, 1). Subgradient at zero is zero."""
    target = as_tensor(target)
    _same_shape(prediction, target, "l1_loss")
    diff = prediction.data - target.data
    m = diff.size
    out = np.asarray(np.abs(diff).mean(), dtype=prediction.dtype).reshape(1, 1, 1, 1)

    def _backward(g):
        s = np.sign(diff) * (g.reshape(-1)[0] / m)
        return (s if prediction.requires_grad else None, -s if target.requires_grad else None)

    return make_result(out, (prediction, target), _backward, "l1_loss")
