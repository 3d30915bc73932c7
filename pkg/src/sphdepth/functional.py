"""Differentiable operations on :class:`~sphdepth.tensor.Tensor`.

Image tensors use the ``(N, C, H, W)`` layout and convolution weights
``(F, C, kh, kw)``. Convolutions are cross-correlations computed through
strided patch views and ``tensordot``.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyMaskError, ShapeError
from .tensor import Tensor, as_tensor, make_result, is_grad_enabled


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result(a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result(a.data * b.data, (a, b),
                       lambda g: (_unbroadcast(g * b.data, a.shape),
                                  _unbroadcast(g * a.data, b.shape)))


def sum(x) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    return make_result(np.sum(x.data), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean(x) -> Tensor:
    x = as_tensor(x)
    n = x.size
    return make_result(np.mean(x.data), (x,), lambda g: (np.full(x.shape, g / n),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return make_result(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,))


# --- convolution -----------------------------------------------------------

def _patches(x, kh, kw, stride):
    """``(N, C, Ho, Wo, kh, kw)`` strided view of all kernel windows."""
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def _fold(cols, out_shape, stride):
    """Scatter-add ``(N, C, Ho, Wo, kh, kw)`` window values into an image."""
    N, C, Ho, Wo, kh, kw = cols.shape
    out = np.zeros(out_shape)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride] += cols[..., i, j]
    return out


def _check_conv(x, w, name):
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"{name}: expected 4-d input and weight, got {x.shape} and {w.shape}")


def _conv_forward(x, w, stride):
    cols = _patches(x, w.shape[2], w.shape[3], stride)
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))   # N, Ho, Wo, F
    return out.transpose(0, 3, 1, 2), cols


def _conv_input_grad(g, w, in_shape, stride):
    # g: (N, F, Ho, Wo) -> d/dx of the padded input
    dcols = np.tensordot(g, w, axes=([1], [0]))                   # N, Ho, Wo, C, kh, kw
    return _fold(dcols.transpose(0, 3, 1, 2, 4, 5), in_shape, stride)


def conv2d(x, weight, bias=None, stride=1, pad=0) -> Tensor:
    """Zero-padded 2-d cross-correlation."""
    x, weight = as_tensor(x), as_tensor(weight)
    _check_conv(x, weight, "conv2d")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d: input has {x.shape[1]} channels, weight expects {weight.shape[1]}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    if xp.shape[2] < weight.shape[2] or xp.shape[3] < weight.shape[3]:
        raise ShapeError(f"conv2d: kernel {weight.shape[2:]} larger than padded input {xp.shape[2:]}")
    out, cols = _conv_forward(xp, weight.data, stride)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"conv2d: bias shape {bias.shape} != ({weight.shape[0]},)")
        out = out + bias.data[None, :, None, None]
        parents.append(bias)

    def backward(g):
        gx = gw = None
        if x.requires_grad:
            gxp = _conv_input_grad(g, weight.data, xp.shape, stride)
            gx = gxp[:, :, pad:pad + x.shape[2], pad:pad + x.shape[3]] if pad else gxp
        if weight.requires_grad:
            gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return make_result(out, parents, backward)


def transposed_conv2d(x, weight, bias=None, stride=1) -> Tensor:
    """Adjoint of :func:`conv2d` (no padding); ``weight`` is ``(F_in, C_out, n, n)``.

    Output spatial size is ``stride * (in - 1) + n``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    _check_conv(x, weight, "transposed_conv2d")
    if stride < 1:
        raise ShapeError("transposed_conv2d: stride must be >= 1")
    if x.shape[1] != weight.shape[0]:
        raise ShapeError(f"transposed_conv2d: input has {x.shape[1]} channels, weight expects {weight.shape[0]}")
    N, _, H, W = x.shape
    kh, kw = weight.shape[2:]
    out_shape = (N, weight.shape[1], stride * (H - 1) + kh, stride * (W - 1) + kw)
    out = _conv_input_grad(x.data, weight.data, out_shape, stride)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
        parents.append(bias)

    def backward(g):
        gx = gw = None
        if x.requires_grad:
            gx, _ = _conv_forward(g, weight.data, stride)
        if weight.requires_grad:
            cols = _patches(g, kh, kw, stride)
            gw = np.tensordot(x.data, cols, axes=([0, 2, 3], [0, 2, 3]))
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return make_result(out, parents, backward)


def maxpool2d(x, n, stride, pad=0) -> Tensor:
    """Max over ``n x n`` windows; ties go to the lowest flat window index."""
    x = as_tensor(x)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf) if pad else x.data
    cols = _patches(xp, n, n, stride)
    N, C, Ho, Wo = cols.shape[:4]
    flat = cols.reshape(N, C, Ho, Wo, n * n)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        onehot = np.zeros((N, C, Ho, Wo, n * n))
        np.put_along_axis(onehot, arg[..., None], g[..., None], axis=-1)
        gxp = _fold(onehot.reshape(N, C, Ho, Wo, n, n), xp.shape, stride)
        return (gxp[:, :, pad:pad + x.shape[2], pad:pad + x.shape[3]] if pad else gxp,)

    return make_result(out, (x,), backward)


class BatchNormState:
    """Running statistics for :func:`batch_norm` (updated in place)."""

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps


def batch_norm(x, scale, shift, state: BatchNormState, training=True) -> Tensor:
    """Per-channel normalization over ``(N, H, W)`` with learned scale/shift.

    Training mode normalizes with batch statistics and folds them into the
    running averages (unbiased variance); eval mode uses the running values.
    """
    x, scale, shift = as_tensor(x), as_tensor(scale), as_tensor(shift)
    axes = (0, 2, 3)
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = x.size // x.shape[1]
        if is_grad_enabled():
            unbiased = var * m / max(m - 1, 1)
            state.running_mean = (1 - state.momentum) * state.running_mean + state.momentum * mu
            state.running_var = (1 - state.momentum) * state.running_var + state.momentum * unbiased
    else:
        mu, var = state.running_mean, state.running_var
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
    out = xhat * scale.data[None, :, None, None] + shift.data[None, :, None, None]

    def backward(g):
        gscale = (g * xhat).sum(axis=axes)
        gshift = g.sum(axis=axes)
        gx = None
        if x.requires_grad:
            gxhat = g * scale.data[None, :, None, None]
            if training:
                m = x.size // x.shape[1]
                gx = (inv[None, :, None, None] / m) * (
                    m * gxhat
                    - gxhat.sum(axis=axes, keepdims=True)
                    - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True)
                )
            else:
                gx = gxhat * inv[None, :, None, None]
        return gx, gscale, gshift

    return make_result(out, (x, scale, shift), backward)


def l1_loss(pred, target, mask=None) -> Tensor:
    """Mean absolute error over the pixels where ``mask`` is true."""
    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss: prediction {pred.shape} vs target {target.shape}")
    mask = np.ones(pred.shape, bool) if mask is None else np.asarray(mask, bool)
    if mask.shape != pred.shape:
        raise ShapeError(f"l1_loss: mask {mask.shape} vs prediction {pred.shape}")
    count = int(mask.sum())
    if count == 0:
        raise EmptyMaskError("l1_loss: mask selects no pixel")
    diff = pred.data - target
    value = np.abs(diff[mask]).sum() / count
    return make_result(value, (pred,), lambda g: (g * np.sign(diff) * mask / count,))


def crop(x, top, left, h, w) -> Tensor:
    """Slice ``[..., top:top+h, left:left+w]``."""
    x = as_tensor(x)

    def backward(g):
        gx = np.zeros(x.shape)
        gx[..., top:top + h, left:left + w] = g
        return (gx,)

    return make_result(x.data[..., top:top + h, left:left + w].copy(), (x,), backward)


# --- resampling ------------------------------------------------------------

def upsample_nearest(x, factor=2) -> Tensor:
    x = as_tensor(x)
    out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)

    def backward(g):
        N, C, H, W = x.shape
        return (g.reshape(N, C, H, factor, W, factor).sum(axis=(3, 5)),)

    return make_result(out, (x,), backward)


def bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """``(n_out, n_in)`` 1-d linear interpolation matrix, pixel-center aligned."""
    m = np.zeros((n_out, n_in))
    if n_in == n_out:
        return np.eye(n_in)
    pos = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo), 1 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


def resize_bilinear(x, size) -> Tensor:
    """Resize the trailing two axes of ``x`` to ``size = (h, w)``."""
    x = as_tensor(x)
    h, w = size
    if x.shape[-2:] == (h, w):
        return x
    ry = bilinear_matrix(x.shape[-2], h)
    rx = bilinear_matrix(x.shape[-1], w)
    out = np.einsum("ij,...jk,lk->...il", ry, x.data, rx, optimize=True)
    return make_result(out, (x,), lambda g: (np.einsum("ij,...il,lk->...jk", ry, g, rx, optimize=True),))
