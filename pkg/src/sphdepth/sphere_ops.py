"""Spherical convolution and pooling on equirectangular feature maps.

A :class:`GatherPlan` turns a :class:`~sphdepth.geometry.SamplingGrid` into
bilinear interpolation weights over four integer neighbours (columns wrap,
rows clamp). The plan is stored as a sparse ``(out_h*out_w*n*n, H*W)``
matrix so the gather is one sparse product and its adjoint is the
transpose product.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ShapeError
from .geometry import KernelSpec, SamplingGrid, build_sampling_grid, default_kernel
from .tensor import Tensor, as_tensor, make_result

__all__ = ["GatherPlan", "make_plan", "plan_for", "bilinear_gather", "sphere_conv2d", "sphere_pool"]


@dataclass(frozen=True, eq=False)
class GatherPlan:
    grid: SamplingGrid
    index: np.ndarray     # (out_h, out_w, n*n, 4) flat source indices
    weight: np.ndarray    # (out_h, out_w, n*n, 4), rows sum to 1
    matrix: sp.csr_matrix

    @property
    def in_shape(self):
        return self.grid.H, self.grid.W

    @property
    def out_shape(self):
        return self.grid.out_h, self.grid.out_w

    @property
    def n(self):
        return self.grid.n


def make_plan(grid: SamplingGrid) -> GatherPlan:
    H, W = grid.H, grid.W
    u, v = grid.coords[..., 0], grid.coords[..., 1]
    u0 = np.floor(u)
    v0 = np.floor(v)
    fu, fv = u - u0, v - v0
    u0 = u0.astype(np.int64) % W
    u1 = (u0 + 1) % W
    v0 = np.clip(v0.astype(np.int64), 0, H - 1)
    v1 = np.minimum(v0 + 1, H - 1)
    index = np.stack([v0 * W + u0, v0 * W + u1, v1 * W + u0, v1 * W + u1], axis=-1)
    weight = np.stack([(1 - fv) * (1 - fu), (1 - fv) * fu, fv * (1 - fu), fv * fu], axis=-1)
    rows = np.repeat(np.arange(index.size // 4), 4)
    matrix = sp.csr_matrix((weight.ravel(), (rows, index.ravel())), shape=(index.size // 4, H * W))
    matrix.sum_duplicates()
    index.setflags(write=False)
    weight.setflags(write=False)
    return GatherPlan(grid, index, weight, matrix)


@functools.lru_cache(maxsize=256)
def _cached_plan(W, H, k, stride):
    return make_plan(build_sampling_grid(W, H, k, stride))


def plan_for(H: int, W: int, n: int, stride: int = 1, kernel: KernelSpec | None = None) -> GatherPlan:
    """Cached plan for an ``n x n`` kernel on an ``H x W`` map (default angular steps)."""
    k = kernel if kernel is not None else default_kernel(n, W, H)
    if k.n != n:
        raise ShapeError(f"kernel side {k.n} != {n}")
    return _cached_plan(int(W), int(H), k, int(stride))


def bilinear_gather(x, plan: GatherPlan) -> Tensor:
    """Sample ``x`` at every grid tap: ``(N, C, H, W) -> (N, C, out_h, out_w, n*n)``."""
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[2:] != plan.in_shape:
        raise ShapeError(f"gather plan expects (*, *, {plan.in_shape}), got {x.shape}")
    N, C, H, W = x.shape
    oh, ow = plan.out_shape
    flat = x.data.reshape(N * C, H * W)
    out = (plan.matrix @ flat.T).T.reshape(N, C, oh, ow, plan.n * plan.n)

    def backward(g):
        gflat = (plan.matrix.T @ g.reshape(N * C, -1).T).T
        return (np.ascontiguousarray(gflat).reshape(N, C, H, W),)

    return make_result(out, (x,), backward)


def sphere_conv2d(x, weight, bias, plan: GatherPlan) -> Tensor:
    """Spherical convolution: gather, then contract taps with the shared kernel.

    Kernel tap ``[r, c]`` of ``weight`` (shape ``(F, C, n, n)``) multiplies
    the grid sample at the same kernel position, on every latitude.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    F_, C, kh, kw = weight.shape
    if kh != plan.n or kw != plan.n:
        raise ShapeError(f"weight kernel {kh}x{kw} does not match plan side {plan.n}")
    if x.ndim != 4 or x.shape[1] != C:
        raise ShapeError(f"input {x.shape} incompatible with weight {weight.shape}")
    g = bilinear_gather(x, plan)
    N, _, oh, ow, T = g.shape
    gd = g.data
    w2 = weight.data.reshape(F_, C * T)
    cols = gd.transpose(0, 2, 3, 1, 4).reshape(N * oh * ow, C * T)
    out = (cols @ w2.T).reshape(N, oh, ow, F_).transpose(0, 3, 1, 2)
    parents = [g, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (F_,):
            raise ShapeError(f"bias shape {bias.shape} != ({F_},)")
        out = out + bias.data[None, :, None, None]
        parents.append(bias)

    def backward(grad):
        gm = grad.transpose(0, 2, 3, 1).reshape(N * oh * ow, F_)
        gg = None
        if g.requires_grad:
            gg = (gm @ w2).reshape(N, oh, ow, C, T).transpose(0, 3, 1, 2, 4)
        gw = (gm.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        res = [gg, gw]
        if bias is not None:
            res.append(grad.sum(axis=(0, 2, 3)))
        return res

    return make_result(np.ascontiguousarray(out), parents, backward)


def sphere_pool(x, plan: GatherPlan, mode: str = "max") -> Tensor:
    """Max or mean over the ``n*n`` spherical samples of each output pixel.

    Max routes the gradient to the first maximal sample in tap order.
    """
    if mode not in ("max", "avg"):
        raise ValueError(f"mode must be 'max' or 'avg', got {mode!r}")
    g = bilinear_gather(x, plan)
    gd = g.data
    T = gd.shape[-1]
    if mode == "avg":
        return make_result(gd.mean(axis=-1), (g,), lambda grad: (np.repeat(grad[..., None] / T, T, axis=-1),))
    arg = gd.argmax(axis=-1)
    out = np.take_along_axis(gd, arg[..., None], axis=-1)[..., 0]

    def backward(grad):
        gg = np.zeros(gd.shape)
        np.put_along_axis(gg, arg[..., None], grad[..., None], axis=-1)
        return (gg,)

    return make_result(out, (g,), backward)
