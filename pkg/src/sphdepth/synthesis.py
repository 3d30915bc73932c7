"""Underwater styling of in-air RGB-D pairs.

The red channel is scaled by an attenuation factor and the image is blurred
with a Gaussian whose size grows with scene depth. Depth is quantized into
bands of ``depth_step`` meters; each occupied band blurs the whole image
once and pixels pick their band's result.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .data import Equirect, ImagePair
from .errors import ParamError, ShapeError

__all__ = ["SynthParams", "attenuate_red", "gaussian_kernel", "blur_kernel_size", "synthesize_underwater"]


@dataclass(frozen=True)
class SynthParams:
    gamma: float = 0.6
    depth_step: float = 2.0
    sigma_scale: float = 1.0 / 3.0
    green_tint: tuple = (1.0, 1.0)

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ParamError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.depth_step <= 0:
            raise ParamError(f"depth_step must be positive, got {self.depth_step}")
        if self.sigma_scale <= 0:
            raise ParamError(f"sigma_scale must be positive, got {self.sigma_scale}")
        if len(self.green_tint) != 2 or min(self.green_tint) < 0:
            raise ParamError(f"green_tint must be two non-negative factors, got {self.green_tint}")


def attenuate_red(image, gamma, green_tint=(1.0, 1.0)) -> np.ndarray:
    """``R' = gamma * R`` (G and B scaled by ``green_tint``), rounded to uint8."""
    if not 0 < gamma < 1:
        raise ParamError(f"gamma must lie in (0, 1), got {gamma}")
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected HxWx3 image, got {img.shape}")
    factors = np.array([gamma, green_tint[0], green_tint[1]])
    out = img.astype(np.float64) * factors
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _gaussian_1d(size, sigma):
    r = (size - 1) // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Normalized ``size x size`` Gaussian (outer product of 1-d weights)."""
    if int(size) != size or size < 1 or size % 2 == 0:
        raise ParamError(f"kernel size must be an odd integer >= 1, got {size}")
    if sigma <= 0:
        raise ParamError(f"sigma must be positive, got {sigma}")
    g = _gaussian_1d(int(size), sigma)
    k = np.outer(g, g)
    return k / k.sum()


def blur_kernel_size(d, p: SynthParams = SynthParams()):
    """Odd kernel size ``2 * floor(d / depth_step) + 1``; 1 means no blur."""
    band = np.floor(np.asarray(d, dtype=np.float64) / p.depth_step).astype(np.int64)
    size = 2 * np.maximum(band, 0) + 1
    return int(size) if size.ndim == 0 else size


def _blur(img, size, p: SynthParams, wrap_columns: bool):
    sigma = p.sigma_scale * (size - 1) / 2
    g = _gaussian_1d(size, sigma)
    out = ndimage.convolve1d(img, g, axis=0, mode="nearest")
    return ndimage.convolve1d(out, g, axis=1, mode="wrap" if wrap_columns else "nearest")


def synthesize_underwater(pair: ImagePair, p: SynthParams = SynthParams()) -> np.ndarray:
    """Attenuate red, then apply the depth-banded blur; returns uint8 RGB.

    Equirectangular pairs wrap horizontally while blurring; perspective
    pairs replicate edges. Pixels with invalid (zero) depth keep the
    unblurred attenuated value.
    """
    if pair.rgb.shape[:2] != pair.depth.shape:
        raise ShapeError(f"rgb {pair.rgb.shape[:2]} and depth {pair.depth.shape} are not aligned")
    att = attenuate_red(pair.rgb, p.gamma, p.green_tint)
    sizes = blur_kernel_size(pair.depth, p)
    sizes = np.where(pair.depth > 0, sizes, 1)
    out = att.astype(np.float64)
    src = att.astype(np.float64)
    wrap = isinstance(pair.camera, Equirect)
    for size in np.unique(sizes):
        if size == 1:
            continue
        sel = sizes == size
        out[sel] = _blur(src, int(size), p, wrap)[sel]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def synthesize_pair(pair: ImagePair, p: SynthParams = SynthParams()) -> ImagePair:
    return replace(pair, rgb=synthesize_underwater(pair, p))
