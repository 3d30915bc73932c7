"""Procedural RGB-D scenes for tests and demos.

Rooms are axis-aligned boxes seen from a camera inside them. Depth is the
Euclidean distance along each pixel ray; colour comes from a per-wall base
tint, a checker texture on the hit point and distance shading.
"""
from __future__ import annotations

import numpy as np

from .data import Equirect, ImagePair, Perspective
from .geometry import PixelCoord, pixel_to_lonlat


def _directions_equirect(H, W):
    v, u = np.mgrid[0:H, 0:W].astype(np.float64)
    ll = pixel_to_lonlat(PixelCoord(u, v), W, H)
    phi, th = ll.phi, ll.theta
    return np.stack([np.cos(phi) * np.sin(th), np.sin(phi), np.cos(phi) * np.cos(th)], axis=-1)


def _directions_pinhole(H, W, fov_x):
    f = (W / 2) / np.tan(fov_x / 2)
    v, u = np.mgrid[0:H, 0:W].astype(np.float64)
    d = np.stack([(u + 0.5 - W / 2) / f, -(v + 0.5 - H / 2) / f, np.ones_like(u)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


_WALL_TINTS = np.array([
    [200, 90, 80], [80, 180, 90], [90, 110, 210],
    [210, 200, 90], [170, 90, 190], [90, 190, 190],
], dtype=np.float64)


def _shade(dirs, lo, hi, checker):
    """Ray-cast the box ``[lo, hi]`` from the origin."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t_hi = np.where(dirs > 0, hi / dirs, np.inf)
        t_lo = np.where(dirs < 0, lo / dirs, np.inf)
    t_axis = np.minimum(t_hi, t_lo)
    axis = t_axis.argmin(axis=-1)
    t = t_axis.min(axis=-1)
    side = np.take_along_axis(dirs, axis[..., None], -1)[..., 0] > 0
    face = 2 * axis + side
    hit = dirs * t[..., None]
    # checker on the two in-plane coordinates of the hit face
    a = np.take_along_axis(hit, ((axis + 1) % 3)[..., None], -1)[..., 0]
    b = np.take_along_axis(hit, ((axis + 2) % 3)[..., None], -1)[..., 0]
    tex = ((np.floor(a / checker) + np.floor(b / checker)) % 2) * 0.25 + 0.75
    rgb = _WALL_TINTS[face] * tex[..., None] * (1.5 / (1.0 + 0.25 * t))[..., None]
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8), t


def random_room(rng, size=(2.0, 6.0)):
    """Box corners ``(lo, hi)`` relative to a camera placed inside the box."""
    dims = rng.uniform(*size, size=3)
    dims[1] = rng.uniform(2.2, 3.5)                  # ceiling height
    frac = rng.uniform(0.25, 0.75, size=3)
    frac[1] = rng.uniform(0.3, 0.6)
    lo = -frac * dims
    return lo, lo + dims


def equirect_room(H, W, rng, checker=0.5, rid="room") -> ImagePair:
    lo, hi = random_room(rng)
    rgb, depth = _shade(_directions_equirect(H, W), lo, hi, checker)
    return ImagePair(rgb, depth, Equirect(), rid)


def perspective_room(H, W, fov_x, rng, checker=0.5, rid="view") -> ImagePair:
    lo, hi = random_room(rng)
    rgb, depth = _shade(_directions_pinhole(H, W, fov_x), lo, hi, checker)
    return ImagePair(rgb, depth, Perspective(fov_x), rid)


def fronto_parallel_plane(H, W, fov_x, distance, period=0.2, rid="plane") -> ImagePair:
    """Pinhole view of a textured plane ``distance`` meters straight ahead.

    Depth is stored as the planar ``z`` distance. The stripe texture has
    ``period`` meters per cycle on the plane.
    """
    f = (W / 2) / np.tan(fov_x / 2)
    v, u = np.mgrid[0:H, 0:W].astype(np.float64)
    X = (u + 0.5 - W / 2) / f * distance
    Y = (v + 0.5 - H / 2) / f * distance
    val = 127.5 + 100 * np.sin(2 * np.pi * X / period) * np.cos(2 * np.pi * Y / period)
    rgb = np.repeat(np.clip(np.rint(val), 0, 255).astype(np.uint8)[..., None], 3, axis=2)
    return ImagePair(rgb, np.full((H, W), float(distance)), Perspective(fov_x), rid)
