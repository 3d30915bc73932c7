"""Equirectangular, spherical and tangent-plane coordinate maps.

Conventions
-----------
Pixel ``(u, v)`` of an ``H x W`` equirectangular image maps to latitude
``phi = (H/2 - v) * pi / H`` and longitude ``theta = (u - W/2) * 2 pi / W``.
Row ``v = 0`` is the north pole and integer indices are used as-is (no
half-pixel shift). Longitudes are normalized to ``[-pi, pi)``.

All functions are vectorized: any field may be a numpy array, and arrays
broadcast against each other. Everything is computed in float64.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, ParamError

__all__ = [
    "LonLat",
    "PixelCoord",
    "TangentPoint",
    "KernelSpec",
    "SamplingGrid",
    "normalize_longitude",
    "pixel_to_lonlat",
    "lonlat_to_pixel",
    "gnomonic_forward",
    "gnomonic_inverse",
    "kernel_offsets",
    "build_sampling_grid",
    "default_kernel",
    "write_grid",
    "read_grid",
]


class LonLat(NamedTuple):
    phi: np.ndarray | float
    theta: np.ndarray | float


class PixelCoord(NamedTuple):
    u: np.ndarray | float
    v: np.ndarray | float


class TangentPoint(NamedTuple):
    x: np.ndarray | float
    y: np.ndarray | float


@dataclass(frozen=True)
class KernelSpec:
    """Odd ``n x n`` kernel with angular steps (radians) between taps."""

    n: int
    delta_theta: float
    delta_phi: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1 or self.n % 2 == 0:
            raise ParamError(f"kernel side must be an odd integer >= 1, got {self.n}")
        for name in ("delta_theta", "delta_phi"):
            d = getattr(self, name)
            if not (0.0 < d < np.pi / 2):
                raise ParamError(f"{name} must lie in (0, pi/2), got {d}")

    @property
    def radius(self) -> int:
        return (self.n - 1) // 2


def default_kernel(n: int, W: int, H: int) -> KernelSpec:
    """Kernel stepping one source pixel per tap: 2*pi/W by pi/H."""
    return KernelSpec(n, 2 * np.pi / W, np.pi / H)


def normalize_longitude(theta):
    """Wrap longitude into ``[-pi, pi)``."""
    t = np.mod(np.asarray(theta, dtype=np.float64) + np.pi, 2 * np.pi) - np.pi
    # mod can return exactly 2*pi for tiny negative inputs
    t = np.where(t >= np.pi, t - 2 * np.pi, t)
    return t if t.ndim else float(t)


def pixel_to_lonlat(p: PixelCoord, W: int, H: int) -> LonLat:
    u = np.asarray(p.u, dtype=np.float64)
    v = np.asarray(p.v, dtype=np.float64)
    phi = (H / 2 - v) * np.pi / H
    theta = normalize_longitude((u - W / 2) * 2 * np.pi / W)
    return LonLat(phi if phi.ndim else float(phi), theta)


def lonlat_to_pixel(s: LonLat, W: int, H: int) -> PixelCoord:
    phi = np.asarray(s.phi, dtype=np.float64)
    theta = np.asarray(s.theta, dtype=np.float64)
    u = theta * W / (2 * np.pi) + W / 2
    v = H / 2 - phi * H / np.pi
    return PixelCoord(u if u.ndim else float(u), v if v.ndim else float(v))


def gnomonic_forward(center: LonLat, point: LonLat) -> TangentPoint:
    """Project ``point`` onto the plane tangent to the sphere at ``center``.

    Raises
    ------
    DomainError
        If any point is at or beyond 90 degrees from the tangent point.
    """
    phi1, th0 = np.asarray(center.phi, float), np.asarray(center.theta, float)
    phi, th = np.asarray(point.phi, float), np.asarray(point.theta, float)
    dth = th - th0
    cos_c = np.sin(phi1) * np.sin(phi) + np.cos(phi1) * np.cos(phi) * np.cos(dth)
    if np.any(cos_c <= 0):
        raise DomainError("point lies on or beyond the tangent horizon")
    x = np.cos(phi) * np.sin(dth) / cos_c
    y = (np.cos(phi1) * np.sin(phi) - np.sin(phi1) * np.cos(phi) * np.cos(dth)) / cos_c
    return TangentPoint(x if x.ndim else float(x), y if y.ndim else float(y))


def gnomonic_inverse(center: LonLat, t: TangentPoint) -> LonLat:
    """Map tangent-plane coordinates back to the sphere.

    Paths that pass over a pole come back with latitude in range and the
    longitude wrapped, so no special handling is needed near the caps.
    """
    phi1, th0 = np.asarray(center.phi, float), np.asarray(center.theta, float)
    x, y = np.asarray(t.x, float), np.asarray(t.y, float)
    rho = np.hypot(x, y)
    c = np.arctan(rho)
    sin_c, cos_c = np.sin(c), np.cos(c)
    at_origin = rho == 0
    safe_rho = np.where(at_origin, 1.0, rho)
    arg = cos_c * np.sin(phi1) + np.where(at_origin, 0.0, y * sin_c * np.cos(phi1) / safe_rho)
    phi = np.arcsin(np.clip(arg, -1.0, 1.0))
    theta = th0 + np.arctan2(x * sin_c, rho * np.cos(phi1) * cos_c - y * np.sin(phi1) * sin_c)
    theta = normalize_longitude(theta)
    phi = np.broadcast_to(phi, np.shape(theta)) if np.ndim(theta) else phi
    return LonLat(phi if np.ndim(phi) else float(phi), theta)


def kernel_offsets(k: KernelSpec) -> np.ndarray:
    """Tangent-plane offsets of every kernel tap relative to its center.

    Returns an ``(n, n, 2)`` array laid out like an image patch: entry
    ``[r, c]`` holds ``(x, y)`` for horizontal index ``i = c - radius``
    and vertical index ``j = radius - r`` (rows grow southward, ``y``
    grows northward). ``x = sign(i) tan(|i| dtheta)`` and
    ``y = sign(j) tan(|j| dphi) / cos(|i| dtheta)``.
    """
    r = k.radius
    if r * k.delta_theta >= np.pi / 2 or r * k.delta_phi >= np.pi / 2:
        raise DomainError("kernel extends to or past 90 degrees from its center")
    idx = np.arange(-r, r + 1, dtype=np.float64)
    i = idx[None, :]            # varies along columns
    j = -idx[:, None]           # north is up
    x = np.sign(i) * np.tan(np.abs(i) * k.delta_theta)
    y = np.sign(j) * np.tan(np.abs(j) * k.delta_phi) / np.cos(np.abs(i) * k.delta_theta)
    x, y = np.broadcast_arrays(x, y)
    return np.stack([x, y], axis=-1)


@dataclass(frozen=True, eq=False)
class SamplingGrid:
    """Fractional source coordinates for every tap of every output pixel.

    ``coords`` has shape ``(out_h, out_w, n*n, 2)`` holding ``(u, v)``
    with ``u`` wrapped into ``[0, W)`` and ``v`` clamped to ``[0, H-1]``.
    Taps are flattened in row-major kernel order.
    """

    W: int
    H: int
    n: int
    stride: int
    kernel: KernelSpec
    coords: np.ndarray

    @property
    def out_h(self) -> int:
        return self.coords.shape[0]

    @property
    def out_w(self) -> int:
        return self.coords.shape[1]


def _window_center(out_idx, stride):
    return stride * np.asarray(out_idx, dtype=np.float64) + (stride - 1) / 2


def build_sampling_grid(W: int, H: int, k: KernelSpec, stride: int = 1) -> SamplingGrid:
    """Sampling grid for a spherical kernel sliding over an ``H x W`` image.

    Output pixel ``(v_out, u_out)`` is centered on input coordinate
    ``stride * (v_out, u_out) + (stride - 1) / 2``. The tap offsets are
    evaluated once per output row and shifted horizontally, which is
    exact because the offsets do not depend on the longitude of the center.
    Results are cached per argument tuple.
    """
    return _cached_grid(int(W), int(H), k, int(stride))


@functools.lru_cache(maxsize=256)
def _cached_grid(W: int, H: int, k: KernelSpec, stride: int) -> SamplingGrid:
    if stride < 1:
        raise ParamError(f"stride must be >= 1, got {stride}")
    if W < k.n or H < k.n:
        raise ParamError(f"image {H}x{W} is smaller than the {k.n}x{k.n} kernel")
    offs = kernel_offsets(k).reshape(-1, 2)
    out_h, out_w = H // stride, W // stride

    # centers of column 0 on every output row
    vc = _window_center(np.arange(out_h), stride)
    uc = _window_center(0, stride)
    center = pixel_to_lonlat(PixelCoord(np.full_like(vc, uc), vc), W, H)
    ll = gnomonic_inverse(
        LonLat(center.phi[:, None], center.theta[:, None]),
        TangentPoint(offs[None, :, 0], offs[None, :, 1]),
    )
    px = lonlat_to_pixel(ll, W, H)                 # (out_h, n*n)
    shift = stride * np.arange(out_w, dtype=np.float64)
    u = px.u[:, None, :] + shift[None, :, None]
    u = np.mod(u, W)
    u = np.where(u >= W, u - W, u)
    v = np.clip(np.broadcast_to(px.v[:, None, :], u.shape), 0.0, H - 1)
    coords = np.stack([u, v], axis=-1)
    coords.setflags(write=False)
    return SamplingGrid(W=W, H=H, n=k.n, stride=stride, kernel=k, coords=coords)


def write_grid(grid: SamplingGrid, path) -> None:
    """Dump ``grid`` as text, one output pixel per line.

    A ``#`` header line records ``W H n stride out_h out_w``; each record is
    ``row col`` followed by ``n*n`` ``u v`` pairs with 9 decimals.
    """
    with open(path, "w") as fh:
        fh.write(f"# W={grid.W} H={grid.H} n={grid.n} stride={grid.stride} "
                 f"out_h={grid.out_h} out_w={grid.out_w}\n")
        for r in range(grid.out_h):
            for c in range(grid.out_w):
                pairs = " ".join(f"{u:.9f} {v:.9f}" for u, v in grid.coords[r, c])
                fh.write(f"{r} {c} {pairs}\n")


def read_grid(path) -> np.ndarray:
    """Load a dump written by :func:`write_grid` as ``(out_h, out_w, n*n, 2)``."""
    with open(path) as fh:
        header = fh.readline()
        meta = dict(tok.split("=") for tok in header[1:].split())
        out_h, out_w, n = int(meta["out_h"]), int(meta["out_w"]), int(meta["n"])
        data = np.loadtxt(fh, ndmin=2)
    return data[:, 2:].reshape(out_h, out_w, n * n, 2)
