"""RGB-D pairs: file I/O, manifests, augmentation, cropping and rescaling.

Depth is stored in meters with 0 marking invalid pixels. On disk, depth is a
16-bit PNG in millimeters or a PFM file in meters, chosen by extension.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import AlignmentError, FormatError, ParamError, SizeError
from .functional import bilinear_matrix


@dataclass(frozen=True)
class Perspective:
    fov_x: float  # horizontal field of view, radians


@dataclass(frozen=True)
class Equirect:
    pass


Camera = Union[Perspective, Equirect]


@dataclass
class ImagePair:
    rgb: np.ndarray      # (H, W, 3) uint8
    depth: np.ndarray    # (H, W) float64 meters, 0 = invalid
    camera: Camera = field(default_factory=Equirect)
    id: str = ""

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb)
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise FormatError(f"{self.id}: rgb must be HxWx3, got {self.rgb.shape}")
        if self.rgb.shape[:2] != self.depth.shape:
            raise AlignmentError(f"{self.id}: rgb {self.rgb.shape[:2]} vs depth {self.depth.shape}")
        if np.any(self.depth < 0):
            raise FormatError(f"{self.id}: negative depth")
        if isinstance(self.camera, Equirect) and self.depth.shape[1] != 2 * self.depth.shape[0]:
            raise AlignmentError(f"{self.id}: equirectangular pair needs W = 2H, got {self.depth.shape}")

    @property
    def shape(self):
        return self.depth.shape

    @property
    def valid(self):
        return self.depth > 0


# --- file formats ----------------------------------------------------------

def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        kind = fh.readline().strip()
        if kind not in (b"Pf", b"PF"):
            raise FormatError(f"{path}: not a PFM file")
        try:
            w, h = (int(t) for t in fh.readline().split())
            scale = float(fh.readline().strip())
        except ValueError as exc:
            raise FormatError(f"{path}: bad PFM header") from exc
        ch = 3 if kind == b"PF" else 1
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(), dtype=dtype)
    if data.size != w * h * ch:
        raise FormatError(f"{path}: PFM payload has {data.size} values, expected {w * h * ch}")
    img = data.reshape(h, w, ch) if ch == 3 else data.reshape(h, w)
    return np.flipud(img).astype(np.float64)   # PFM rows run bottom-to-top


def write_pfm(path, arr) -> None:
    a = np.asarray(arr, dtype="<f4")
    if a.ndim != 2:
        raise FormatError("write_pfm: only single-channel maps are supported")
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(np.flipud(a)).tobytes())


def read_depth(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return read_pfm(path)
    if path.suffix.lower() != ".png":
        raise FormatError(f"{path}: unsupported depth format (use .png or .pfm)")
    try:
        with Image.open(path) as im:
            if im.mode not in ("I;16", "I;16B", "I", "L"):
                raise FormatError(f"{path}: depth PNG must be 16-bit grayscale, got mode {im.mode}")
            arr = np.array(im)
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return arr.astype(np.float64) / 1000.0


def depth_to_mm(depth) -> np.ndarray:
    mm = np.rint(np.asarray(depth, dtype=np.float64) * 1000.0)
    return np.clip(mm, 0, 65535).astype(np.uint16)


def write_depth(path, depth) -> None:
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        write_pfm(path, depth)
    elif path.suffix.lower() == ".png":
        Image.fromarray(depth_to_mm(depth)).save(path)
    else:
        raise FormatError(f"{path}: unsupported depth format (use .png or .pfm)")


def read_rgb(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.array(im.convert("RGB"))
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_rgb(path, rgb) -> None:
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(path)


# --- manifests -------------------------------------------------------------

@dataclass(frozen=True)
class Record:
    id: str
    rgb: str
    depth: str
    camera: Camera
    split: str = "train"
    dims: tuple | None = None   # (W, H) declared for equirect records


def read_manifest(path) -> list:
    """Parse a tab-separated manifest; relative paths resolve against its folder.

    Columns: ``id  rgb  depth  camera  param  split`` where ``camera`` is
    ``perspective`` (``param`` = horizontal FOV in radians) or ``equirect``
    (``param`` = ``WxH``, or ``-`` to skip the size check). Blank lines and ``#`` comments are skipped.
    """
    path = Path(path)
    base = path.parent
    records, seen = [], set()
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 6:
            raise FormatError(f"{path}:{lineno}: expected 6 tab-separated columns, got {len(cols)}")
        rid, rgb, depth, cam, param, split = (c.strip() for c in cols)
        if rid in seen:
            raise FormatError(f"{path}:{lineno}: duplicate id {rid!r}")
        seen.add(rid)
        if cam == "perspective":
            try:
                camera = Perspective(float(param))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad fov {param!r}") from exc
        elif cam == "equirect":
            camera = Equirect()
            dims = None
            if param != "-":
                try:
                    dims = tuple(int(t) for t in param.lower().split("x"))
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno}: bad dims {param!r}") from exc
                if len(dims) != 2:
                    raise FormatError(f"{path}:{lineno}: bad dims {param!r}")
        else:
            raise FormatError(f"{path}:{lineno}: unknown camera {cam!r}")
        records.append(Record(rid, str(base / rgb), str(base / depth), camera, split,
                              dims if cam == "equirect" else None))
    return records


def write_manifest(path, records) -> None:
    path = Path(path)
    base = path.parent.resolve()
    lines = ["# id\trgb\tdepth\tcamera\tparam\tsplit"]
    for r in records:
        rgb = os.path.relpath(Path(r.rgb).resolve(), base)
        depth = os.path.relpath(Path(r.depth).resolve(), base)
        if isinstance(r.camera, Perspective):
            cam, param = "perspective", repr(float(r.camera.fov_x))
        else:
            cam = "equirect"
            param = f"{r.dims[0]}x{r.dims[1]}" if r.dims else "-"
        lines.append("\t".join([r.id, rgb, depth, cam, param, r.split]))
    path.write_text("\n".join(lines) + "\n")


def load_pair(record: Record) -> ImagePair:
    for p in (record.rgb, record.depth):
        if not os.path.exists(p):
            raise FileNotFoundError(p)
    rgb, depth = read_rgb(record.rgb), read_depth(record.depth)
    if rgb.shape[:2] != depth.shape:
        raise AlignmentError(f"{record.id}: rgb {rgb.shape[:2]} vs depth {depth.shape}")
    if record.dims is not None and depth.shape != (record.dims[1], record.dims[0]):
        raise AlignmentError(f"{record.id}: manifest says {record.dims[0]}x{record.dims[1]}, "
                             f"files are {depth.shape[1]}x{depth.shape[0]}")
    return ImagePair(rgb, depth, record.camera, record.id)


def record_seed(global_seed: int, rid: str) -> int:
    digest = hashlib.sha256(f"{global_seed}:{rid}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


# --- resampling helpers ----------------------------------------------------

def resize_rgb(rgb, h, w) -> np.ndarray:
    """Bilinear resize of an ``(H, W, 3)`` image, rounded back to uint8."""
    ry = bilinear_matrix(rgb.shape[0], h)
    rx = bilinear_matrix(rgb.shape[1], w)
    out = np.einsum("ij,jkc,lk->ilc", ry, rgb.astype(np.float64), rx, optimize=True)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def resize_nearest(depth, h, w) -> np.ndarray:
    H, W = depth.shape
    rows = np.minimum(((np.arange(h) + 0.5) * H / h).astype(int), H - 1)
    cols = np.minimum(((np.arange(w) + 0.5) * W / w).astype(int), W - 1)
    return depth[rows][:, cols]


def resize_pair(pair: ImagePair, h: int, w: int) -> ImagePair:
    if pair.shape == (h, w):
        return pair
    return replace(pair, rgb=resize_rgb(pair.rgb, h, w), depth=resize_nearest(pair.depth, h, w))


def center_crop(pair: ImagePair, h: int, w: int) -> ImagePair:
    """Symmetric crop; odd remainders leave the extra row/column at the bottom/right."""
    H, W = pair.shape
    if not (1 <= h <= H and 1 <= w <= W):
        raise SizeError(f"cannot crop {H}x{W} to {h}x{w}")
    top, left = (H - h) // 2, (W - w) // 2
    cam = pair.camera
    if isinstance(cam, Perspective) and w != W:
        cam = Perspective(cam.fov_x * w / W)
    if isinstance(cam, Equirect) and (h, w) != (H, W):
        raise SizeError("cropping an equirectangular pair would break its 360 degree extent")
    return replace(pair, rgb=pair.rgb[top:top + h, left:left + w].copy(),
                   depth=pair.depth[top:top + h, left:left + w].copy(), camera=cam)


def rescale_angle_per_pixel(pair: ImagePair, target_app: float) -> ImagePair:
    """Resample a perspective pair so one pixel spans ``target_app`` radians.

    Uses the small-angle estimate ``fov_x / W`` at the image center; RGB is
    interpolated bilinearly, depth by nearest neighbour (values untouched).
    """
    if not isinstance(pair.camera, Perspective):
        raise ParamError("angle-per-pixel rescaling needs a perspective camera")
    if target_app <= 0:
        raise ParamError("target angle per pixel must be positive")
    factor = scale_factor(pair.camera.fov_x, pair.shape[1], target_app)
    h = max(1, int(round(pair.shape[0] * factor)))
    w = max(1, int(round(pair.shape[1] * factor)))
    return resize_pair(pair, h, w)


def scale_factor(fov_x: float, W: int, target_app: float) -> float:
    return (fov_x / W) / target_app


# --- augmentation ----------------------------------------------------------

@dataclass(frozen=True)
class AugmentConfig:
    scale: tuple = (1.0, 1.5)
    rotation: tuple = (-5.0, 5.0)       # degrees, perspective only
    flip_p: float = 0.5
    jitter: float = 0.1                 # brightness/contrast/saturation in [1-j, 1+j]
    roll: bool = True                   # random longitude roll, equirect only
    mean: tuple = (0.5, 0.5, 0.5)
    std: tuple = (0.5, 0.5, 0.5)
    crop: tuple | None = None           # (h, w); None keeps the full size

    def __post_init__(self):
        if self.scale[0] > self.scale[1] or self.scale[0] <= 0:
            raise ParamError(f"bad scale range {self.scale}")
        if self.rotation[0] > self.rotation[1]:
            raise ParamError(f"bad rotation range {self.rotation}")
        if not 0 <= self.flip_p <= 1:
            raise ParamError("flip probability must lie in [0, 1]")
        if not 0 <= self.jitter < 1:
            raise ParamError("jitter must lie in [0, 1)")
        if any(s <= 0 for s in self.std):
            raise ParamError("normalization std must be positive")
        if self.crop is not None and (len(self.crop) != 2 or min(self.crop) < 1):
            raise ParamError(f"bad crop size {self.crop}")


IDENTITY_AUGMENT = AugmentConfig(scale=(1.0, 1.0), rotation=(0.0, 0.0), flip_p=0.0, jitter=0.0, roll=False)


def flip(pair: ImagePair) -> ImagePair:
    """Horizontal mirror.

    For equirectangular pairs the mirror is taken about longitude 0, so
    column ``u`` maps to ``(W - u) mod W`` (an exact longitude negation).
    """
    if isinstance(pair.camera, Equirect):
        W = pair.shape[1]
        cols = (W - np.arange(W)) % W
        return replace(pair, rgb=pair.rgb[:, cols].copy(), depth=pair.depth[:, cols].copy())
    return replace(pair, rgb=pair.rgb[:, ::-1].copy(), depth=pair.depth[:, ::-1].copy())


def roll(pair: ImagePair, k: int) -> ImagePair:
    return replace(pair, rgb=np.roll(pair.rgb, k, axis=1), depth=np.roll(pair.depth, k, axis=1))


def scale_perspective(pair: ImagePair, s: float) -> ImagePair:
    """Zoom by ``s`` about the center (output keeps its size), depth / ``s``."""
    H, W = pair.shape
    h, w = max(1, int(round(H * s))), max(1, int(round(W * s)))
    big = resize_pair(pair, h, w)
    if s >= 1:
        out = center_crop(replace(big, camera=Perspective(pair.camera.fov_x * w / W)), H, W)
    else:
        top, left = (H - h) // 2, (W - w) // 2
        rgb = np.zeros_like(pair.rgb)
        depth = np.zeros_like(pair.depth)
        rgb[top:top + h, left:left + w] = big.rgb
        depth[top:top + h, left:left + w] = big.depth
        out = replace(pair, rgb=rgb, depth=depth)
    return replace(out, depth=out.depth / s, camera=pair.camera)


def rotate_perspective(pair: ImagePair, degrees: float) -> ImagePair:
    rgb = ndimage.rotate(pair.rgb.astype(np.float64), degrees, axes=(1, 0), reshape=False, order=1, mode="constant")
    depth = ndimage.rotate(pair.depth, degrees, axes=(1, 0), reshape=False, order=0, mode="constant")
    return replace(pair, rgb=np.clip(np.rint(rgb), 0, 255).astype(np.uint8), depth=depth)


def color_jitter(rgb, b, c, s) -> np.ndarray:
    x = rgb.astype(np.float64) * b
    x = (x - x.mean()) * c + x.mean()
    gray = x @ np.array([0.299, 0.587, 0.114])
    x = (x - gray[..., None]) * s + gray[..., None]
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def augment(pair: ImagePair, cfg: AugmentConfig, rng: np.random.Generator) -> ImagePair:
    """Random scale, rotation, flip, longitude roll and color jitter, then crop.

    Scale and rotation only apply to perspective pairs; equirectangular pairs
    get a random longitude roll instead. Every random draw is taken
    unconditionally so the stream stays aligned across camera types.
    Normalization is applied later by :func:`normalize`.
    """
    s = rng.uniform(*cfg.scale)
    angle = rng.uniform(*cfg.rotation)
    do_flip = rng.random() < cfg.flip_p
    shift = int(rng.integers(0, pair.shape[1]))
    jit = rng.uniform(1 - cfg.jitter, 1 + cfg.jitter, size=3)

    persp = isinstance(pair.camera, Perspective)
    if persp and s != 1.0:
        pair = scale_perspective(pair, s)
    if persp and angle != 0.0:
        pair = rotate_perspective(pair, angle)
    if do_flip:
        pair = flip(pair)
    if not persp and cfg.roll:
        pair = roll(pair, shift)
    if cfg.jitter > 0:
        pair = replace(pair, rgb=color_jitter(pair.rgb, *jit))
    if cfg.crop is not None:
        pair = center_crop(pair, *cfg.crop)
    return pair


def normalize(rgb, cfg: AugmentConfig = IDENTITY_AUGMENT) -> np.ndarray:
    """uint8 ``(H, W, 3)`` -> float ``(3, H, W)`` with per-channel mean/std."""
    x = np.asarray(rgb, dtype=np.float64) / 255.0
    x = (x - np.asarray(cfg.mean)) / np.asarray(cfg.std)
    return np.ascontiguousarray(x.transpose(2, 0, 1))


def to_batch(pairs, cfg: AugmentConfig = IDENTITY_AUGMENT):
    """Stack pairs into network input ``(N, 3, H, W)``, depth and mask ``(N, 1, H, W)``."""
    x = np.stack([normalize(p.rgb, cfg) for p in pairs])
    d = np.stack([p.depth for p in pairs])[:, None]
    return x, d, d > 0
