"""Experiment configuration: one TOML document, sections per module.

Every key and its default::

    seed = 0

    [synthesis]
    gamma = 0.6                  # red attenuation, 0 < gamma < 1
    depth_step = 2.0             # meters per blur band
    sigma_scale = 0.3333333333   # Gaussian sigma / kernel radius
    green_tint = [1.0, 1.0]      # G, B multipliers

    [augment]
    enabled = true
    scale = [1.0, 1.5]
    rotation = [-5.0, 5.0]       # degrees, perspective pairs only
    flip_p = 0.5
    jitter = 0.1
    roll = true                  # random longitude roll, equirect only
    mean = [0.5, 0.5, 0.5]
    std = [0.5, 0.5, 0.5]
    crop = []                    # [h, w]; empty keeps the full frame

    [train]
    lr0 = 0.01
    momentum = 0.9
    weight_decay = 0.0001
    decay_factor = 0.8
    decay_every = 5
    batch_size = 16
    epochs = 30

    [model]
    variant = "spherical"        # or "planar"
    height = 64
    width = 128
    stem_channels = 16
    stages = [[16, 2, 1], [32, 2, 2], [64, 2, 2]]   # [channels, blocks, stride]
    decoder = [32, 16, 8]
    planar_deconv = false

    [viz]
    d_max = 10.0                 # meters mapped to the top of the colormap

Unknown sections or keys raise :class:`~sphdepth.errors.ConfigError`.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import tomli

from .data import AugmentConfig
from .errors import ConfigError, SphDepthError
from .model import ModelSpec, StageSpec
from .synthesis import SynthParams
from .training import HyperParams

DEFAULTS = {
    "seed": 0,
    "synthesis": {"gamma": 0.6, "depth_step": 2.0, "sigma_scale": 1.0 / 3.0, "green_tint": [1.0, 1.0]},
    "augment": {
        "enabled": True, "scale": [1.0, 1.5], "rotation": [-5.0, 5.0], "flip_p": 0.5,
        "jitter": 0.1, "roll": True, "mean": [0.5, 0.5, 0.5], "std": [0.5, 0.5, 0.5], "crop": [],
    },
    "train": {
        "lr0": 0.01, "momentum": 0.9, "weight_decay": 1e-4, "decay_factor": 0.8,
        "decay_every": 5, "batch_size": 16, "epochs": 30,
    },
    "model": {
        "variant": "spherical", "height": 64, "width": 128, "stem_channels": 16,
        "stages": [[16, 2, 1], [32, 2, 2], [64, 2, 2]], "decoder": [32, 16, 8],
        "planar_deconv": False,
    },
    "viz": {"d_max": 10.0},
}


@dataclass
class Config:
    raw: dict

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def synthesis(self) -> SynthParams:
        s = self.raw["synthesis"]
        return _build("synthesis", lambda: SynthParams(
            float(s["gamma"]), float(s["depth_step"]), float(s["sigma_scale"]), tuple(s["green_tint"])))

    @property
    def augment_enabled(self) -> bool:
        return bool(self.raw["augment"]["enabled"])

    def augment(self) -> AugmentConfig:
        a = self.raw["augment"]
        return _build("augment", lambda: AugmentConfig(
            scale=tuple(a["scale"]), rotation=tuple(a["rotation"]), flip_p=float(a["flip_p"]),
            jitter=float(a["jitter"]), roll=bool(a["roll"]), mean=tuple(a["mean"]),
            std=tuple(a["std"]), crop=tuple(a["crop"]) if a["crop"] else None))

    def normalization(self) -> AugmentConfig:
        a = self.raw["augment"]
        return _build("augment", lambda: AugmentConfig(mean=tuple(a["mean"]), std=tuple(a["std"])))

    def hyperparams(self) -> HyperParams:
        t = self.raw["train"]
        return _build("train", lambda: HyperParams(
            float(t["lr0"]), float(t["momentum"]), float(t["weight_decay"]), float(t["decay_factor"]),
            int(t["decay_every"]), int(t["batch_size"]), int(t["epochs"])))

    def model_spec(self) -> ModelSpec:
        m = self.raw["model"]
        return _build("model", lambda: ModelSpec(
            variant=m["variant"], in_shape=(3, int(m["height"]), int(m["width"])),
            stem_channels=int(m["stem_channels"]),
            encoder=tuple(StageSpec(*map(int, s)) for s in m["stages"]),
            decoder=tuple(int(c) for c in m["decoder"]), planar_deconv=bool(m["planar_deconv"])))

    @property
    def d_max(self) -> float:
        d = float(self.raw["viz"]["d_max"])
        if d <= 0:
            raise ConfigError("viz.d_max: must be positive")
        return d


def _build(section, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except (SphDepthError, TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def _merge(base: dict, override: dict, path=""):
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be a section")
            _merge(base[key], val, where + ".")
        else:
            base[key] = val


def _validate(raw):
    s = raw["synthesis"]
    if not isinstance(s["gamma"], (int, float)) or not 0 < s["gamma"] < 1:
        raise ConfigError(f"synthesis.gamma must lie in (0, 1), got {s['gamma']!r}")
    if not isinstance(s["depth_step"], (int, float)) or s["depth_step"] <= 0:
        raise ConfigError(f"synthesis.depth_step must be positive, got {s['depth_step']!r}")


def load_config(path=None, overrides: dict | None = None) -> Config:
    """Defaults, then the TOML file at ``path``, then ``overrides`` (dotted keys)."""
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        _merge(raw, doc)
    for dotted, val in (overrides or {}).items():
        node = {}
        cur = node
        parts = dotted.split(".")
        for part in parts[:-1]:
            cur = cur.setdefault(part, {})
        cur[parts[-1]] = val
        _merge(raw, node)
    _validate(raw)
    cfg = Config(raw)
    # surface every validation error at load time
    cfg.synthesis(), cfg.augment(), cfg.hyperparams(), cfg.model_spec(), cfg.d_max
    return cfg
