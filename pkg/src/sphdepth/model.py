"""FCRN-tiny depth networks, planar and spherical.

Both variants share one layer graph::

    stem:    3x3 conv -> BN -> ReLU -> 3x3 max-pool /2
    encoder: residual stages of basic blocks (3x3 conv, BN, ReLU, 3x3 conv, BN
             + shortcut, ReLU); a stage with stride 2 downsamples in its first
             block and projects the shortcut with a strided 1x1 conv + BN
    decoder: per stage, x2 nearest upsample -> 3x3 conv -> BN -> ReLU
    head:    3x3 conv to one channel (+bias) -> ReLU, resized to the input size

The spherical variant swaps every convolution and pooling layer for its
gnomonic-grid counterpart; weight shapes are identical so parameter counts
match.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functional as F
from .errors import ShapeError, SpecError
from .functional import BatchNormState
from .sphere_ops import plan_for, sphere_conv2d, sphere_pool
from .tensor import Tensor, as_tensor

__all__ = ["StageSpec", "ModelSpec", "Model", "build_model", "forward", "spherical_spec", "planar_spec"]


@dataclass(frozen=True)
class StageSpec:
    channels: int
    blocks: int = 2
    stride: int = 1


@dataclass(frozen=True)
class ModelSpec:
    variant: str = "planar"
    in_shape: tuple = (3, 64, 64)
    stem_channels: int = 16
    encoder: tuple = (StageSpec(16, 2, 1), StageSpec(32, 2, 2), StageSpec(64, 2, 2))
    decoder: tuple = (32, 16, 8)
    # planar only: decoder upsamples with a stride-2 transposed conv instead
    # of nearest upsample + conv (same weight count)
    planar_deconv: bool = False

    def __post_init__(self):
        if self.variant not in ("planar", "spherical"):
            raise SpecError(f"variant must be 'planar' or 'spherical', got {self.variant!r}")
        object.__setattr__(self, "in_shape", tuple(int(v) for v in self.in_shape))
        object.__setattr__(self, "encoder", tuple(
            s if isinstance(s, StageSpec) else StageSpec(*s) for s in self.encoder))
        object.__setattr__(self, "decoder", tuple(int(c) for c in self.decoder))
        C, H, W = self.in_shape
        if C != 3:
            raise SpecError(f"input must have 3 channels, got {C}")
        if self.variant == "spherical" and W != 2 * H:
            raise SpecError(f"spherical variant needs W = 2H, got {H}x{W}")
        if self.variant == "spherical" and self.planar_deconv:
            raise SpecError("planar_deconv applies to the planar variant only")
        if not self.encoder:
            raise SpecError("encoder needs at least one stage")
        for s in self.encoder:
            if s.channels < 1 or s.blocks < 1 or s.stride not in (1, 2):
                raise SpecError(f"bad encoder stage {s}")
        if any(c < 1 for c in self.decoder):
            raise SpecError("decoder channels must be positive")
        for h, w in self.feature_sizes():
            if h < 3 or w < 3:
                raise SpecError(f"input {H}x{W} shrinks below 3x3 inside the encoder")

    def feature_sizes(self):
        """Spatial size after the stem and after each encoder stage."""
        _, h, w = self.in_shape
        down = (lambda a: a // 2) if self.variant == "spherical" else (lambda a: (a + 1) // 2)
        h, w = down(h), down(w)
        sizes = [(h, w)]
        for s in self.encoder:
            if s.stride == 2:
                h, w = down(h), down(w)
            sizes.append((h, w))
        return sizes


def planar_spec(H=64, W=64, **kw) -> ModelSpec:
    return ModelSpec(variant="planar", in_shape=(3, H, W), **kw)


def spherical_spec(H=64, W=128, **kw) -> ModelSpec:
    return ModelSpec(variant="spherical", in_shape=(3, H, W), **kw)


@dataclass
class Model:
    spec: ModelSpec
    params: dict = field(default_factory=dict)     # name -> Tensor (trainable)
    bn: dict = field(default_factory=dict)         # prefix -> BatchNormState
    training: bool = False

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def no_decay_names(self) -> frozenset:
        """Batch-norm and bias parameters; weight decay hits conv weights only."""
        return frozenset(n for n in self.params if not n.endswith(".weight"))

    def state_dict(self) -> dict:
        out = {n: p.data for n, p in self.params.items()}
        for prefix, st in self.bn.items():
            out[f"{prefix}.running_mean"] = st.running_mean
            out[f"{prefix}.running_var"] = st.running_var
        return out

    def load_state_dict(self, state: dict) -> None:
        expected = self.state_dict()
        missing = set(expected) - set(state)
        extra = set(state) - set(expected)
        if missing or extra:
            raise ShapeError(f"state mismatch: missing {sorted(missing)[:3]}, unexpected {sorted(extra)[:3]}")
        for name, arr in state.items():
            if np.shape(arr) != np.shape(expected[name]):
                raise ShapeError(f"{name}: shape {np.shape(arr)} != {np.shape(expected[name])}")
        for n, p in self.params.items():
            p.data = np.array(state[n], dtype=np.float64)
        for prefix, st in self.bn.items():
            st.running_mean = np.array(state[f"{prefix}.running_mean"], dtype=np.float64)
            st.running_var = np.array(state[f"{prefix}.running_var"], dtype=np.float64)


class _Builder:
    def __init__(self, model, rng):
        self.model, self.rng = model, rng

    def conv(self, name, cin, cout, n, bias=False):
        fan_in = cin * n * n
        bound = np.sqrt(6.0 / fan_in)
        self.model.params[f"{name}.weight"] = Tensor(
            self.rng.uniform(-bound, bound, size=(cout, cin, n, n)), requires_grad=True)
        if bias:
            self.model.params[f"{name}.bias"] = Tensor(np.zeros(cout), requires_grad=True)

    def deconv(self, name, cin, cout, n):
        bound = np.sqrt(6.0 / (cin * n * n))
        self.model.params[f"{name}.weight"] = Tensor(
            self.rng.uniform(-bound, bound, size=(cin, cout, n, n)), requires_grad=True)

    def bn(self, name, c):
        self.model.params[f"{name}.scale"] = Tensor(np.ones(c), requires_grad=True)
        self.model.params[f"{name}.shift"] = Tensor(np.zeros(c), requires_grad=True)
        self.model.bn[name] = BatchNormState(c)


def build_model(spec: ModelSpec, seed: int = 0) -> Model:
    """Allocate and initialize parameters deterministically from ``seed``."""
    model = Model(spec)
    b = _Builder(model, np.random.default_rng(seed))
    c = spec.stem_channels
    b.conv("stem.conv", 3, c, 3)
    b.bn("stem.bn", c)
    for si, stage in enumerate(spec.encoder):
        for bi in range(stage.blocks):
            p = f"enc{si}.{bi}"
            stride = stage.stride if bi == 0 else 1
            b.conv(f"{p}.conv1", c, stage.channels, 3)
            b.bn(f"{p}.bn1", stage.channels)
            b.conv(f"{p}.conv2", stage.channels, stage.channels, 3)
            b.bn(f"{p}.bn2", stage.channels)
            if stride != 1 or c != stage.channels:
                b.conv(f"{p}.proj", c, stage.channels, 1)
                b.bn(f"{p}.proj_bn", stage.channels)
            c = stage.channels
    for di, cout in enumerate(spec.decoder):
        if spec.planar_deconv:
            b.deconv(f"dec{di}.conv", c, cout, 3)
        else:
            b.conv(f"dec{di}.conv", c, cout, 3)
        b.bn(f"dec{di}.bn", cout)
        c = cout
    b.conv("head.conv", c, 1, 3, bias=True)
    return model


class _Runner:
    """Evaluates the layer graph for one variant."""

    def __init__(self, model):
        self.m = model
        self.sph = model.spec.variant == "spherical"

    def p(self, name):
        return self.m.params.get(name)

    def conv(self, name, x, stride=1):
        w = self.p(f"{name}.weight")
        bias = self.p(f"{name}.bias")
        n = w.shape[-1]
        if self.sph:
            plan = plan_for(x.shape[2], x.shape[3], n, stride)
            return sphere_conv2d(x, w, bias, plan)
        return F.conv2d(x, w, bias, stride=stride, pad=n // 2)

    def bn(self, name, x):
        return F.batch_norm(x, self.p(f"{name}.scale"), self.p(f"{name}.shift"),
                            self.m.bn[name], training=self.m.training)

    def pool(self, x):
        if self.sph:
            return sphere_pool(x, plan_for(x.shape[2], x.shape[3], 3, 2), "max")
        return F.maxpool2d(x, 3, 2, pad=1)

    def up(self, name, x):
        if self.m.spec.planar_deconv:
            h, w = x.shape[2:]
            y = F.transposed_conv2d(x, self.p(f"{name}.weight"), stride=2)
            return F.crop(y, 1, 1, 2 * h, 2 * w)
        return self.conv(name, F.upsample_nearest(x, 2))

    def run(self, x):
        spec = self.m.spec
        x = F.relu(self.bn("stem.bn", self.conv("stem.conv", x)))
        x = self.pool(x)
        for si, stage in enumerate(spec.encoder):
            for bi in range(stage.blocks):
                pre = f"enc{si}.{bi}"
                stride = stage.stride if bi == 0 else 1
                y = F.relu(self.bn(f"{pre}.bn1", self.conv(f"{pre}.conv1", x, stride)))
                y = self.bn(f"{pre}.bn2", self.conv(f"{pre}.conv2", y))
                if f"{pre}.proj.weight" in self.m.params:
                    x = self.bn(f"{pre}.proj_bn", self.conv(f"{pre}.proj", x, stride))
                x = F.relu(F.add(y, x))
        for di in range(len(spec.decoder)):
            x = F.relu(self.bn(f"dec{di}.bn", self.up(f"dec{di}.conv", x)))
        x = F.relu(self.conv("head.conv", x))
        return F.resize_bilinear(x, spec.in_shape[1:])


def forward(model: Model, batch) -> Tensor:
    """Predict depth (meters, >= 0) for a ``(N, 3, H, W)`` batch."""
    batch = as_tensor(batch)
    if batch.ndim != 4 or batch.shape[1:] != model.spec.in_shape:
        raise ShapeError(f"batch shape {batch.shape} does not match model input (N, {model.spec.in_shape})")
    return _Runner(model).run(batch)
