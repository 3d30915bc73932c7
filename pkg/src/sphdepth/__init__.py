"""Monocular depth estimation on perspective and equirectangular underwater images.

Spherical convolution through gnomonic kernel sampling, a small numpy
autodiff engine, FCRN-style depth networks, underwater image synthesis
and depth error metrics.
"""
from .errors import *  # noqa: F401,F403
from .geometry import (KernelSpec, LonLat, PixelCoord, SamplingGrid, TangentPoint, build_sampling_grid,
                       gnomonic_forward, gnomonic_inverse, kernel_offsets, lonlat_to_pixel, pixel_to_lonlat)
from .tensor import Tensor, no_grad
from .model import ModelSpec, build_model, forward, planar_spec, spherical_spec
from .metrics import EvalReport, MetricAccumulator, compute_metrics
from .synthesis import SynthParams, synthesize_underwater
from .training import HyperParams, evaluate, predict, train

__version__ = "0.1.0"
