"""
Spherical convolution respects the seam
=======================================

Rolling a panorama in longitude is a rotation of the sphere about its
axis. The spherical convolution commutes with it exactly, including across
the left/right seam where a planar convolution with zero padding breaks.
"""
import numpy as np

from sphdepth import functional as F
from sphdepth.sphere_ops import plan_for, sphere_conv2d

rng = np.random.default_rng(0)
H, W = 32, 64
x = rng.normal(size=(1, 3, H, W))
w = rng.normal(size=(4, 3, 3, 3))
plan = plan_for(H, W, 3)

y = sphere_conv2d(x, w, None, plan).data
y_rolled = sphere_conv2d(np.roll(x, 10, axis=3), w, None, plan).data
print("spherical, roll then conv vs conv then roll:", np.abs(np.roll(y, 10, axis=3) - y_rolled).max())

# the same test on the planar op: the seam columns disagree
p = F.conv2d(x, w, pad=1).data
p_rolled = F.conv2d(np.roll(x, 10, axis=3), w, pad=1).data
print("planar, same comparison:", np.abs(np.roll(p, 10, axis=3) - p_rolled).max())

# on the equator row the spherical kernel is a plain 3x3 neighbourhood
padded = np.pad(np.pad(x, ((0, 0), (0, 0), (1, 1), (0, 0))), ((0, 0), (0, 0), (0, 0), (1, 1)), mode="wrap")
ref = F.conv2d(padded, w).data
print("equator row vs wrap-padded planar conv:", np.abs(y[:, :, H // 2] - ref[:, :, H // 2]).max())
