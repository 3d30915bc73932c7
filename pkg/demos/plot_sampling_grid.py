"""
Where a spherical kernel samples an equirectangular image
==========================================================

A 3x3 kernel on the sphere lives on the plane tangent at its center. Near
the equator its nine taps land on the usual pixel neighbourhood; towards
the poles they spread out along the row because a degree of longitude
covers fewer meters there.
"""
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from sphdepth.geometry import build_sampling_grid, default_kernel, kernel_offsets

W, H = 64, 32
out = Path("demo_output")
out.mkdir(exist_ok=True)

# tangent-plane offsets of the kernel (rows run north to south)
k = default_kernel(3, W, H)
print("tangent offsets (x, y):")
print(np.round(kernel_offsets(k), 4))

grid = build_sampling_grid(W, H, k)

# equator: integer neighbours; the polar row fans out across many columns
for v in (H // 2, H // 4, 1):
    taps = grid.coords[v, W // 2]
    print(f"row {v:2d}: columns {np.round(taps[..., 0].ravel(), 2)}")

fig, ax = plt.subplots(figsize=(8, 4))
for v in (1, 4, H // 4, H // 2):
    for u in (8, 24, 40, 56):
        taps = grid.coords[v, u].reshape(-1, 2)
        ax.scatter(taps[:, 0], taps[:, 1], s=6)
ax.set_xlim(0, W)
ax.set_ylim(H, 0)
ax.set_title("3x3 spherical kernel taps")
fig.savefig(out / "sampling_grid.png", dpi=120)
print("wrote", out / "sampling_grid.png")
