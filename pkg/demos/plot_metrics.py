"""
Depth error metrics, one pixel at a time or streamed
====================================================

RMSE, MAE, REL and the delta accuracies are all sums over valid pixels,
so per-image accumulators can be merged before the final division.
"""
import numpy as np

from sphdepth.metrics import MetricAccumulator, compute_metrics

# two pixels: errors of one meter each, relative errors 1 and 1/3
print(compute_metrics(np.array([2.0, 2.0]), np.array([1.0, 3.0])).to_text())

rng = np.random.default_rng(0)
images = []
for _ in range(5):
    gt = rng.uniform(0.5, 8.0, size=(24, 48))
    gt[rng.random(gt.shape) < 0.1] = 0.0       # invalid pixels are skipped
    images.append((gt * rng.uniform(0.8, 1.25, size=gt.shape), gt))

accs = [MetricAccumulator().accumulate(p, g) for p, g in images]
merged = accs[0]
for a in accs[1:]:
    merged = merged.merge(a)

flat = compute_metrics(np.concatenate([p.ravel() for p, _ in images]),
                       np.concatenate([g.ravel() for _, g in images]))
print(merged.finalize().to_csv(), end="")
print(flat.to_csv(header=False), end="")
