"""Depth error metrics with mergeable streaming accumulation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMaskError, ShapeError

THRESHOLDS = (1.25, 1.25 ** 2, 1.25 ** 3)
EPS = 1e-6

# column order of the reported table
COLUMNS = ("RMSE", "MAE", "REL", "delta1")


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    mae: float
    rel: float
    delta1: float
    delta2: float
    delta3: float
    n_valid: int

    def as_row(self) -> dict:
        return {"RMSE": self.rmse, "MAE": self.mae, "REL": self.rel, "delta1": self.delta1}

    def to_text(self) -> str:
        lines = [f"{k}: {v:.6f}" for k, v in self.as_row().items()]
        lines += [f"delta2: {self.delta2:.6f}", f"delta3: {self.delta3:.6f}", f"pixels: {self.n_valid}"]
        return "\n".join(lines) + "\n"

    def to_csv(self, header=True) -> str:
        row = ",".join(f"{v:.6f}" for v in self.as_row().values())
        return (",".join(COLUMNS) + "\n" if header else "") + row + "\n"


@dataclass
class MetricAccumulator:
    sum_sq_err: float = 0.0
    sum_abs_err: float = 0.0
    sum_rel_err: float = 0.0
    delta_counts: list = field(default_factory=lambda: [0, 0, 0])
    n_valid: int = 0

    def accumulate(self, pred, gt, mask=None) -> "MetricAccumulator":
        """Add the pixels of one prediction; ``mask`` defaults to ``gt > 0``."""
        pred = np.asarray(pred, dtype=np.float64)
        gt = np.asarray(gt, dtype=np.float64)
        if pred.shape != gt.shape:
            raise ShapeError(f"prediction {pred.shape} vs ground truth {gt.shape}")
        mask = gt > 0 if mask is None else np.asarray(mask, bool) & (gt > 0)
        if mask.shape != gt.shape:
            raise ShapeError(f"mask {mask.shape} vs ground truth {gt.shape}")
        p, y = pred[mask], gt[mask]
        err = p - y
        self.sum_sq_err += float(np.dot(err, err))
        self.sum_abs_err += float(np.abs(err).sum())
        with np.errstate(over="ignore"):   # denormal depths overflow to inf, which is fine here
            self.sum_rel_err += float((np.abs(err) / y).sum())
            pc = np.maximum(p, EPS)
            ratio = np.maximum(pc / y, y / pc)
        for k, t in enumerate(THRESHOLDS):
            self.delta_counts[k] += int((ratio < t).sum())
        self.n_valid += int(mask.sum())
        return self

    def merge(self, other: "MetricAccumulator") -> "MetricAccumulator":
        return MetricAccumulator(
            self.sum_sq_err + other.sum_sq_err,
            self.sum_abs_err + other.sum_abs_err,
            self.sum_rel_err + other.sum_rel_err,
            [a + b for a, b in zip(self.delta_counts, other.delta_counts)],
            self.n_valid + other.n_valid,
        )

    def finalize(self) -> EvalReport:
        n = self.n_valid
        if n == 0:
            raise EmptyMaskError("no valid pixel was accumulated")
        d = [c / n for c in self.delta_counts]
        return EvalReport(np.sqrt(self.sum_sq_err / n), self.sum_abs_err / n,
                          self.sum_rel_err / n, d[0], d[1], d[2], n)


def compute_metrics(pred, gt, mask=None) -> EvalReport:
    return MetricAccumulator().accumulate(pred, gt, mask).finalize()
