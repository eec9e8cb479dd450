"""Depth completion error metrics, including thresholded tMAE / tRMSE."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyMaskError, InvalidGTError, InvalidInputError

DEFAULT_DELTA_THRESHOLDS = (1.02, 1.05, 1.10, 1.25, 1.5625)
OUTDOOR_T = 1.0
INDOOR_T = 0.25


@dataclass(frozen=True)
class MetricReport:
    """Errors in meters; ``imae``/``irmse`` in 1/km. ``delta[i]`` is a fraction."""

    rmse: float
    mae: float
    mre: float
    imae: float
    irmse: float
    tmae: float
    trmse: float
    delta: tuple[float, ...]
    thresholds: tuple[float, ...]
    n_pixels: int
    t: float

    def csv_header(self) -> list[str]:
        head = ["rmse", "mae", "mre", "imae", "irmse", "tmae", "trmse"]
        head += [f"delta_{th:g}" for th in self.thresholds]
        return head + ["n_pixels", "t"]

    def csv_values(self) -> list:
        vals = [self.rmse, self.mae, self.mre, self.imae, self.irmse, self.tmae, self.trmse]
        return vals + list(self.delta) + [self.n_pixels, self.t]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.csv_header()) + "\n")
        buf.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in self.csv_values()) + "\n")
        return buf.getvalue()

    def to_table(self) -> str:
        width = max(len(h) for h in self.csv_header())
        return "\n".join(
            f"{h:<{width}}  {v:.6g}" if isinstance(v, float) else f"{h:<{width}}  {v}"
            for h, v in zip(self.csv_header(), self.csv_values())
        )


def _paired(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise InvalidInputError(f"shape mismatch {pred.shape} vs {gt.shape}")
    if not np.isfinite(gt).all() or (gt < 0).any():
        raise InvalidGTError("ground truth depths must be finite and >= 0 (0 = missing)")
    if not np.isfinite(pred).all() or (pred < 0).any():
        raise InvalidInputError("predicted depths must be finite and >= 0 (0 = missing)")
    m = (pred > 0) & (gt > 0)
    if not m.any():
        raise EmptyMaskError("no pixels present in both prediction and ground truth")
    return pred[m], gt[m]


def evaluate(
    pred,
    gt,
    t: float = OUTDOOR_T,
    delta_thresholds: Sequence[float] = DEFAULT_DELTA_THRESHOLDS,
) -> MetricReport:
    """All metrics over pixels present (non-zero) in both images.

    ``pred`` and ``gt`` may have any matching shape, so a stack of images is
    evaluated as one pooled pixel set.
    """
    if not t > 0:
        raise InvalidInputError("threshold t must be > 0")
    ths = tuple(float(x) for x in delta_thresholds)
    if any(x <= 1 for x in ths) or list(ths) != sorted(ths):
        raise InvalidInputError("delta thresholds must be > 1 and ascending")
    p, g = _paired(pred, gt)
    err = p - g
    abs_err = np.abs(err)
    sq = err * err
    inv_err = 1000.0 / p - 1000.0 / g
    ratio = np.maximum(p / g, g / p)
    return MetricReport(
        rmse=float(np.sqrt(sq.mean())),
        mae=float(abs_err.mean()),
        mre=float((abs_err / g).mean()),
        imae=float(np.abs(inv_err).mean()),
        irmse=float(np.sqrt((inv_err * inv_err).mean())),
        tmae=float(np.minimum(abs_err, t).mean()),
        trmse=float(np.sqrt(np.minimum(sq, t * t).mean())),
        delta=tuple(float((ratio < th).mean()) for th in ths),
        thresholds=ths,
        n_pixels=int(p.size),
        t=float(t),
    )


def tmae_saturation_rate(pred, gt, t: float = OUTDOOR_T) -> float:
    """Fraction of paired pixels whose absolute error reaches the threshold."""
    if not t > 0:
        raise InvalidInputError("threshold t must be > 0")
    p, g = _paired(pred, gt)
    return float((np.abs(p - g) >= t).mean())
