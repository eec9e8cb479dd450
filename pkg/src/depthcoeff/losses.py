"""Cross-entropy on depth coefficients, reference MSE/MAE, and two-point loss landscapes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import EmptyMaskError, InvalidInputError, MissingPixelError

PROB_FLOOR = 1e-12
LOG_FLOOR = float(np.log(PROB_FLOOR))
PENALTIES = ("mse", "mae", "tmse", "tmae")


@dataclass(frozen=True)
class LossReport:
    total: float
    per_pixel_mean: float
    n_pixels: int


def _float_array(x) -> np.ndarray:
    a = np.asarray(x)
    return a if a.dtype in (np.float32, np.float64) else a.astype(np.float64)


def softmax(logits, axis: int = -1) -> np.ndarray:
    z = _float_array(logits)
    if not np.isfinite(z).all():
        raise InvalidInputError("logits must be finite")
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis: int = -1) -> np.ndarray:
    z = _float_array(logits)
    if not np.isfinite(z).all():
        raise InvalidInputError("logits must be finite")
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


softmax_pixel = softmax


def cross_entropy(gt, pred) -> np.ndarray | float:
    """``-sum_j gt_j * log(pred_j)`` over the last axis, skipping zero gt entries."""
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if gt.shape != pred.shape:
        raise InvalidInputError(f"shape mismatch {gt.shape} vs {pred.shape}")
    if (~gt.any(axis=-1)).any():
        raise MissingPixelError("ground-truth coefficient vector is all zero")
    logp = np.log(np.maximum(pred, PROB_FLOOR))
    ce = -np.where(gt > 0, gt * logp, 0.0).sum(axis=-1)
    return float(ce) if ce.ndim == 0 else ce


cross_entropy_pixel = cross_entropy


def cross_entropy_image(gt_dc, pred_dc) -> LossReport:
    """Cross-entropy summed and averaged over pixels whose ground truth is present."""
    gt_dc = np.asarray(gt_dc, dtype=np.float64)
    present = gt_dc.any(axis=-1)
    n = int(present.sum())
    if n == 0:
        raise EmptyMaskError("no pixels with ground truth")
    per_pixel = cross_entropy(gt_dc[present], np.asarray(pred_dc, dtype=np.float64)[present])
    total = float(np.sum(per_pixel))
    return LossReport(total, total / n, n)


def ce_gradient_logits(gt, logits) -> np.ndarray:
    """Gradient of ``cross_entropy(gt, softmax(logits))`` w.r.t. the logits.

    Relies on the target summing to one.
    """
    gt = np.asarray(gt, dtype=np.float64)
    if (~gt.any(axis=-1)).any():
        raise MissingPixelError("ground-truth coefficient vector is all zero")
    return softmax(logits) - gt


def ce_loss_and_grad(logits: np.ndarray, target: np.ndarray, mask: np.ndarray):
    """Mean per-pixel cross-entropy over ``mask`` and its gradient w.r.t. ``logits``.

    ``logits`` and ``target`` have the bins on the last axis, ``mask`` has the
    leading shape. Pixels outside the mask contribute nothing.
    """
    n = int(mask.sum())
    if n == 0:
        raise EmptyMaskError("no pixels with ground truth")
    logp = np.maximum(log_softmax(logits), LOG_FLOOR)
    t = target[mask]
    loss = -np.where(t > 0, t * logp[mask], 0.0).sum() / n
    grad = np.zeros_like(logp)
    grad[mask] = (np.exp(logp[mask]) - t) / n
    return float(loss), grad


def _masked_errors(pred, gt, mask=None) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise InvalidInputError(f"shape mismatch {pred.shape} vs {gt.shape}")
    m = (pred != 0) & (gt != 0)
    if mask is not None:
        m &= np.asarray(mask, dtype=bool)
    if not m.any():
        raise EmptyMaskError("no pixels present in both images")
    return pred[m] - gt[m]


def mse_loss(pred, gt, mask=None) -> float:
    e = _masked_errors(pred, gt, mask)
    return float(np.mean(e * e))


def mae_loss(pred, gt, mask=None) -> float:
    return float(np.mean(np.abs(_masked_errors(pred, gt, mask))))


def mse_loss_and_grad(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray):
    """Mean squared error over ``mask`` and its gradient w.r.t. ``pred``."""
    n = int(mask.sum())
    if n == 0:
        raise EmptyMaskError("no pixels with ground truth")
    e = np.where(mask, pred - gt, 0.0)
    return float((e * e).sum() / n), 2.0 * e / n


def penalty(err, kind: str, t: float = 1.0) -> np.ndarray:
    e = np.abs(np.asarray(err, dtype=np.float64))
    if kind == "mse":
        return e * e
    if kind == "mae":
        return e
    if kind == "tmse":
        return np.minimum(e * e, t * t)
    if kind == "tmae":
        return np.minimum(e, t)
    raise InvalidInputError(f"unknown loss {kind!r}; expected one of {PENALTIES}")


def two_point_loss(d, d1: float, d2: float, kind: str, t: float = 1.0):
    """Mean penalty of estimate ``d`` against two equally likely depths."""
    d = np.asarray(d, dtype=np.float64)
    return 0.5 * (penalty(d - d1, kind, t) + penalty(d - d2, kind, t))


class Landscape(NamedTuple):
    d: np.ndarray
    loss: np.ndarray
    argmin: float

    def rows(self):
        return list(zip(self.d.tolist(), self.loss.tolist()))


def two_point_loss_landscape(
    d1: float, d2: float, kind: str = "mse", t: float = 1.0, samples: int = 601
) -> Landscape:
    """Evaluate :func:`two_point_loss` on a uniform grid over ``[d1 - 1, d2 + 1]``.

    The grid is built outward from the midpoint so that for odd ``samples``
    the midpoint is itself a grid node.
    """
    if not d1 < d2:
        raise InvalidInputError("require d1 < d2")
    if samples < 3:
        raise InvalidInputError("require samples >= 3")
    if t <= 0:
        raise InvalidInputError("threshold t must be > 0")
    lo, hi = d1 - 1.0, d2 + 1.0
    mid = 0.5 * (d1 + d2)
    step = (hi - lo) / (samples - 1)
    d = mid + step * (np.arange(samples) - (samples - 1) / 2)
    loss = two_point_loss(d, d1, d2, kind, t)
    return Landscape(d, loss, float(d[np.argmin(loss)]))
