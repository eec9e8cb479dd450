"""Depth bin grid and the Depth Coefficients (DC) codec.

A depth ``d`` is encoded over a uniform grid of bin centers as three
non-zero coefficients around the nearest center ``D_k``::

    delta = (d - D_k) / b
    c[k-1], c[k], c[k+1] = (0.5 - delta) / 2, 0.5, (0.5 + delta) / 2

The coefficients are non-negative, sum to one and their inner product with
the centers is ``d`` again. Bin indices are 0-based throughout.

Depth images are plain float arrays where 0 marks a missing pixel. DC images
are arrays with the bins on the last axis; a missing pixel is all-zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    InvalidInputError,
    MissingPixelError,
    NormalizationError,
    RangeError,
)

SUM_TOL = 1e-6


@dataclass(frozen=True)
class BinGrid:
    """Uniform depth axis with ``n_bins`` centers at ``d_min + (j + 0.5) * b``."""

    d_min: float
    d_max: float
    n_bins: int

    def __post_init__(self):
        if not (np.isfinite(self.d_min) and np.isfinite(self.d_max)):
            raise InvalidInputError("grid bounds must be finite")
        if self.d_min < 0:
            raise InvalidInputError(f"d_min must be >= 0, got {self.d_min}")
        if int(self.n_bins) != self.n_bins or self.n_bins < 3:
            raise InvalidInputError(f"n_bins must be an integer >= 3, got {self.n_bins}")
        if self.d_max <= self.d_min:
            raise InvalidInputError("d_max must exceed d_min")

    @classmethod
    def kitti(cls, n_bins: int = 80) -> "BinGrid":
        return cls(0.0, 80.0, n_bins)

    @classmethod
    def nyu(cls, n_bins: int = 80) -> "BinGrid":
        return cls(0.0, 8.0, n_bins)

    @property
    def b(self) -> float:
        return (self.d_max - self.d_min) / self.n_bins

    @cached_property
    def centers(self) -> np.ndarray:
        c = self.d_min + (np.arange(self.n_bins) + 0.5) * self.b
        c.setflags(write=False)
        return c

    @property
    def encode_range(self) -> tuple[float, float]:
        """Depths whose nearest center has both neighbors on the grid."""
        return self.d_min + self.b, self.d_max - self.b

    def nearest_bin(self, d):
        """Index of the closest center; exact ties go to the lower bin."""
        u = (np.asarray(d, dtype=np.float64) - self.d_min) / self.b - 0.5
        return np.ceil(u - 0.5).astype(np.int64)


def encode_depths(d, grid: BinGrid, clamp: bool = False) -> np.ndarray:
    """Vectorized encoder: array of depths of shape S -> DC array of shape S + (N,).

    Every entry must be a finite positive depth; use :func:`encode_image` for
    images with missing pixels.
    """
    d = np.asarray(d, dtype=np.float64)
    bad = ~np.isfinite(d) | (d <= 0)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0]) if d.ndim else ()
        where = f" at index {idx}" if idx else ""
        raise InvalidInputError(f"depth must be finite and > 0, got {float(d[idx])}{where}")
    lo, hi = grid.encode_range
    if clamp:
        d = np.clip(d, lo, hi)
    else:
        out = (d < lo) | (d > hi)
        if out.any():
            idx = tuple(int(i) for i in np.argwhere(out)[0]) if d.ndim else ()
            where = f" at index {idx}" if idx else ""
            raise RangeError(f"depth {float(d[idx])}{where} outside encodable range [{lo}, {hi}]")

    k = grid.nearest_bin(d)
    delta = np.clip((d - grid.centers[k]) / grid.b, -0.5, 0.5)

    n = grid.n_bins
    # two spare columns absorb the zero-weight neighbour at the grid ends
    padded = np.zeros(d.shape + (n + 2,))
    flat = padded.reshape(-1, n + 2)
    rows = np.arange(flat.shape[0])
    kf = k.reshape(-1) + 1
    df = delta.reshape(-1)
    flat[rows, kf - 1] = (0.5 - df) / 2
    flat[rows, kf] = 0.5
    flat[rows, kf + 1] = (0.5 + df) / 2
    return padded[..., 1:-1].copy()


def encode_pixel(d: float, grid: BinGrid, clamp: bool = False) -> np.ndarray:
    return encode_depths(float(d), grid, clamp)


def encode_image(depth: np.ndarray, grid: BinGrid, clamp: bool = False) -> np.ndarray:
    """Encode an H x W depth image (0 = missing) into an H x W x N DC image."""
    depth = np.asarray(depth, dtype=np.float64)
    out = np.zeros(depth.shape + (grid.n_bins,))
    present = depth != 0
    if present.any():
        try:
            out[present] = encode_depths(depth[present], grid, clamp)
        except InvalidInputError as exc:
            # re-run per pixel only to report coordinates of the first failure
            for idx in zip(*np.nonzero(present)):
                try:
                    encode_depths(depth[idx], grid, clamp)
                except InvalidInputError as inner:
                    raise type(exc)(f"pixel {tuple(int(i) for i in idx)}: {inner}") from exc
            raise
    return out


def _checked_sums(c: np.ndarray) -> np.ndarray:
    if not np.isfinite(c).all() or (c < 0).any():
        raise InvalidInputError("coefficients must be finite and non-negative")
    return c.sum(axis=-1)


def decode_all(c, grid: BinGrid) -> np.ndarray | float:
    """Depth as the inner product of coefficients with the bin centers."""
    c = np.asarray(c, dtype=np.float64)
    s = _checked_sums(c)
    if (s == 0).any():
        raise MissingPixelError("cannot decode an all-zero coefficient vector")
    if (np.abs(s - 1.0) > SUM_TOL).any():
        raise NormalizationError(f"coefficients sum to {s.flat[np.argmax(np.abs(s - 1).flat)]}, not 1")
    d = (c @ grid.centers) / s
    return float(d) if d.ndim == 0 else d


def decode_3coeff(c, grid: BinGrid) -> np.ndarray | float:
    """Depth from the peak coefficient and its two neighbours.

    Selecting the peak keeps multi-modal vectors on one mode instead of
    averaging across them. Ties go to the lowest index; neighbours beyond
    the grid carry zero weight.
    """
    c = np.asarray(c, dtype=np.float64)
    s = _checked_sums(c)
    if (s == 0).any():
        raise MissingPixelError("cannot decode an all-zero coefficient vector")
    k = np.argmax(c, axis=-1)[..., None]
    pad = [(0, 0)] * (c.ndim - 1) + [(1, 1)]
    cp = np.pad(c, pad)
    centers = np.concatenate(([grid.centers[0] - grid.b], grid.centers, [grid.centers[-1] + grid.b]))
    idx = np.concatenate([k, k + 1, k + 2], axis=-1)
    w = np.take_along_axis(cp, idx, axis=-1)
    d = (w * centers[idx]).sum(axis=-1) / w.sum(axis=-1)
    return float(d) if d.ndim == 0 else d


def decode_image(dc: np.ndarray, grid: BinGrid, mode: str = "3coeff") -> np.ndarray:
    """Decode a DC image; all-zero pixels decode to 0 (missing)."""
    if mode not in ("all", "3coeff"):
        raise InvalidInputError(f"unknown decode mode {mode!r}")
    dc = np.asarray(dc, dtype=np.float64)
    if dc.shape[-1] != grid.n_bins:
        raise InvalidInputError(f"DC image has {dc.shape[-1]} channels, grid has {grid.n_bins}")
    out = np.zeros(dc.shape[:-1])
    present = dc.any(axis=-1)
    if present.any():
        fn = decode_all if mode == "all" else decode_3coeff
        out[present] = fn(dc[present], grid)
    return out


def valid_mask(depth: np.ndarray) -> np.ndarray:
    return np.asarray(depth) != 0
