"""Diagnostics for depth mixing: 1-D convolution demo, bird's-eye view, mixed-pixel rate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dc import BinGrid, decode_3coeff, encode_depths
from .depthio import Camera, atomic_write_bytes
from .errors import EmptyMaskError, InvalidInputError


def _as_signal(signal) -> np.ndarray:
    return np.array([np.nan if v is None else float(v) for v in signal], dtype=np.float64)


def demo_conv1d(signal: Sequence[Optional[float]], kernel: Sequence[float], grid: BinGrid):
    """Filter a 1-D depth slice along two paths; returns (sparse_out, dc_out).

    ``signal`` holds depths with ``None``/NaN for missing samples. The sparse
    path is a normalized convolution over the known samples. The DC path
    encodes the known samples, filters every bin channel with the same
    kernel and decodes each position from its peak. Positions whose window
    holds no known sample come out as NaN.
    """
    s = _as_signal(signal)
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 1 or k.size % 2 == 0:
        raise InvalidInputError("kernel length must be odd")
    r = k.size // 2
    known = ~np.isnan(s)
    n = s.size

    dc = np.zeros((n, grid.n_bins))
    if known.any():
        dc[known] = encode_depths(s[known], grid, clamp=True)
    vals = np.where(known, s, 0.0)

    sparse_out = np.full(n, np.nan)
    dc_out = np.full(n, np.nan)
    for i in range(n):
        num = den = 0.0
        acc = np.zeros(grid.n_bins)
        for j in range(-r, r + 1):
            p = i + j
            if 0 <= p < n and known[p]:
                w = k[j + r]
                num += w * vals[p]
                den += w
                acc += w * dc[p]
        if den != 0:
            sparse_out[i] = num / den
        if acc.any() and (acc >= 0).all():
            dc_out[i] = decode_3coeff(acc, grid)
    return sparse_out, dc_out


@dataclass
class BEVGrid:
    """Top-down pixel counts; ``counts[iz, ix]`` covers ``z_edges[iz:iz+2]`` x ``x_edges[ix:ix+2]``."""

    counts: np.ndarray
    x_edges: np.ndarray
    z_edges: np.ndarray
    n_out_of_range: int

    def to_csv(self) -> str:
        xc = 0.5 * (self.x_edges[:-1] + self.x_edges[1:])
        zc = 0.5 * (self.z_edges[:-1] + self.z_edges[1:])
        lines = ["x,z,count"]
        for iz, z in enumerate(zc):
            for ix, x in enumerate(xc):
                lines.append(f"{x!r},{z!r},{int(self.counts[iz, ix])}")
        return "\n".join(lines) + "\n"


def bev_project(
    depth: np.ndarray,
    cam: Camera,
    x_range: tuple[float, float] = (-20.0, 20.0),
    z_range: tuple[float, float] = (0.0, 80.0),
    cell: float = 0.5,
) -> BEVGrid:
    """Count back-projected pixels per (x, z) cell, x lateral and z forward."""
    if not cell > 0:
        raise InvalidInputError("cell size must be > 0")
    nx = int(np.ceil((x_range[1] - x_range[0]) / cell - 1e-9))
    nz = int(np.ceil((z_range[1] - z_range[0]) / cell - 1e-9))
    if nx < 1 or nz < 1:
        raise InvalidInputError("empty BEV range")
    x_edges = x_range[0] + cell * np.arange(nx + 1)
    z_edges = z_range[0] + cell * np.arange(nz + 1)

    v, u = np.nonzero(np.asarray(depth) != 0)
    d = np.asarray(depth, dtype=np.float64)[v, u]
    x = (u - cam.cx) * d / cam.fx
    ix = np.floor((x - x_range[0]) / cell).astype(np.int64)
    iz = np.floor((d - z_range[0]) / cell).astype(np.int64)
    inside = (ix >= 0) & (ix < nx) & (iz >= 0) & (iz < nz)
    counts = np.zeros((nz, nx), dtype=np.int64)
    np.add.at(counts, (iz[inside], ix[inside]), 1)
    return BEVGrid(counts, x_edges, z_edges, int((~inside).sum()))


def mixed_pixel_rate(pred, gt, t: float = 1.0, radius: int = 2) -> float:
    """Fraction of paired pixels farther than ``t`` from every GT depth in their window.

    A pixel is mixed when no ground-truth surface within its
    (2 * radius + 1)^2 neighbourhood explains its predicted depth. Inputs are
    (H, W) images or (B, H, W) stacks; windows never cross images.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim not in (2, 3):
        raise InvalidInputError("pred and gt must share a (H, W) or (B, H, W) shape")
    if radius < 0 or t <= 0:
        raise InvalidInputError("radius must be >= 0 and t > 0")
    if pred.ndim == 2:
        pred, gt = pred[None], gt[None]
    mask = (pred != 0) & (gt != 0)
    if not mask.any():
        raise EmptyMaskError("no pixels present in both prediction and ground truth")
    _, h, w = gt.shape
    gp = np.pad(np.where(gt != 0, gt, np.nan), ((0, 0), (radius, radius), (radius, radius)),
                constant_values=np.nan)
    best = np.full(pred.shape, np.inf)
    for di in range(2 * radius + 1):
        for dj in range(2 * radius + 1):
            nb = gp[:, di:di + h, dj:dj + w]
            diff = np.abs(pred - nb)
            best = np.where(np.isnan(nb), best, np.minimum(best, diff))
    return float((best[mask] > t).mean())


def write_pgm(path, image: np.ndarray) -> None:
    """Binary 8-bit PGM, linearly scaled so the maximum maps to 255."""
    a = np.asarray(image, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidInputError("PGM image must be 2-D")
    top = a.max(initial=0.0)
    scaled = np.zeros(a.shape) if top <= 0 else np.clip(a, 0, None) / top * 255.0
    data = np.floor(scaled + 0.5).astype(np.uint8)
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode()
    atomic_write_bytes(path, header + data.tobytes())


def conv1d_csv(signal, sparse_out, dc_out) -> str:
    lines = ["index,input,sparse_path,dc_path"]
    for i, (s, a, b) in enumerate(zip(_as_signal(signal), sparse_out, dc_out)):
        fmt = lambda v: "" if np.isnan(v) else repr(float(v))
        lines.append(f"{i},{fmt(s)},{fmt(a)},{fmt(b)}")
    return "\n".join(lines) + "\n"
