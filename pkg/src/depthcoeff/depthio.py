"""Depth image and point list I/O, Lidar ring subsampling, and pinhole projection.

File formats
------------
* 16-bit PNG depth: stored value / 256 = meters, 0 = missing.
* Binary tensor: one or more records, each ``b"DCTENSOR"``, uint32 ndim,
  ndim x uint64 dims, then float64 data, all little-endian, row-major.
* Point CSV: header ``x,y,z`` or ``x,y,z,ring``, one point per line.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image

from .errors import DegenerateInputError, FormatError, InvalidInputError

PNG_SCALE = 256.0
TENSOR_MAGIC = b"DCTENSOR"


def _umask_mode() -> int:
    # mkstemp creates 0600 files; give renamed outputs the mode open() would
    mask = os.umask(0)
    os.umask(mask)
    return 0o666 & ~mask


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, _umask_mode())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


# -- 16-bit PNG ---------------------------------------------------------------

def depth_to_png16_values(depth: np.ndarray) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise FormatError(f"depth image must be 2-D, got shape {depth.shape}")
    if not np.isfinite(depth).all() or (depth < 0).any():
        raise InvalidInputError("depths must be finite and >= 0 (0 = missing)")
    stored = np.floor(depth * PNG_SCALE + 0.5)
    if stored.max(initial=0) > 65535:
        raise FormatError(f"depth {depth.max()} m exceeds the 16-bit PNG range")
    # keep tiny positive depths present instead of rounding them to missing
    stored[(depth > 0) & (stored == 0)] = 1
    return stored.astype(np.uint16)


def write_depth_png16(depth: np.ndarray, path) -> None:
    values = depth_to_png16_values(depth)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".png")
    os.close(fd)
    try:
        Image.fromarray(values).save(tmp, format="PNG")
        os.chmod(tmp, _umask_mode())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_png16_values(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.format != "PNG":
            raise FormatError(f"{path}: not a PNG file")
        if im.mode not in ("I;16", "I;16B", "I;16L"):
            raise FormatError(f"{path}: expected 16-bit single-channel PNG, got mode {im.mode}")
        return np.array(im, dtype=np.uint16)


def read_depth_png16(path) -> np.ndarray:
    return read_png16_values(path).astype(np.float64) / PNG_SCALE


# -- binary tensors -----------------------------------------------------------

def tensor_to_bytes(arr) -> bytes:
    arr = np.asarray(arr, dtype="<f8")
    head = TENSOR_MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + arr.tobytes(order="C")


def write_tensors(path, arrays: Iterable[np.ndarray]) -> None:
    atomic_write_bytes(path, b"".join(tensor_to_bytes(a) for a in arrays))


def write_tensor(path, arr) -> None:
    write_tensors(path, [arr])


def tensors_from_bytes(buf: bytes) -> list[np.ndarray]:
    out = []
    pos = 0
    while pos < len(buf):
        if buf[pos:pos + 8] != TENSOR_MAGIC:
            raise FormatError(f"bad tensor magic at byte {pos}")
        pos += 8
        if pos + 4 > len(buf):
            raise FormatError("truncated tensor header")
        (ndim,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        if pos + 8 * ndim > len(buf):
            raise FormatError("truncated tensor header")
        shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
        pos += 8 * ndim
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(buf):
            raise FormatError("truncated tensor data")
        out.append(np.frombuffer(buf, dtype="<f8", count=nbytes // 8, offset=pos).reshape(shape).copy())
        pos += nbytes
    return out


def read_tensors(path) -> list[np.ndarray]:
    return tensors_from_bytes(Path(path).read_bytes())


def read_tensor(path) -> np.ndarray:
    arrs = read_tensors(path)
    if len(arrs) != 1:
        raise FormatError(f"{path}: expected exactly one tensor, found {len(arrs)}")
    return arrs[0]


# -- cameras and points -------------------------------------------------------

@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidInputError("principal point must lie inside the image")


@dataclass
class PointList:
    """N x 3 coordinates in meters, plus an optional ring index per point."""

    xyz: np.ndarray
    ring: Optional[np.ndarray] = None

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(self.xyz).all():
            raise InvalidInputError("point coordinates must be finite")
        if self.ring is not None:
            self.ring = np.asarray(self.ring, dtype=np.int64).reshape(-1)
            if self.ring.shape[0] != self.xyz.shape[0]:
                raise InvalidInputError("ring array length differs from point count")
            if (self.ring < 0).any():
                raise InvalidInputError("ring indices must be >= 0")

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def subset(self, keep: np.ndarray) -> "PointList":
        return PointList(self.xyz[keep], None if self.ring is None else self.ring[keep])


def write_points_csv(points: PointList, path) -> None:
    lines = ["x,y,z,ring" if points.ring is not None else "x,y,z"]
    for i in range(len(points)):
        row = [repr(float(v)) for v in points.xyz[i]]
        if points.ring is not None:
            row.append(str(int(points.ring[i])))
        lines.append(",".join(row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_points_csv(path) -> PointList:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header not in (["x", "y", "z"], ["x", "y", "z", "ring"]):
            raise FormatError(f"{path}: expected header x,y,z[,ring], got {','.join(header)}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if any(len(r) != len(header) for r in rows):
        raise FormatError(f"{path}: inconsistent column count")
    try:
        xyz = np.array([[float(v) for v in r[:3]] for r in rows], dtype=np.float64).reshape(-1, 3)
        ring = np.array([int(r[3]) for r in rows], dtype=np.int64) if len(header) == 4 else None
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return PointList(xyz, ring)


def subsample_rows(
    points: PointList, every: Optional[int] = None, rings: Optional[Sequence[int]] = None
) -> PointList:
    """Keep points on every ``every``-th ring (0, k, 2k, ...) or on an explicit ring set.

    With 64-ring input, ``every=2`` simulates 32R and ``every=4`` 16R.
    """
    if points.ring is None:
        raise InvalidInputError("points carry no ring index; see estimate_rings_from_elevation")
    if (every is None) == (rings is None):
        raise InvalidInputError("give exactly one of every / rings")
    if every is not None:
        if every < 1:
            raise InvalidInputError("every must be >= 1")
        keep = points.ring % every == 0
    else:
        keep = np.isin(points.ring, np.asarray(list(rings), dtype=np.int64))
    return points.subset(keep)


def estimate_rings_from_elevation(points: PointList, n_rings: int) -> PointList:
    """Assign rings by uniform binning of elevation angle; ring 0 is the lowest beam."""
    if n_rings < 2:
        raise InvalidInputError("n_rings must be >= 2")
    norm = np.linalg.norm(points.xyz, axis=1)
    if (norm == 0).any():
        raise InvalidInputError("points at the sensor origin have no elevation")
    elev = np.arcsin(np.clip(points.xyz[:, 2] / norm, -1.0, 1.0))
    lo, hi = elev.min(initial=np.inf), elev.max(initial=-np.inf)
    if not hi > lo:
        raise DegenerateInputError("all points share one elevation angle")
    ring = np.floor((elev - lo) / (hi - lo) * n_rings).astype(np.int64)
    return PointList(points.xyz, np.minimum(ring, n_rings - 1))


def project_to_depth_image(points: PointList, cam: Camera) -> tuple[np.ndarray, int]:
    """Project camera-frame points to a depth image; returns (depth, n_dropped).

    Points with z <= 0 or landing outside the frame are dropped. When several
    points hit one pixel the nearest one is kept.
    """
    x, y, z = points.xyz.T
    front = z > 0
    u = np.full(len(points), -1, dtype=np.int64)
    v = np.full(len(points), -1, dtype=np.int64)
    u[front] = np.floor(cam.fx * x[front] / z[front] + cam.cx + 0.5)
    v[front] = np.floor(cam.fy * y[front] / z[front] + cam.cy + 0.5)
    keep = front & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    depth = np.full((cam.height, cam.width), np.inf)
    np.minimum.at(depth, (v[keep], u[keep]), z[keep])
    depth[np.isinf(depth)] = 0.0
    return depth, int((~keep).sum())


def back_project(depth: np.ndarray, cam: Camera) -> PointList:
    """Camera-frame points for every present pixel, in row-major pixel order."""
    v, u = np.nonzero(np.asarray(depth) != 0)
    d = np.asarray(depth, dtype=np.float64)[v, u]
    xyz = np.stack([(u - cam.cx) * d / cam.fx, (v - cam.cy) * d / cam.fy, d], axis=1)
    return PointList(xyz)


def crop_top(depth: np.ndarray, rows: int) -> np.ndarray:
    """Drop the top ``rows`` rows, which carry no Lidar returns on KITTI."""
    if rows < 0 or rows >= np.asarray(depth).shape[0]:
        raise InvalidInputError(f"cannot crop {rows} rows from an image of height {np.asarray(depth).shape[0]}")
    return np.asarray(depth)[rows:]
