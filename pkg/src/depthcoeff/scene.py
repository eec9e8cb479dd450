"""Synthetic depth scenes with exact ground truth and sparse sampling patterns."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.ndimage import uniform_filter

from .dc import BinGrid
from .errors import InvalidPatternError, InvalidSpecError


@dataclass(frozen=True)
class Rect:
    """Axis-aligned planar patch covering rows [top, bottom) and cols [left, right).

    Depth at (row, col) is ``depth + slope_x * col + slope_y * row``.
    """

    top: int
    left: int
    bottom: int
    right: int
    depth: float
    slope_x: float = 0.0
    slope_y: float = 0.0


@dataclass(frozen=True)
class SceneSpec:
    height: int
    width: int
    background: float
    background_slope_x: float = 0.0
    background_slope_y: float = 0.0
    objects: tuple[Rect, ...] = ()
    noise_sigma: float = 0.0
    seed: int = 0

    def to_text(self) -> str:
        lines = [
            f"height={self.height}",
            f"width={self.width}",
            f"background={self.background!r}",
            f"background_slope_x={self.background_slope_x!r}",
            f"background_slope_y={self.background_slope_y!r}",
            f"noise_sigma={self.noise_sigma!r}",
            f"seed={self.seed}",
        ]
        for r in self.objects:
            lines.append(
                f"object={r.top},{r.left},{r.bottom},{r.right},{r.depth!r},{r.slope_x!r},{r.slope_y!r}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SceneSpec":
        kw: dict = {}
        objects = []
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidSpecError(f"line {n}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            try:
                if key == "object":
                    parts = [p.strip() for p in val.split(",")]
                    if len(parts) not in (5, 7):
                        raise ValueError("object needs top,left,bottom,right,depth[,slope_x,slope_y]")
                    ints = [int(p) for p in parts[:4]]
                    floats = [float(p) for p in parts[4:]]
                    objects.append(Rect(*ints, *floats))
                elif key in ("height", "width", "seed"):
                    kw[key] = int(val)
                elif key in ("background", "background_slope_x", "background_slope_y", "noise_sigma"):
                    kw[key] = float(val)
                else:
                    raise ValueError(f"unknown key {key!r}")
            except ValueError as exc:
                raise InvalidSpecError(f"line {n}: {exc}") from exc
        missing = {"height", "width", "background"} - kw.keys()
        if missing:
            raise InvalidSpecError(f"scene config missing {sorted(missing)}")
        return cls(objects=tuple(objects), **kw)

    @classmethod
    def load(cls, path) -> "SceneSpec":
        return cls.from_text(Path(path).read_text())


def _plane(h: int, w: int, base: float, sx: float, sy: float) -> np.ndarray:
    rows, cols = np.mgrid[0:h, 0:w]
    return base + sx * cols + sy * rows


def object_index(spec: SceneSpec) -> np.ndarray:
    """Per-pixel index of the visible surface: 0 background, i + 1 for ``objects[i]``."""
    return _composite(spec)[1]


def _composite(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    h, w = spec.height, spec.width
    bg = _plane(h, w, spec.background, spec.background_slope_x, spec.background_slope_y)
    depth = bg.copy()
    idx = np.zeros((h, w), dtype=np.int64)
    for i, r in enumerate(spec.objects):
        sl = (slice(r.top, r.bottom), slice(r.left, r.right))
        obj = _plane(h, w, r.depth, r.slope_x, r.slope_y)[sl]
        front = obj < depth[sl]
        depth[sl] = np.where(front, obj, depth[sl])
        idx[sl] = np.where(front, i + 1, idx[sl])
    return depth, idx


def validate(spec: SceneSpec, grid: Optional[BinGrid] = None) -> None:
    if spec.height < 1 or spec.width < 1:
        raise InvalidSpecError("scene size must be positive")
    if spec.noise_sigma < 0:
        raise InvalidSpecError("noise_sigma must be >= 0")
    bg = _plane(spec.height, spec.width, spec.background, spec.background_slope_x, spec.background_slope_y)
    if (bg <= 0).any():
        raise InvalidSpecError("background depth must be > 0 everywhere")
    for i, r in enumerate(spec.objects):
        if not (0 <= r.top < r.bottom <= spec.height and 0 <= r.left < r.right <= spec.width):
            raise InvalidSpecError(f"object {i} lies outside the image or is empty")
        sl = (slice(r.top, r.bottom), slice(r.left, r.right))
        obj = _plane(spec.height, spec.width, r.depth, r.slope_x, r.slope_y)[sl]
        if (obj <= 0).any() or (obj >= bg[sl]).any():
            raise InvalidSpecError(f"object {i} must be in front of the background over its footprint")
    if grid is not None:
        depth, _ = _composite(spec)
        lo, hi = grid.encode_range
        if depth.min() < lo or depth.max() > hi:
            raise InvalidSpecError(f"scene depths [{depth.min()}, {depth.max()}] outside grid range [{lo}, {hi}]")


def render(spec: SceneSpec, grid: Optional[BinGrid] = None) -> np.ndarray:
    """Dense ground-truth depth; front-most surface wins.

    Surface noise is clipped per pixel to half the gap between an object and
    the background behind it (so occlusion order survives) and to the grid's
    encodable range when a grid is given.
    """
    validate(spec, grid)
    depth, idx = _composite(spec)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        noise = rng.normal(0.0, spec.noise_sigma, depth.shape)
        bg = _plane(spec.height, spec.width, spec.background, spec.background_slope_x, spec.background_slope_y)
        limit = np.where(idx > 0, 0.5 * (bg - depth), np.inf)
        depth = depth + np.clip(noise, -limit, limit)
        if grid is not None:
            depth = np.clip(depth, *grid.encode_range)
        depth = np.maximum(depth, 1e-3)
    return depth


def render_guide(spec: SceneSpec, blur: int = 0) -> np.ndarray:
    """Grayscale guide image in [0, 1]: one random intensity per surface, optional box blur."""
    _, idx = _composite(spec)
    rng = np.random.default_rng([spec.seed, 1])
    levels = rng.uniform(0.0, 1.0, len(spec.objects) + 1)
    guide = levels[idx]
    if blur > 0:
        guide = uniform_filter(guide, size=2 * blur + 1, mode="nearest")
    return guide


def discontinuity_mask(depth: np.ndarray, t: float) -> np.ndarray:
    """Pixels whose 4-neighbourhood (including themselves) spans a depth gap > t."""
    d = np.asarray(depth, dtype=np.float64)
    p = np.pad(d, 1, mode="edge")
    stack = np.stack([d, p[:-2, 1:-1], p[2:, 1:-1], p[1:-1, :-2], p[1:-1, 2:]])
    return stack.max(axis=0) - stack.min(axis=0) > t


@dataclass(frozen=True)
class SamplePattern:
    """``kind`` is ``uniform`` (``count`` random valid pixels), ``rows`` (every
    ``k``-th row) or ``grid`` (every ``k``-th row and column)."""

    kind: str
    count: int = 0
    k: int = 1
    seed: int = 0


def sample(gt: np.ndarray, pattern: SamplePattern) -> np.ndarray:
    """Sparse copy of ``gt`` keeping only the patterned pixels (0 elsewhere)."""
    gt = np.asarray(gt, dtype=np.float64)
    valid = gt != 0
    keep = np.zeros(gt.shape, dtype=bool)
    if pattern.kind == "uniform":
        flat = np.flatnonzero(valid)
        if not 0 <= pattern.count <= flat.size:
            raise InvalidPatternError(f"cannot draw {pattern.count} samples from {flat.size} valid pixels")
        rng = np.random.default_rng(pattern.seed)
        keep.flat[rng.choice(flat, size=pattern.count, replace=False)] = True
    elif pattern.kind in ("rows", "grid"):
        if pattern.k < 1:
            raise InvalidPatternError("k must be >= 1")
        keep[:: pattern.k] = True
        if pattern.kind == "grid":
            keep[:, np.arange(gt.shape[1]) % pattern.k != 0] = False
        keep &= valid
    else:
        raise InvalidPatternError(f"unknown pattern kind {pattern.kind!r}")
    return np.where(keep, gt, 0.0)


@dataclass
class SceneSample:
    """One training / evaluation example."""

    gt: np.ndarray
    sparse: np.ndarray
    guide: np.ndarray
    spec: Optional[SceneSpec] = field(default=None, repr=False)


def random_scene_spec(
    rng: np.random.Generator,
    size: int = 32,
    n_objects: tuple[int, int] = (1, 3),
    background: tuple[float, float] = (9.0, 12.0),
    foreground: tuple[float, float] = (3.0, 7.0),
    max_slope: float = 0.02,
) -> SceneSpec:
    bg = float(rng.uniform(*background))
    sx, sy = (float(s) for s in rng.uniform(-max_slope, max_slope, 2))
    objects = []
    for _ in range(int(rng.integers(n_objects[0], n_objects[1] + 1))):
        hh, ww = (int(s) for s in rng.integers(size // 5, size // 2 + 1, 2))
        top = int(rng.integers(0, size - hh + 1))
        left = int(rng.integers(0, size - ww + 1))
        ox, oy = (float(s) for s in rng.uniform(-max_slope, max_slope, 2))
        objects.append(Rect(top, left, top + hh, left + ww, float(rng.uniform(*foreground)), ox, oy))
    return SceneSpec(size, size, bg, sx, sy, tuple(objects), 0.0, int(rng.integers(2**31)))


def make_dataset(
    n: int,
    seed: int,
    grid: BinGrid,
    size: int = 32,
    pattern: Optional[SamplePattern] = None,
    guide_blur: int = 1,
) -> list[SceneSample]:
    """``n`` random scenes with their sparse samples and guide images, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        spec = random_scene_spec(rng, size)
        gt = render(spec, grid)
        pat = pattern or SamplePattern("uniform", count=max(1, size * size // 10))
        pat = SamplePattern(pat.kind, pat.count, pat.k, int(rng.integers(2**31)))
        out.append(SceneSample(gt, sample(gt, pat), render_guide(spec, guide_blur), spec))
    return out
