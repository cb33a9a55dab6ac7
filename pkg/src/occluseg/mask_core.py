"""Binary masks in row-major run-length form, plus the geometry used on them.

Coordinates: ``x`` is the column, ``y`` is the row, and pixel ``(r, c)`` has
its center at ``(c + 0.5, r + 0.5)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DegeneratePolygonWarning, DimensionError, SchemaError, ValidationError

BACKGROUND, VISIBLE, OCCLUDED = 0, 1, 2


@dataclass(frozen=True)
class BinaryMask:
    """Run-length encoded bit mask.

    ``runs`` alternate background/foreground starting with background, so a
    mask whose first pixel is set starts with a zero-length run.
    """

    height: int
    width: int
    runs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(int(r) for r in self.runs))
        if self.height <= 0 or self.width <= 0:
            raise DimensionError(f"mask must have positive size, got {self.height}x{self.width}")
        if not self.runs:
            raise ValidationError("runs must not be empty")
        if any(r < 0 for r in self.runs):
            raise ValidationError("runs must be non-negative")
        if any(r == 0 for r in self.runs[1:]):
            raise ValidationError("runs are not canonical: zero-length interior run")
        if sum(self.runs) != self.height * self.width:
            raise ValidationError(
                f"runs sum to {sum(self.runs)}, expected {self.height * self.width}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @cached_property
    def dense(self) -> np.ndarray:
        """Read-only boolean array of shape (height, width)."""
        runs = np.asarray(self.runs, dtype=np.int64)
        values = np.zeros(len(runs), dtype=bool)
        values[1::2] = True
        flat = np.repeat(values, runs)
        out = flat.reshape(self.height, self.width)
        out.setflags(write=False)
        return out

    @cached_property
    def area(self) -> int:
        return int(sum(self.runs[1::2]))

    def to_json(self) -> dict:
        return {"size": [self.height, self.width], "counts": list(self.runs)}

    @classmethod
    def from_json(cls, obj, where: str = "mask") -> "BinaryMask":
        if not isinstance(obj, dict):
            raise SchemaError("expected an object with 'size' and 'counts'", field=where)
        for key in ("size", "counts"):
            if key not in obj:
                raise SchemaError(f"missing '{key}'", field=where)
        size = obj["size"]
        if not (isinstance(size, list) and len(size) == 2 and all(isinstance(v, int) for v in size)):
            raise SchemaError("'size' must be [height, width]", field=f"{where}.size")
        counts = obj["counts"]
        if not (isinstance(counts, list) and all(isinstance(v, int) for v in counts)):
            raise SchemaError("'counts' must be a list of integers", field=f"{where}.counts")
        try:
            return cls(size[0], size[1], tuple(counts))
        except ValueError as exc:
            raise SchemaError(str(exc), field=where) from exc

    @classmethod
    def empty(cls, height: int, width: int) -> "BinaryMask":
        return cls(height, width, (height * width,))

    @classmethod
    def full(cls, height: int, width: int) -> "BinaryMask":
        return cls(height, width, (0, height * width))


def rle_encode(dense) -> BinaryMask:
    grid = np.asarray(dense)
    if grid.ndim != 2:
        raise DimensionError(f"expected a 2D grid, got shape {grid.shape}")
    h, w = grid.shape
    if h == 0 or w == 0:
        raise DimensionError(f"grid has zero area: {h}x{w}")
    flat = grid.astype(bool).ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return BinaryMask(h, w, tuple(runs))


def rle_decode(mask: BinaryMask) -> np.ndarray:
    return mask.dense.copy()


def _check_same(a: BinaryMask, b: BinaryMask) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"mask sizes differ: {a.shape} vs {b.shape}")


def intersect(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same(a, b)
    return rle_encode(a.dense & b.dense)


def union(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same(a, b)
    return rle_encode(a.dense | b.dense)


def subtract(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same(a, b)
    return rle_encode(a.dense & ~b.dense)


def union_all(masks: Iterable[BinaryMask], height: int, width: int) -> BinaryMask:
    acc = np.zeros((height, width), dtype=bool)
    for m in masks:
        if m.shape != (height, width):
            raise DimensionError(f"mask size {m.shape} does not match {(height, width)}")
        acc |= m.dense
    return rle_encode(acc)


def area(a: BinaryMask) -> int:
    return a.area


def intersection_area(a: BinaryMask, b: BinaryMask) -> int:
    _check_same(a, b)
    return int(np.count_nonzero(a.dense & b.dense))


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union. Two empty masks raise; the caller picks a policy."""
    _check_same(a, b)
    inter = int(np.count_nonzero(a.dense & b.dense))
    uni = a.area + b.area - inter
    if uni == 0:
        raise ValueError("IoU is undefined for two empty masks")
    return inter / uni


@dataclass(frozen=True)
class Polygon:
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise ValidationError(f"polygon needs at least 3 vertices, got {len(verts)}")
        if not all(math.isfinite(v) for xy in verts for v in xy):
            raise ValidationError("polygon vertices must be finite")
        object.__setattr__(self, "vertices", verts)

    def translated(self, dx: float, dy: float) -> "Polygon":
        return Polygon(tuple((x + dx, y + dy) for x, y in self.vertices))

    def to_json(self) -> list:
        return [[x, y] for x, y in self.vertices]


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValidationError(f"inverted box {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def _row_crossings(verts: np.ndarray, yc: float) -> np.ndarray:
    x0, y0 = verts[:, 0], verts[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    # half-open in y: an edge owns its upper endpoint, horizontal edges own nothing
    hit = ((y0 <= yc) & (yc < y1)) | ((y1 <= yc) & (yc < y0))
    if not hit.any():
        return np.empty(0)
    x0, y0, x1, y1 = x0[hit], y0[hit], x1[hit], y1[hit]
    return np.sort(x0 + (yc - y0) * (x1 - x0) / (y1 - y0))


def rasterize(poly: Polygon, height: int, width: int) -> BinaryMask:
    """Even-odd scanline fill sampled at pixel centers.

    A center lying exactly on a left edge is inside, on a right edge outside;
    on a scanline through a vertex the upper edge endpoint counts (top-left rule).
    Emits ``DegeneratePolygonWarning`` when nothing is covered.
    """
    if height <= 0 or width <= 0:
        raise DimensionError(f"canvas must have positive size, got {height}x{width}")
    verts = np.asarray(poly.vertices, dtype=np.float64)
    out = np.zeros((height, width), dtype=bool)
    ys = verts[:, 1]
    r_lo = max(0, math.floor(ys.min() - 0.5))
    r_hi = min(height, math.ceil(ys.max() - 0.5) + 1)
    for r in range(r_lo, r_hi):
        xs = _row_crossings(verts, r + 0.5)
        for xa, xb in zip(xs[0::2], xs[1::2]):
            c0 = max(0, math.ceil(xa - 0.5))
            c1 = min(width, math.ceil(xb - 0.5))
            if c1 > c0:
                out[r, c0:c1] = True
    if not out.any():
        warnings.warn(
            f"polygon covers no pixel centers on a {height}x{width} canvas",
            DegeneratePolygonWarning,
            stacklevel=2,
        )
    return rle_encode(out)


def centroid(m: BinaryMask) -> tuple[float, float]:
    """Mean pixel-center position ``(x, y)`` of the foreground."""
    if m.area == 0:
        raise ValueError("centroid of an empty mask")
    rows, cols = np.nonzero(m.dense)
    return float(cols.mean() + 0.5), float(rows.mean() + 0.5)


def safe_point(m: BinaryMask) -> tuple[int, int]:
    """Foreground pixel ``(x, y)`` = (col, row) at or nearest to the centroid."""
    cx, cy = centroid(m)
    r, c = int(math.floor(cy)), int(math.floor(cx))
    dense = m.dense
    if 0 <= r < m.height and 0 <= c < m.width and dense[r, c]:
        return c, r
    rows, cols = np.nonzero(dense)  # row-major order
    d2 = (cols + 0.5 - cx) ** 2 + (rows + 0.5 - cy) ** 2
    k = int(np.argmin(d2))  # first minimum == row-major tie-break
    return int(cols[k]), int(rows[k])


@dataclass(frozen=True)
class MultiClassMask:
    """Per-pixel background (0) / visible (1) / occluded (2) labels."""

    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2 or lab.size == 0:
            raise DimensionError(f"labels must be a non-empty 2D array, got shape {lab.shape}")
        lab = lab.astype(np.int64, copy=True)
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @classmethod
    def from_masks(cls, visible: BinaryMask, occluded: BinaryMask) -> "MultiClassMask":
        _check_same(visible, occluded)
        if (visible.dense & occluded.dense).any():
            raise ValidationError("visible and occluded masks overlap")
        lab = np.zeros(visible.shape, dtype=np.int64)
        lab[visible.dense] = VISIBLE
        lab[occluded.dense] = OCCLUDED
        return cls(lab)


def multiclass_split(m: MultiClassMask) -> tuple[BinaryMask, BinaryMask]:
    lab = m.labels
    bad = (lab < BACKGROUND) | (lab > OCCLUDED)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValidationError(f"label {lab[r, c]} at ({r}, {c}) is not one of 0, 1, 2")
    return rle_encode(lab == VISIBLE), rle_encode(lab == OCCLUDED)


def masks_from_dense(arrays: Sequence[np.ndarray]) -> list[BinaryMask]:
    return [rle_encode(a) for a in arrays]
