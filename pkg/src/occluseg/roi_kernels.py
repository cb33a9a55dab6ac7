"""ROIAlign and box-delta encoding.

Feature-map coordinates follow the mask convention: cell ``(r, c)`` has its
center at ``(c + 0.5, r + 0.5)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, ValidationError
from .mask_core import BBox

# clamp for tw/th before exponentiation
DEFAULT_MAX_EXP = math.log(1000.0 / 16)


@dataclass(frozen=True)
class RoiSpec:
    box: BBox
    output_size: tuple[int, int]  # (h_out, w_out)
    sampling_ratio: int = 2

    def __post_init__(self):
        h, w = self.output_size
        if h < 1 or w < 1:
            raise ValidationError(f"output size must be positive, got {self.output_size}")
        if self.sampling_ratio < 1:
            raise ValidationError("sampling_ratio must be >= 1")


def _bilinear(f: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample (C, H, W) at continuous points; returns (C, *x.shape).

    Within one cell of the border the edge value is extended; farther out reads 0.
    """
    _, h, w = f.shape
    gx, gy = x - 0.5, y - 0.5
    outside = (gx < -1) | (gx > w) | (gy < -1) | (gy > h)
    gx = np.clip(gx, 0, w - 1)
    gy = np.clip(gy, 0, h - 1)
    x0 = np.floor(gx).astype(np.int64)
    y0 = np.floor(gy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = gx - x0
    ay = gy - y0
    # lerp form keeps constant inputs exact
    top = f[:, y0, x0] + ax * (f[:, y0, x1] - f[:, y0, x0])
    bot = f[:, y1, x0] + ax * (f[:, y1, x1] - f[:, y1, x0])
    val = top + ay * (bot - top)
    return np.where(outside, 0.0, val)


def roi_align(features, roi: RoiSpec) -> np.ndarray:
    """Average of ``sampling_ratio**2`` bilinear samples per output bin."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 3 or 0 in f.shape:
        raise DimensionError(f"feature map must be non-empty (C, H, W), got {f.shape}")
    _, h, w = f.shape
    b = roi.box
    if not (b.x_max > b.x_min and b.y_max > b.y_min):
        raise ValidationError(f"empty ROI {b}")
    if b.x_min < -0.5 or b.y_min < -0.5 or b.x_max > w + 0.5 or b.y_max > h + 0.5:
        raise ValidationError(f"ROI {b} extends more than half a cell beyond the {h}x{w} map")
    h_out, w_out = roi.output_size
    s = roi.sampling_ratio
    bin_w = (b.x_max - b.x_min) / w_out
    bin_h = (b.y_max - b.y_min) / h_out
    offs = (np.arange(s) + 0.5) / s
    xs = b.x_min + (np.arange(w_out)[:, None] + offs[None, :]) * bin_w  # (w_out, s)
    ys = b.y_min + (np.arange(h_out)[:, None] + offs[None, :]) * bin_h  # (h_out, s)
    gy = ys[:, None, :, None] * np.ones((1, w_out, 1, s))
    gx = xs[None, :, None, :] * np.ones((h_out, 1, s, 1))
    samples = _bilinear(f, gx, gy).reshape(f.shape[0], h_out, w_out, s * s)
    # shifted mean: exact when all samples agree
    first = samples[..., :1]
    return first[..., 0] + (samples - first).sum(axis=-1) / (s * s)


def _center_size(b: BBox) -> tuple[float, float, float, float]:
    return (b.x_min + b.x_max) / 2, (b.y_min + b.y_max) / 2, b.width, b.height


def box_encode(anchor: BBox, gt: BBox) -> tuple[float, float, float, float]:
    ax, ay, aw, ah = _center_size(anchor)
    gx, gy, gw, gh = _center_size(gt)
    if aw <= 0 or ah <= 0:
        raise ValidationError(f"anchor must have positive size, got {anchor}")
    if gw <= 0 or gh <= 0:
        raise ValidationError(f"ground-truth box must have positive size, got {gt}")
    return (gx - ax) / aw, (gy - ay) / ah, math.log(gw / aw), math.log(gh / ah)


def box_decode(anchor: BBox, deltas, max_exp: float = DEFAULT_MAX_EXP) -> BBox:
    ax, ay, aw, ah = _center_size(anchor)
    if aw <= 0 or ah <= 0:
        raise ValidationError(f"anchor must have positive size, got {anchor}")
    tx, ty, tw, th = (float(d) for d in deltas)
    cx, cy = ax + tx * aw, ay + ty * ah
    w = aw * math.exp(min(tw, max_exp))
    h = ah * math.exp(min(th, max_exp))
    return BBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
