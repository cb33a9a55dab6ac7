"""Seedable HSV / blur / affine augmentation applied jointly to an image and its labels.

HSV and blur only touch the RGB image. The affine warp is computed once as an
inverse map from output pixel centers to source coordinates; the image is
resampled bilinearly and every label field is gathered through the same
nearest-pixel index map, so visible/occluded/whole partitions survive exactly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .dataset_gen import FrameLabels, InstanceLabel, instance_to_semantic
from .exceptions import DimensionError, ValidationError
from .mask_core import BinaryMask, rle_encode

DET_TOL = 1e-9


@dataclass(frozen=True)
class AugmentParams:
    hue_shift: float = 0.0  # turns
    saturation_scale: float = 1.0
    value_scale: float = 1.0
    blur_sigma: float = 0.0
    scale: float = 1.0
    rotation: float = 0.0  # radians
    translation: tuple[float, float] = (0.0, 0.0)  # (dx, dy) pixels
    shear: float = 0.0  # radians
    rng_seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "translation", tuple(float(t) for t in self.translation))
        if not -0.5 <= self.hue_shift <= 0.5:
            raise ValidationError(f"hue_shift {self.hue_shift} outside [-0.5, 0.5]")
        for name in ("saturation_scale", "value_scale", "scale"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if not self.blur_sigma >= 0:
            raise ValidationError("blur_sigma must be non-negative")

    @property
    def is_color_identity(self) -> bool:
        return self.hue_shift == 0 and self.saturation_scale == 1 and self.value_scale == 1

    @property
    def is_affine_identity(self) -> bool:
        return (
            self.scale == 1 and self.rotation == 0 and self.shear == 0
            and self.translation == (0.0, 0.0)
        )


@dataclass(frozen=True)
class AugmentRanges:
    """Closed ``(low, high)`` ranges for :func:`sample_params`.

    Translation is a fraction of the image side; angles are in degrees.
    """

    hue_shift: tuple[float, float] = (-0.05, 0.05)
    saturation_scale: tuple[float, float] = (0.7, 1.3)
    value_scale: tuple[float, float] = (0.7, 1.3)
    blur_sigma: tuple[float, float] = (0.0, 1.5)
    scale: tuple[float, float] = (0.8, 1.2)
    rotation_deg: tuple[float, float] = (-15.0, 15.0)
    translate_frac: tuple[float, float] = (-0.1, 0.1)
    shear_deg: tuple[float, float] = (-10.0, 10.0)

    def __post_init__(self):
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValidationError(f"range {f.name} must be finite")
            if lo > hi:
                raise ValidationError(f"range {f.name} is inverted: ({lo}, {hi})")
            object.__setattr__(self, f.name, (float(lo), float(hi)))

    @classmethod
    def from_dict(cls, block: dict) -> "AugmentRanges":
        known = {f.name for f in fields(cls)}
        unknown = set(block) - known
        if unknown:
            raise ValidationError(f"unknown augment keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in block.items()})

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}


def sample_params(ranges: AugmentRanges, rng_seed, size: tuple[int, int]) -> AugmentParams:
    """Uniform draw of every field; ``size`` is (height, width) for the translation range."""
    rng = np.random.default_rng(rng_seed)
    h, w = size

    def draw(lo_hi):
        lo, hi = lo_hi
        return lo if lo == hi else float(rng.uniform(lo, hi))

    hue = draw(ranges.hue_shift)
    sat = draw(ranges.saturation_scale)
    val = draw(ranges.value_scale)
    blur = draw(ranges.blur_sigma)
    scale = draw(ranges.scale)
    rot = math.radians(draw(ranges.rotation_deg))
    dx = draw(ranges.translate_frac) * w
    dy = draw(ranges.translate_frac) * h
    shear = math.radians(draw(ranges.shear_deg))
    return AugmentParams(hue, sat, val, blur, scale, rot, (dx, dy), shear,
                         rng_seed if isinstance(rng_seed, int) else None)


# -- color -----------------------------------------------------------------

def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Hexcone model on floats in [0, 1]; hue in turns."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    v = maxc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1), 0.0)
    safe = np.where(delta > 0, delta, 1)
    rc, gc, bc = (maxc - r) / safe, (maxc - g) / safe, (maxc - b) / safe
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1 - s)
    q = v * (1 - s * f)
    t = v * (1 - s * (1 - f))
    i = i.astype(np.int64) % 6
    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    out = np.stack(
        [np.choose(i, choices_r), np.choose(i, choices_g), np.choose(i, choices_b)], axis=-1
    )
    return out


def _quantize(x: np.ndarray) -> np.ndarray:
    # round half up
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


def adjust_hsv(image: np.ndarray, hue_shift: float, sat_scale: float, val_scale: float) -> np.ndarray:
    hsv = rgb_to_hsv(image.astype(np.float64) / 255.0)
    hsv[..., 0] = (hsv[..., 0] + hue_shift) % 1.0
    hsv[..., 1] = np.clip(hsv[..., 1] * sat_scale, 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * val_scale, 0.0, 1.0)
    return _quantize(hsv_to_rgb(hsv) * 255.0)


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    if sigma == 0:
        return image.copy()
    from scipy.ndimage import gaussian_filter  # deferred: slow import, only blur needs it

    out = gaussian_filter(image.astype(np.float64), sigma=(sigma, sigma, 0), mode="nearest")
    return _quantize(out)


# -- geometry --------------------------------------------------------------

def affine_matrix(p: AugmentParams, size: tuple[int, int]) -> np.ndarray:
    """3x3 forward map on (x, y) continuous coordinates, about the image center."""
    h, w = size
    cx, cy = w / 2.0, h / 2.0
    to_origin = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1]], dtype=np.float64)
    scale = np.diag([p.scale, p.scale, 1.0])
    shear = np.array([[1, math.tan(p.shear), 0], [0, 1, 0], [0, 0, 1]], dtype=np.float64)
    c, s = math.cos(p.rotation), math.sin(p.rotation)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)
    dx, dy = p.translation
    back = np.array([[1, 0, cx + dx], [0, 1, cy + dy], [0, 0, 1]], dtype=np.float64)
    return back @ rot @ shear @ scale @ to_origin


def _source_coords(p: AugmentParams, size: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Source (x, y) of every output pixel center."""
    h, w = size
    fwd = affine_matrix(p, size)
    det = float(np.linalg.det(fwd[:2, :2]))
    if abs(det) < DET_TOL:
        raise ValidationError(f"affine map is not invertible (det={det:.3g})")
    if p.is_affine_identity:
        inv = np.eye(3)
    elif p.scale == 1 and p.rotation == 0 and p.shear == 0:
        dx, dy = p.translation
        inv = np.array([[1, 0, -dx], [0, 1, -dy], [0, 0, 1]], dtype=np.float64)
    else:
        inv = np.linalg.inv(fwd)
    xs = np.arange(w, dtype=np.float64) + 0.5
    ys = np.arange(h, dtype=np.float64) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    sx = inv[0, 0] * gx + inv[0, 1] * gy + inv[0, 2]
    sy = inv[1, 0] * gx + inv[1, 1] * gy + inv[1, 2]
    return sx, sy


def nearest_index_map(p: AugmentParams, size: tuple[int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rows, cols, valid) of the source pixel containing each output pixel's source point."""
    h, w = size
    sx, sy = _source_coords(p, size)
    cols = np.floor(sx).astype(np.int64)
    rows = np.floor(sy).astype(np.int64)
    valid = (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)
    return np.where(valid, rows, 0), np.where(valid, cols, 0), valid


def warp_nearest(field: np.ndarray, index_map, fill=0) -> np.ndarray:
    rows, cols, valid = index_map
    out = field[rows, cols]
    out[~valid] = fill
    return out


def warp_bilinear(image: np.ndarray, p: AugmentParams) -> np.ndarray:
    """Bilinear resampling of an H x W x C uint8 image; outside samples read black."""
    h, w = image.shape[:2]
    sx, sy = _source_coords(p, (h, w))
    fx, fy = sx - 0.5, sy - 0.5
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    ax = (fx - x0)[..., None]
    ay = (fy - y0)[..., None]
    src = image.astype(np.float64)

    def tap(r, c):
        ok = (r >= 0) & (r < h) & (c >= 0) & (c < w)
        vals = src[np.clip(r, 0, h - 1), np.clip(c, 0, w - 1)]
        vals[~ok] = 0.0
        return vals

    top = tap(y0, x0) * (1 - ax) + tap(y0, x0 + 1) * ax
    bot = tap(y0 + 1, x0) * (1 - ax) + tap(y0 + 1, x0 + 1) * ax
    return _quantize(top * (1 - ay) + bot * ay)


def warp_mask(mask: BinaryMask, index_map) -> BinaryMask:
    return rle_encode(warp_nearest(np.asarray(mask.dense), index_map, fill=False))


# -- samples ---------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    image: np.ndarray
    labels: FrameLabels

    def __post_init__(self):
        img = np.asarray(self.image)
        if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
            raise DimensionError(f"image must be H x W x 3 uint8, got {img.shape} {img.dtype}")
        if img.shape[:2] != (self.labels.height, self.labels.width):
            raise DimensionError(
                f"image {img.shape[:2]} and labels {(self.labels.height, self.labels.width)} differ"
            )


def _warp_labels(labels: FrameLabels, index_map) -> FrameLabels:
    n_class = len(labels.semantic_occluded) + 1
    out = []
    for inst in labels.instances:
        # one 0/1/2 field per instance, gathered once, then split
        field = inst.visible.dense.astype(np.int8) + 2 * inst.occluded.dense.astype(np.int8)
        warped = warp_nearest(field, index_map, fill=0)
        vis, occ = warped == 1, warped == 2
        out.append(
            InstanceLabel(inst.instance_id, inst.class_id, rle_encode(vis | occ),
                          rle_encode(vis), rle_encode(occ))
        )
    sem_vis, sem_occ = instance_to_semantic(out, n_class, labels.height, labels.width)
    return FrameLabels(labels.frame, tuple(out), sem_vis, sem_occ)


def augment_sample(s: Sample, p: AugmentParams) -> Sample:
    image = s.image
    if not p.is_color_identity:
        image = adjust_hsv(image, p.hue_shift, p.saturation_scale, p.value_scale)
    if p.blur_sigma > 0:
        image = gaussian_blur(image, p.blur_sigma)
    size = image.shape[:2]
    if p.is_affine_identity:
        return Sample(image.copy(), s.labels)
    index_map = nearest_index_map(p, size)
    return Sample(warp_bilinear(image, p), _warp_labels(s.labels, index_map))

