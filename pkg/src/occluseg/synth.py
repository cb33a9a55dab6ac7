"""Random synthetic videos and rectangle scenes for property tests and scripts."""

from __future__ import annotations

import numpy as np

from .dataset_gen import InstanceRecord, VideoAnnotation
from .mask_core import Polygon, rle_encode
from .pq_eval import InstancePrediction


def random_polygon(rng: np.random.Generator, height: int, width: int) -> Polygon:
    """Axis-aligned rectangle or convex-ish quad/triangle inside the canvas."""
    kind = rng.integers(3)
    x0, x1 = sorted(rng.uniform(0, width, 2))
    y0, y1 = sorted(rng.uniform(0, height, 2))
    x1, y1 = max(x1, x0 + 1.5), max(y1, y0 + 1.5)
    if kind == 0:
        return Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    if kind == 1:
        return Polygon([(x0, y1), ((x0 + x1) / 2, y0), (x1, y1)])
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    return Polygon([(cx, y0), (x1, cy), (cx, y1), (x0, cy)])


def random_video(
    rng: np.random.Generator,
    height: int = 16,
    width: int = 16,
    max_instances: int = 4,
    n_classes: int = 3,
    extra_frames: int = 2,
) -> VideoAnnotation:
    n = int(rng.integers(1, max_instances + 1))
    frame_count = n + int(rng.integers(0, extra_frames + 1))
    picks = rng.choice(frame_count, size=n, replace=False)
    ids = rng.permutation(np.arange(1, n + 1) * 10)
    records = [
        InstanceRecord(int(ids[k]), int(rng.integers(1, n_classes + 1)),
                       random_polygon(rng, height, width), int(picks[k]))
        for k in range(n)
    ]
    return VideoAnnotation(frame_count, tuple(records))


def paint(rects, h, w):
    """Visible/occluded arrays for rectangles listed bottom to top."""
    top = np.zeros((h, w), dtype=np.int64)
    wholes = []
    for k, (r0, r1, c0, c1) in enumerate(rects):
        m = np.zeros((h, w), dtype=bool)
        m[r0:r1, c0:c1] = True
        wholes.append(m)
        top[m] = k + 1
    return [(top == k + 1, wholes[k] & (top != k + 1)) for k in range(len(rects))]


def random_rect(rng, h, w):
    r0, c0 = rng.integers(0, h - 1), rng.integers(0, w - 1)
    return (int(r0), int(rng.integers(r0 + 1, h + 1)), int(c0), int(rng.integers(c0 + 1, w + 1)))


def jitter(rng, rect, h, w):
    r0, r1, c0, c1 = (int(v + rng.integers(-1, 2)) for v in rect)
    r0, c0 = max(0, min(r0, h - 1)), max(0, min(c0, w - 1))
    return (r0, max(r0 + 1, min(r1, h)), c0, max(c0 + 1, min(c1, w)))


def random_scene(rng, h=16, w=16, max_instances=4, n_classes=2):
    """Ground truth and perturbed predictions; visible masks are disjoint on each side."""
    n_gt = int(rng.integers(0, max_instances + 1))
    gt_rects = [random_rect(rng, h, w) for _ in range(n_gt)]
    gt_cls = [int(rng.integers(1, n_classes + 1)) for _ in range(n_gt)]
    pred_rects, pred_cls = [], []
    for rect, c in zip(gt_rects, gt_cls):
        if rng.random() < 0.8:
            pred_rects.append(jitter(rng, rect, h, w))
            pred_cls.append(c if rng.random() < 0.85 else int(rng.integers(1, n_classes + 1)))
    while len(pred_rects) < max_instances and rng.random() < 0.3:
        pred_rects.append(random_rect(rng, h, w))
        pred_cls.append(int(rng.integers(1, n_classes + 1)))
    order = rng.permutation(len(pred_rects))
    pred_rects = [pred_rects[k] for k in order]
    pred_cls = [pred_cls[k] for k in order]

    def build(rects, classes, scored):
        out = []
        for k, ((vis, occ), c) in enumerate(zip(paint(rects, h, w), classes)):
            conf = float(rng.uniform(0.05, 1.0)) if scored else 1.0
            out.append(InstancePrediction(c, rle_encode(vis), rle_encode(occ), conf, k))
        return out

    return build(pred_rects, pred_cls, True), build(gt_rects, gt_cls, False)
