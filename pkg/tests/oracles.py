"""Independent reference implementations used as test oracles."""

import itertools
import math

import numpy as np


def point_in_polygon(px, py, verts):
    # ray cast to +x; edges own their upper endpoint
    inside = False
    n = len(verts)
    for k in range(n):
        (x0, y0), (x1, y1) = verts[k], verts[(k + 1) % n]
        if (y0 <= py < y1) or (y1 <= py < y0):
            xc = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
            if xc > px:
                inside = not inside
    return inside


def brute_raster(verts, h, w):
    return np.array(
        [[point_in_polygon(c + 0.5, r + 0.5, verts) for c in range(w)] for r in range(h)], dtype=bool
    )


def dense_iou(a, b):
    inter = int(np.logical_and(a, b).sum())
    uni = int(np.logical_or(a, b).sum())
    return inter / uni if uni else 0.0


def brute_force_pq(preds, gts):
    """Best PQ over every one-to-one matching of pairs with IoU > 0.5.

    ``preds``/``gts`` are lists of boolean arrays for one class.
    Returns None when both are empty.
    """
    if not preds and not gts:
        return None
    ious = {(p, g): dense_iou(preds[p], gts[g]) for p in range(len(preds)) for g in range(len(gts))}
    pairs = [k for k, v in ious.items() if v > 0.5]
    best = 0.0
    for r in range(len(pairs) + 1):
        for combo in itertools.combinations(pairs, r):
            ps = [p for p, _ in combo]
            gs = [g for _, g in combo]
            if len(set(ps)) < r or len(set(gs)) < r:
                continue
            tp = r
            denom = tp + 0.5 * (len(preds) - tp) + 0.5 * (len(gts) - tp)
            best = max(best, math.fsum(ious[k] for k in combo) / denom)
    return best


def brute_force_mpq(pred_items, gt_items):
    """``*_items`` are lists of (class_id, visible bool array)."""
    classes = sorted({c for c, _ in pred_items} | {c for c, _ in gt_items})
    vals = []
    for c in classes:
        v = brute_force_pq([m for k, m in pred_items if k == c], [m for k, m in gt_items if k == c])
        if v is not None:
            vals.append(v)
    return math.fsum(vals) / len(vals)
