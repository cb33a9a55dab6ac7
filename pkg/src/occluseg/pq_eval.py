"""Panoptic quality per class and its class mean (mPQ) for occlusion-aware instances.

Predictions and ground truths are matched within a class when their IoU on the
chosen region exceeds 0.5. ``"union"`` compares whole regions
(visible | occluded); ``"visible"`` compares visible masks only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .exceptions import ValidationError
from .mask_core import BinaryMask

MATCH_THRESHOLD = 0.5
MATCHING_MODES = ("union", "visible")


@dataclass(frozen=True)
class InstancePrediction:
    class_id: int
    visible: BinaryMask
    occluded: BinaryMask
    confidence: float = 1.0
    instance_id: int = 0

    def __post_init__(self):
        if self.visible.shape != self.occluded.shape:
            raise ValidationError("visible and occluded masks differ in size")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")
        if (self.visible.dense & self.occluded.dense).any():
            raise ValidationError(f"instance {self.instance_id}: visible and occluded overlap")

    def region(self, mode: str) -> np.ndarray:
        if mode == "visible":
            return self.visible.dense
        if mode == "union":
            return self.visible.dense | self.occluded.dense
        raise ValueError(f"unknown matching mode {mode!r}")


@dataclass(frozen=True)
class Matching:
    class_id: int
    tp: tuple[tuple[int, int, float], ...]  # (pred index, gt index, iou)
    fp: tuple[int, ...]
    fn: tuple[int, ...]


def _region_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.count_nonzero(a & b)
    uni = np.count_nonzero(a | b)
    # two empty regions never match
    return inter / uni if uni else 0.0


def _check_gt_overlap(gts: Sequence[InstancePrediction]) -> None:
    for i in range(len(gts)):
        for j in range(i + 1, len(gts)):
            if _region_iou(gts[i].visible.dense, gts[j].visible.dense) > MATCH_THRESHOLD:
                raise ValidationError(
                    f"ground truths {gts[i].instance_id} and {gts[j].instance_id} "
                    "overlap above the match threshold in the visible channel"
                )


def match_instances(
    preds: Sequence[InstancePrediction],
    gts: Sequence[InstancePrediction],
    class_id: int,
    mode: str = "union",
) -> Matching:
    """Greedy one-to-one matching by descending IoU, then confidence, then ids."""
    if mode not in MATCHING_MODES:
        raise ValueError(f"unknown matching mode {mode!r}")
    p_idx = [k for k, p in enumerate(preds) if p.class_id == class_id]
    g_idx = [k for k, g in enumerate(gts) if g.class_id == class_id]
    _check_gt_overlap([gts[k] for k in g_idx])
    g_regions = {k: gts[k].region(mode) for k in g_idx}
    cands = []
    for pk in p_idx:
        pr = preds[pk].region(mode)
        for gk in g_idx:
            v = _region_iou(pr, g_regions[gk])
            if v > MATCH_THRESHOLD:
                cands.append((-v, -preds[pk].confidence, preds[pk].instance_id, pk,
                              gts[gk].instance_id, gk, v))
    cands.sort()
    used_p, used_g, tp = set(), set(), []
    for *_, pk, _gid, gk, v in cands:
        if pk in used_p or gk in used_g:
            continue
        used_p.add(pk)
        used_g.add(gk)
        tp.append((pk, gk, v))
    tp.sort()
    return Matching(
        class_id,
        tuple(tp),
        tuple(k for k in p_idx if k not in used_p),
        tuple(k for k in g_idx if k not in used_g),
    )


@dataclass(frozen=True)
class ClassScore:
    class_id: int
    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int
    iou_sum: float

    def to_dict(self) -> dict:
        return {"class_id": self.class_id, "pq": self.pq, "sq": self.sq, "rq": self.rq,
                "tp": self.tp, "fp": self.fp, "fn": self.fn}


def pq_from_counts(class_id: int, iou_sum: float, tp: int, fp: int, fn: int) -> ClassScore | None:
    """None when the class appears on neither side."""
    if tp + fp + fn == 0:
        return None
    denom = tp + 0.5 * fp + 0.5 * fn
    sq = iou_sum / tp if tp else 0.0
    return ClassScore(class_id, iou_sum / denom, sq, tp / denom, tp, fp, fn, iou_sum)


def pq_class(matching: Matching) -> ClassScore | None:
    iou_sum = math.fsum(v for _, _, v in matching.tp)
    return pq_from_counts(matching.class_id, iou_sum, len(matching.tp), len(matching.fp), len(matching.fn))


@dataclass(frozen=True)
class PqReport:
    matching: str
    mpq: float
    classes: tuple[ClassScore, ...]
    names: Mapping[int, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        rows = []
        for c in self.classes:
            row = c.to_dict()
            if c.class_id in self.names:
                row["class"] = self.names[c.class_id]
            rows.append(row)
        return {"matching": self.matching, "mpq": self.mpq, "classes": rows}

    def table(self) -> str:
        head = f"{'class':<24} {'PQ':>7} {'SQ':>7} {'RQ':>7} {'TP':>4} {'FP':>4} {'FN':>4}"
        lines = [f"matching: {self.matching}", head, "-" * len(head)]
        for c in self.classes:
            name = self.names.get(c.class_id, str(c.class_id))
            lines.append(
                f"{name:<24} {100 * c.pq:7.1f} {100 * c.sq:7.1f} {100 * c.rq:7.1f} "
                f"{c.tp:4d} {c.fp:4d} {c.fn:4d}"
            )
        lines.append("-" * len(head))
        lines.append(f"{'mPQ':<24} {100 * self.mpq:7.1f}")
        return "\n".join(lines)


def _per_image(x) -> dict:
    if isinstance(x, Mapping):
        return dict(x)
    return {0: list(x)}


def mpq(preds, gts, catalog=None, mode: str = "union") -> PqReport:
    """Mean PQ over classes present in predictions or ground truth.

    ``preds``/``gts`` are lists of instances for one image, or mappings from
    image id to such lists. Counts and IoU sums accumulate over images before
    PQ is formed. ``catalog`` (a ClassCatalog) restricts and names classes.
    """
    p_img, g_img = _per_image(preds), _per_image(gts)
    missing = set(p_img) - set(g_img)
    if missing:
        raise ValidationError(f"predictions for unknown images: {sorted(missing, key=str)}")
    class_ids = sorted(
        {p.class_id for ps in p_img.values() for p in ps} | {g.class_id for gs in g_img.values() for g in gs}
    )
    names = {}
    if catalog is not None:
        bad = [c for c in class_ids if not 1 <= c < catalog.n_class]
        if bad:
            raise ValidationError(f"class ids {bad} not in catalog")
        names = {c: catalog.name(c) for c in class_ids}
    ious = {c: [] for c in class_ids}
    counts = {c: [0, 0, 0] for c in class_ids}
    for img in sorted(g_img, key=str):
        ps, gs = p_img.get(img, []), g_img[img]
        for c in class_ids:
            m = match_instances(ps, gs, c, mode)
            ious[c].extend(v for _, _, v in m.tp)
            counts[c][0] += len(m.tp)
            counts[c][1] += len(m.fp)
            counts[c][2] += len(m.fn)
    scores = tuple(
        s for c in class_ids
        if (s := pq_from_counts(c, math.fsum(ious[c]), *counts[c])) is not None
    )
    if not scores:
        raise ValidationError("nothing to evaluate: no class appears in predictions or ground truth")
    return PqReport(mode, math.fsum(s.pq for s in scores) / len(scores), scores, names)
