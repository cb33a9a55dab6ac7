"""Loss kernels with analytic gradients and the lambda-weighted joint total.

Every kernel returns ``(loss, grad)`` where ``grad`` has the shape of the
scores. Inputs are widened to float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .exceptions import DimensionError

DEFAULT_LAMBDA = 0.25

INSTANCE_COMPONENTS = ("l_rpn_box", "l_rpn_cls", "l_ins_box", "l_ins_cls", "l_ins_mask")
SEMANTIC_COMPONENTS = ("l_sem_vis", "l_sem_occ")


def _as_scores(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return s


def log_softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    m = scores.max(axis=axis, keepdims=True)
    z = scores - m
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def softmax_ce(scores, targets, ignore=None) -> tuple[float, np.ndarray]:
    """Mean softmax cross entropy over the non-ignored positions.

    ``scores`` has the class axis last (``(H, W, C)`` for dense maps, ``(N, C)``
    for per-ROI logits); ``targets`` holds integer labels over the leading axes.
    """
    s = _as_scores(scores)
    t = np.asarray(targets)
    if s.ndim < 2 or s.shape[-1] < 2:
        raise DimensionError(f"scores need a class axis with C >= 2, got shape {s.shape}")
    if t.shape != s.shape[:-1]:
        raise DimensionError(f"targets shape {t.shape} does not match scores {s.shape[:-1]}")
    if not np.issubdtype(t.dtype, np.integer):
        if not np.all(t == np.round(t)):
            raise ValueError("targets must be integer labels")
        t = t.astype(np.int64)
    keep = np.ones(t.shape, dtype=bool) if ignore is None else ~np.asarray(ignore, dtype=bool)
    if keep.shape != t.shape:
        raise DimensionError(f"ignore mask shape {keep.shape} does not match targets {t.shape}")
    n = int(keep.sum())
    if n == 0:
        raise ValueError("no non-ignored positions to average over")
    c = s.shape[-1]
    tk = t[keep]
    if tk.min() < 0 or tk.max() >= c:
        raise ValueError(f"target labels must lie in [0, {c})")
    logp = log_softmax(s)
    t_safe = np.where(keep, t, 0)
    picked = np.take_along_axis(logp, t_safe[..., None], axis=-1)[..., 0]
    loss = float(-np.sum(picked[keep]) / n)
    idx = t_safe[..., None]
    grad = np.exp(logp)
    np.put_along_axis(grad, idx, np.take_along_axis(grad, idx, -1) - 1.0, -1)
    grad *= keep[..., None] / n
    return loss, grad


def classification_ce(scores, labels) -> tuple[float, np.ndarray]:
    """Per-ROI softmax cross entropy: ``scores`` is ``(N, C)``, ``labels`` is ``(N,)``."""
    s = np.asarray(scores)
    if s.ndim != 2:
        raise DimensionError(f"expected (N, C) logits, got shape {s.shape}")
    return softmax_ce(s, labels)


def sigmoid_ce(scores, targets) -> tuple[float, np.ndarray]:
    """Mean per-element sigmoid cross entropy; channels are independent."""
    s = _as_scores(scores)
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != s.shape:
        raise DimensionError(f"targets shape {t.shape} does not match scores {s.shape}")
    if s.size == 0:
        raise DimensionError("empty score tensor")
    n = s.size
    elem = np.maximum(s, 0) - s * t + np.log1p(np.exp(-np.abs(s)))
    loss = float(elem.sum() / n)
    sig = np.exp(-np.logaddexp(0.0, -s))
    return loss, (sig - t) / n


def smooth_l1(pred_deltas, target_deltas) -> tuple[float, np.ndarray]:
    """Huber loss with unit transition, averaged over elements."""
    p = _as_scores(pred_deltas)
    q = np.asarray(target_deltas, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError(f"pred shape {p.shape} != target shape {q.shape}")
    if p.size == 0:
        raise DimensionError("empty delta vectors")
    x = p - q
    ax = np.abs(x)
    small = ax < 1.0
    elem = np.where(small, 0.5 * x * x, ax - 0.5)
    grad = np.where(small, x, np.sign(x)) / p.size
    return float(elem.sum() / p.size), grad


@dataclass(frozen=True)
class LossBreakdown:
    l_rpn_box: float
    l_rpn_cls: float
    l_ins_box: float
    l_ins_cls: float
    l_ins_mask: float
    l_sem_vis: float
    l_sem_occ: float
    lam: float
    l_ins: float
    l_sem: float
    total: float

    def to_dict(self) -> dict:
        d = {name: getattr(self, name) for name in INSTANCE_COMPONENTS + SEMANTIC_COMPONENTS}
        d.update({"lambda": self.lam, "l_ins": self.l_ins, "l_sem": self.l_sem, "total": self.total})
        return d


def aggregate(components: Mapping[str, float], lam: float = DEFAULT_LAMBDA) -> LossBreakdown:
    """``total = l_ins + lam * l_sem``; the mask loss is counted in ``l_ins``.

    Missing components count as zero.
    """
    unknown = set(components) - set(INSTANCE_COMPONENTS + SEMANTIC_COMPONENTS)
    if unknown:
        raise KeyError(f"unknown loss components: {sorted(unknown)}")
    if not (math.isfinite(lam) and lam >= 0):
        raise ValueError(f"lambda must be finite and non-negative, got {lam}")
    vals = {}
    for name in INSTANCE_COMPONENTS + SEMANTIC_COMPONENTS:
        v = float(components.get(name, 0.0))
        if not math.isfinite(v):
            raise ValueError(f"component {name} is not finite: {v}")
        vals[name] = v
    l_ins = sum(vals[k] for k in INSTANCE_COMPONENTS)
    l_sem = vals["l_sem_vis"] + vals["l_sem_occ"]
    return LossBreakdown(**vals, lam=float(lam), l_ins=l_ins, l_sem=l_sem, total=l_ins + lam * l_sem)


def gradient_weight(component: str, lam: float = DEFAULT_LAMBDA) -> float:
    if component in INSTANCE_COMPONENTS:
        return 1.0
    if component in SEMANTIC_COMPONENTS:
        return float(lam)
    raise KeyError(component)


def aggregate_gradients(grads: Mapping[str, np.ndarray], lam: float = DEFAULT_LAMBDA) -> dict:
    """Scale each component's gradient by its weight in the joint total."""
    return {name: gradient_weight(name, lam) * np.asarray(g, dtype=np.float64) for name, g in grads.items()}
