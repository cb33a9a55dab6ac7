"""Occlusion graph over segmented instances, and pick orders derived from it.

Edge ``j -> i`` means instance j lies on top of instance i: a large enough
share of i's occluded region is covered by j's visible region.
"""

from __future__ import annotations

import heapq
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dataset_gen import frame_labels
from .exceptions import DegeneratePolygonWarning, ValidationError
from .mask_core import BinaryMask, rasterize, safe_point

DEFAULT_EDGE_THRESHOLD = 0.1
DEFAULT_VISIBLE_EPS = 0.02

MOVE_TO_OBSTACLE_BIN = "move_to_obstacle_bin"
MOVE_TO_TARGET_BOX = "move_to_target_box"


@dataclass(frozen=True)
class Node:
    instance_id: int
    class_id: int
    visible: BinaryMask = field(repr=False)
    occluded: BinaryMask = field(repr=False)
    occluded_ratio: float

    @property
    def visible_area(self) -> int:
        return self.visible.area


@dataclass(frozen=True)
class OcclusionGraph:
    nodes: dict[int, Node]
    edges: dict[tuple[int, int], float]  # (occluder, occludee) -> weight

    def occluders(self, i: int) -> list[int]:
        return sorted(j for (j, k) in self.edges if k == i)

    def occludees(self, j: int) -> list[int]:
        return sorted(k for (i, k) in self.edges if i == j)

    def in_degree(self, i: int) -> int:
        return sum(1 for (_, k) in self.edges if k == i)

    def ancestors(self, i: int) -> set[int]:
        seen: set[int] = set()
        stack = [i]
        while stack:
            for j in self.occluders(stack.pop()):
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        seen.discard(i)
        return seen

    def without(self, removed: Iterable[int]) -> "OcclusionGraph":
        gone = set(removed)
        return OcclusionGraph(
            {k: v for k, v in self.nodes.items() if k not in gone},
            {e: w for e, w in self.edges.items() if e[0] not in gone and e[1] not in gone},
        )

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": n.instance_id, "class_id": n.class_id, "occluded_ratio": n.occluded_ratio,
                 "visible_area": n.visible_area}
                for n in sorted(self.nodes.values(), key=lambda n: n.instance_id)
            ],
            "edges": [{"occluder": j, "occludee": i, "weight": w} for (j, i), w in sorted(self.edges.items())],
        }


def build_graph(instances: Sequence, edge_threshold: float = DEFAULT_EDGE_THRESHOLD) -> OcclusionGraph:
    """Instances need ``instance_id``, ``class_id``, ``visible`` and ``occluded`` masks."""
    nodes: dict[int, Node] = {}
    vis_union = None
    for inst in instances:
        iid = inst.instance_id
        if iid in nodes:
            raise ValidationError(f"duplicate instance id {iid}")
        vis, occ = inst.visible.dense, inst.occluded.dense
        if (vis & occ).any():
            raise ValidationError(f"instance {iid}: visible and occluded overlap")
        if vis_union is None:
            vis_union = np.zeros_like(vis)
        if (vis_union & vis).any():
            raise ValidationError(f"instance {iid}: visible mask overlaps another instance")
        vis_union |= vis
        whole = inst.visible.area + inst.occluded.area
        if whole == 0:
            raise ValidationError(f"instance {iid} has an empty mask")
        nodes[iid] = Node(iid, inst.class_id, inst.visible, inst.occluded, inst.occluded.area / whole)
    edges: dict[tuple[int, int], float] = {}
    for i, ni in nodes.items():
        occ_area = ni.occluded.area
        if occ_area == 0:
            continue
        occ = ni.occluded.dense
        for j, nj in nodes.items():
            if j == i:
                continue
            w = np.count_nonzero(occ & nj.visible.dense) / occ_area
            if w > 0 and w >= edge_threshold:
                edges[(j, i)] = w
    return OcclusionGraph(nodes, edges)


@dataclass(frozen=True)
class RandomPick:
    instance_id: int
    suction_point: tuple[int, int] | None
    degraded: bool


def next_random_pick(g: OcclusionGraph, fully_visible_eps: float = DEFAULT_VISIBLE_EPS) -> RandomPick:
    """Largest fully visible instance; otherwise the least occluded one, flagged degraded.

    Only instances without incoming edges are considered while any exist.
    """
    if not g.nodes:
        raise ValidationError("cannot pick from an empty graph")
    free = [n for n in g.nodes.values() if g.in_degree(n.instance_id) == 0]
    pool = free or list(g.nodes.values())
    cands = [n for n in pool if n.occluded_ratio <= fully_visible_eps and n.visible_area > 0]
    if cands:
        best = min(cands, key=lambda n: (-n.visible_area, n.instance_id))
        degraded = False
    else:
        best = min(pool, key=lambda n: (n.occluded_ratio, n.instance_id))
        degraded = True
    point = safe_point(best.visible) if best.visible_area else None
    return RandomPick(best.instance_id, point, degraded)


@dataclass(frozen=True)
class PickStep:
    instance_id: int
    action: str
    suction_point: tuple[int, int] | None


@dataclass(frozen=True)
class PickPlan:
    steps: tuple[PickStep, ...]
    warnings: tuple[str, ...] = ()

    @property
    def order(self) -> list[int]:
        return [s.instance_id for s in self.steps]

    def to_dict(self) -> dict:
        return {
            "steps": [
                {
                    "id": s.instance_id,
                    "action": s.action,
                    "suction_point": None if s.suction_point is None else list(s.suction_point),
                }
                for s in self.steps
            ],
            "warnings": list(self.warnings),
        }


def _on_cycle(node: int, remaining: set[int], g: OcclusionGraph) -> bool:
    stack, seen = [node], set()
    while stack:
        for k in g.occludees(stack.pop()):
            if k == node:
                return True
            if k in remaining and k not in seen:
                seen.add(k)
                stack.append(k)
    return False


def _step(g: OcclusionGraph, iid: int, action: str) -> PickStep:
    n = g.nodes[iid]
    return PickStep(iid, action, safe_point(n.visible) if n.visible_area else None)


def plan_target_pick(g: OcclusionGraph, target_id: int) -> PickPlan:
    """Remove every transitive occluder of the target, sources first, then the target."""
    if target_id not in g.nodes:
        raise ValidationError(f"unknown target {target_id}")
    obstacles = g.ancestors(target_id)
    remaining = set(obstacles)
    indeg = {k: sum(1 for j in g.occluders(k) if j in remaining) for k in remaining}
    ready = [k for k, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order: list[int] = []
    warnings: list[str] = []

    def take(k):
        remaining.discard(k)
        order.append(k)
        for m in g.occludees(k):
            if m in remaining:
                indeg[m] -= 1
                if indeg[m] == 0:
                    heapq.heappush(ready, m)

    while remaining:
        if ready:
            k = heapq.heappop(ready)
            if k in remaining:
                take(k)
            continue
        # stalled: every remaining obstacle waits on another, so a cycle exists
        cyc = [k for k in remaining if _on_cycle(k, remaining, g)]
        pool = cyc or sorted(remaining)
        k = min(pool, key=lambda k: (g.nodes[k].occluded_ratio, k))
        warnings.append(f"occlusion cycle broken by removing instance {k} first")
        take(k)
    if any(target_id in g.occluders(k) for k in obstacles):
        warnings.append(f"target {target_id} lies on an occlusion cycle with its obstacles")
    steps = [_step(g, k, MOVE_TO_OBSTACLE_BIN) for k in order]
    steps.append(_step(g, target_id, MOVE_TO_TARGET_BOX))
    return PickPlan(tuple(steps), tuple(warnings))


def random_pick_plan(g: OcclusionGraph, fully_visible_eps: float = DEFAULT_VISIBLE_EPS) -> PickPlan:
    pick = next_random_pick(g, fully_visible_eps)
    warnings = ()
    if pick.degraded:
        warnings = (f"no fully visible instance; picking least occluded instance {pick.instance_id}",)
    return PickPlan((PickStep(pick.instance_id, MOVE_TO_TARGET_BOX, pick.suction_point),), warnings)


def ordering_violations(g: OcclusionGraph, plan: PickPlan) -> list[tuple[int, int]]:
    """(instance, occluder) pairs where the instance is scheduled before a scheduled occluder."""
    pos = {k: n for n, k in enumerate(plan.order)}
    return [(i, j) for (j, i) in g.edges if i in pos and j in pos and pos[j] > pos[i]]


@dataclass(frozen=True)
class ReplayStep:
    instance_id: int
    degraded: bool
    had_occluder: bool


def replay_random_picking(
    video,
    height: int,
    width: int,
    fully_visible_eps: float = DEFAULT_VISIBLE_EPS,
    edge_threshold: float = DEFAULT_EDGE_THRESHOLD,
) -> list[ReplayStep]:
    """Empty a simulated bin one pick at a time, replanning after every removal.

    Labels for each state are regenerated from the video's true stacking order.
    Instances that rasterize to nothing are left out.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegeneratePolygonWarning)
        wholes = {
            r.instance_id: (r.class_id, rasterize(r.polygon, height, width), r.pick_frame)
            for r in video.instances
        }
    wholes = {k: v for k, v in wholes.items() if v[1].area}
    n_class = max((v[0] for v in wholes.values()), default=0) + 1
    steps: list[ReplayStep] = []
    while wholes:
        if len(steps) > len(video.instances):
            raise RuntimeError("replay did not terminate")
        labels = frame_labels(0, wholes, n_class, height, width)
        g = build_graph(labels.instances, edge_threshold)
        pick = next_random_pick(g, fully_visible_eps)
        steps.append(ReplayStep(pick.instance_id, pick.degraded, g.in_degree(pick.instance_id) > 0))
        del wholes[pick.instance_id]
    return steps
