"""Per-frame visible/occluded labels from one-polygon-per-instance picking videos.

A fixed camera watches objects being removed one at a time. Each instance
carries a single polygon, drawn at the frame where it is picked (when it is
fully visible), and the index of that frame. An object picked earlier sat on
top of everything picked later, so in any frame an instance is occluded by
every still-present instance with an earlier pick frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from .exceptions import SchemaError, ValidationError
from .mask_core import BinaryMask, Polygon, rasterize, rle_encode

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ClassCatalog:
    """Foreground class names; index 0 is the implicit background."""

    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        if not names:
            raise ValidationError("class catalog is empty")
        if any(not isinstance(n, str) or not n for n in names):
            raise ValidationError("class names must be non-empty strings")
        if len(set(names)) != len(names):
            raise ValidationError("class names must be unique")
        object.__setattr__(self, "names", names)

    @property
    def n_class(self) -> int:
        return len(self.names) + 1

    def class_id(self, name: str) -> int:
        try:
            return self.names.index(name) + 1
        except ValueError:
            raise ValidationError(f"unknown class name {name!r}") from None

    def name(self, class_id: int) -> str:
        if not 1 <= class_id < self.n_class:
            raise ValidationError(f"class id {class_id} outside 1..{self.n_class - 1}")
        return self.names[class_id - 1]


@dataclass(frozen=True)
class InstanceRecord:
    instance_id: int
    class_id: int
    polygon: Polygon
    pick_frame: int


@dataclass(frozen=True)
class VideoAnnotation:
    frame_count: int
    instances: tuple[InstanceRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        if self.frame_count < 0:
            raise ValidationError("frame_count must be non-negative")
        ids = [inst.instance_id for inst in self.instances]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate instance ids in {ids}")
        for inst in self.instances:
            if not 0 <= inst.pick_frame < self.frame_count:
                raise ValidationError(
                    f"instance {inst.instance_id}: pick_frame {inst.pick_frame} "
                    f"outside [0, {self.frame_count})"
                )


@dataclass(frozen=True)
class InstanceLabel:
    instance_id: int
    class_id: int
    whole: BinaryMask
    visible: BinaryMask
    occluded: BinaryMask


@dataclass(frozen=True)
class FrameLabels:
    frame: int
    instances: tuple[InstanceLabel, ...]
    semantic_visible: np.ndarray = field(repr=False)
    semantic_occluded: tuple[BinaryMask, ...] = field(repr=False)

    @property
    def height(self) -> int:
        return self.semantic_visible.shape[0]

    @property
    def width(self) -> int:
        return self.semantic_visible.shape[1]

    def __eq__(self, other):
        if not isinstance(other, FrameLabels):
            return NotImplemented
        return (
            self.frame == other.frame
            and self.instances == other.instances
            and np.array_equal(self.semantic_visible, other.semantic_visible)
            and self.semantic_occluded == other.semantic_occluded
        )


@dataclass(frozen=True)
class Dataset:
    catalog: ClassCatalog
    height: int
    width: int
    videos: tuple[VideoAnnotation, ...]


def _check_pick_order(video: VideoAnnotation) -> None:
    seen: dict[int, int] = {}
    for inst in video.instances:
        if inst.pick_frame in seen:
            raise ValidationError(
                f"instances {seen[inst.pick_frame]} and {inst.instance_id} share "
                f"pick_frame {inst.pick_frame}; pick order must be total"
            )
        seen[inst.pick_frame] = inst.instance_id


def instance_to_semantic(
    instances: Sequence[InstanceLabel], n_class: int, height: int, width: int
) -> tuple[np.ndarray, tuple[BinaryMask, ...]]:
    """Class label image over visible regions and one occluded mask per foreground class.

    Occluded channels are unions per class and may overlap across classes.
    """
    label = np.zeros((height, width), dtype=np.int64)
    claimed = np.zeros((height, width), dtype=bool)
    occ = np.zeros((n_class - 1, height, width), dtype=bool)
    for inst in instances:
        if not 1 <= inst.class_id < n_class:
            raise ValidationError(f"instance {inst.instance_id}: class id {inst.class_id} out of range")
        vis = inst.visible.dense
        if (claimed & vis).any():
            raise ValidationError(
                f"visible mask of instance {inst.instance_id} overlaps another instance"
            )
        claimed |= vis
        label[vis] = inst.class_id
        occ[inst.class_id - 1] |= inst.occluded.dense
    label.setflags(write=False)
    return label, tuple(rle_encode(ch) for ch in occ)


def frame_labels(
    frame: int, wholes: dict[int, tuple[int, BinaryMask, int]], n_class: int, height: int, width: int
) -> FrameLabels:
    """Labels for one frame given ``{instance_id: (class_id, whole_mask, pick_frame)}``."""
    present = sorted(
        ((pick, iid) for iid, (_, _, pick) in wholes.items() if pick >= frame)
    )
    cover = np.zeros((height, width), dtype=bool)
    labels = []
    # walk top-down: everything already in `cover` lies above the current instance
    for _, iid in present:
        class_id, whole, _ = wholes[iid]
        w = whole.dense
        occ = w & cover
        labels.append(
            InstanceLabel(iid, class_id, whole, rle_encode(w & ~occ), rle_encode(occ))
        )
        cover |= w
    labels.sort(key=lambda lab: lab.instance_id)
    sem_vis, sem_occ = instance_to_semantic(labels, n_class, height, width)
    return FrameLabels(frame, tuple(labels), sem_vis, sem_occ)


def backproject(
    video: VideoAnnotation, height: int, width: int, n_class: int | None = None
) -> list[FrameLabels]:
    """Visible/occluded labels for every frame of ``video``.

    ``n_class`` (background included) sizes the semantic occluded channels; it
    defaults to one more than the largest class id in the video.
    """
    _check_pick_order(video)
    if n_class is None:
        n_class = max((inst.class_id for inst in video.instances), default=0) + 1
    wholes = {
        inst.instance_id: (inst.class_id, rasterize(inst.polygon, height, width), inst.pick_frame)
        for inst in video.instances
    }
    return [frame_labels(t, wholes, n_class, height, width) for t in range(video.frame_count)]


_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

DATASET_SCHEMA = {
    "type": "object",
    "required": ["classes", "height", "width", "videos"],
    "properties": {
        "format_version": {"type": "integer", "const": FORMAT_VERSION},
        "classes": {"type": "array", "items": {"type": "string", "minLength": 1}, "minItems": 1},
        "height": {"type": "integer", "minimum": 1},
        "width": {"type": "integer", "minimum": 1},
        "videos": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["frame_count", "instances"],
                "properties": {
                    "frame_count": {"type": "integer", "minimum": 0},
                    "instances": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["id", "class", "polygon", "pick_frame"],
                            "properties": {
                                "id": {"type": "integer"},
                                "class": {"type": "string"},
                                "polygon": {"type": "array", "items": _POINT, "minItems": 3},
                                "pick_frame": {"type": "integer", "minimum": 0},
                            },
                        },
                    },
                },
            },
        },
    },
}


def _json_path(path) -> str:
    out = "$"
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else f".{part}"
    return out


def dataset_from_json(doc, source: str | None = None) -> Dataset:
    errors = sorted(
        jsonschema.Draft7Validator(DATASET_SCHEMA).iter_errors(doc),
        key=lambda e: list(e.absolute_path),
    )
    if errors:
        err = errors[0]
        raise SchemaError(err.message, field=_json_path(err.absolute_path), source=source)
    catalog = ClassCatalog(tuple(doc["classes"]))
    videos = []
    for v, vid in enumerate(doc["videos"]):
        records = []
        for k, inst in enumerate(vid["instances"]):
            where = f"$.videos[{v}].instances[{k}]"
            try:
                records.append(
                    InstanceRecord(
                        inst["id"],
                        catalog.class_id(inst["class"]),
                        Polygon(tuple(tuple(p) for p in inst["polygon"])),
                        inst["pick_frame"],
                    )
                )
            except ValidationError as exc:
                raise ValidationError(f"{source + ': ' if source else ''}{where}: {exc}") from None
        try:
            videos.append(VideoAnnotation(vid["frame_count"], tuple(records)))
        except ValidationError as exc:
            raise ValidationError(f"{source + ': ' if source else ''}$.videos[{v}]: {exc}") from None
    return Dataset(catalog, doc["height"], doc["width"], tuple(videos))


def dataset_to_json(ds: Dataset) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "classes": list(ds.catalog.names),
        "height": ds.height,
        "width": ds.width,
        "videos": [
            {
                "frame_count": v.frame_count,
                "instances": [
                    {
                        "id": inst.instance_id,
                        "class": ds.catalog.name(inst.class_id),
                        "polygon": inst.polygon.to_json(),
                        "pick_frame": inst.pick_frame,
                    }
                    for inst in v.instances
                ],
            }
            for v in ds.videos
        ],
    }


def load_dataset(path) -> Dataset:
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", source=f"{path}:{exc.lineno}") from None
    return dataset_from_json(doc, source=str(path))


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(json.dumps(dataset_to_json(ds), indent=1) + "\n")


def frame_labels_to_json(labels: FrameLabels, catalog: ClassCatalog, **extra) -> dict:
    sem_vis = {
        str(c): rle_encode(labels.semantic_visible == c).to_json()
        for c in np.unique(labels.semantic_visible).tolist()
        if c != 0
    }
    return {
        "format_version": FORMAT_VERSION,
        **extra,
        "frame": labels.frame,
        "height": labels.height,
        "width": labels.width,
        "classes": list(catalog.names),
        "instances": [
            {
                "id": inst.instance_id,
                "class": catalog.name(inst.class_id),
                "whole": inst.whole.to_json(),
                "visible": inst.visible.to_json(),
                "occluded": inst.occluded.to_json(),
            }
            for inst in labels.instances
        ],
        "semantic_visible": sem_vis,
        "semantic_occluded": [m.to_json() for m in labels.semantic_occluded],
    }


def frame_labels_from_json(doc, source: str | None = None) -> tuple[FrameLabels, ClassCatalog]:
    try:
        catalog = ClassCatalog(tuple(doc["classes"]))
        h, w = doc["height"], doc["width"]
        instances = []
        for k, inst in enumerate(doc["instances"]):
            where = f"$.instances[{k}]"
            visible = BinaryMask.from_json(inst["visible"], f"{where}.visible")
            occluded = BinaryMask.from_json(inst["occluded"], f"{where}.occluded")
            whole = (
                BinaryMask.from_json(inst["whole"], f"{where}.whole")
                if "whole" in inst
                else rle_encode(visible.dense | occluded.dense)
            )
            instances.append(
                InstanceLabel(inst["id"], catalog.class_id(inst["class"]), whole, visible, occluded)
            )
    except KeyError as exc:
        raise SchemaError(f"missing field {exc.args[0]!r}", source=source) from None
    for inst in instances:
        for m in (inst.whole, inst.visible, inst.occluded):
            if m.shape != (h, w):
                raise SchemaError(f"instance {inst.instance_id} mask size {m.shape} != {(h, w)}", source=source)
    sem_vis, sem_occ = instance_to_semantic(instances, catalog.n_class, h, w)
    return FrameLabels(doc.get("frame", 0), tuple(instances), sem_vis, sem_occ), catalog
