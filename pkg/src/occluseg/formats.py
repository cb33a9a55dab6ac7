"""Instance-list documents shared by ``eval`` and ``plan``.

Two layouts are read:

* prediction sets: ``{"classes": [...], "images": {image_id: [{"class",
  "confidence", "visible", "occluded"}, ...]}}`` with RLE masks;
* frame label files written by ``dataset-build`` (``"instances"`` at top level).
"""

from __future__ import annotations

import json
from pathlib import Path

from .dataset_gen import FORMAT_VERSION, ClassCatalog, FrameLabels
from .exceptions import SchemaError, ValidationError
from .mask_core import BinaryMask
from .pq_eval import InstancePrediction


def _class_id(value, catalog: ClassCatalog | None, where: str) -> int:
    if isinstance(value, bool):
        raise SchemaError("class must be a name or an integer id", field=where)
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        if catalog is None:
            raise SchemaError("class names need a catalog ('classes')", field=where)
        return catalog.class_id(value)
    raise SchemaError("class must be a name or an integer id", field=where)


def _instance(obj, k: int, catalog, where: str) -> InstancePrediction:
    for key in ("class", "visible", "occluded"):
        if key not in obj:
            raise SchemaError(f"missing '{key}'", field=where)
    return InstancePrediction(
        _class_id(obj["class"], catalog, f"{where}.class"),
        BinaryMask.from_json(obj["visible"], f"{where}.visible"),
        BinaryMask.from_json(obj["occluded"], f"{where}.occluded"),
        float(obj.get("confidence", 1.0)),
        int(obj.get("id", k)),
    )


def instances_from_json(doc, catalog: ClassCatalog | None = None, source: str | None = None):
    """Return ``({image_id: [InstancePrediction]}, catalog)``."""
    if not isinstance(doc, dict):
        raise SchemaError("expected a JSON object", source=source)
    try:
        if "classes" in doc:
            catalog = ClassCatalog(tuple(doc["classes"]))
        if "images" in doc:
            images = doc["images"]
            if not isinstance(images, dict):
                raise SchemaError("'images' must map image ids to instance lists", field="$.images")
            out = {
                str(img): [_instance(o, k, catalog, f"$.images.{img}[{k}]") for k, o in enumerate(items)]
                for img, items in images.items()
            }
        elif "instances" in doc:
            img = str(doc.get("image_id", doc.get("frame", 0)))
            out = {img: [_instance(o, k, catalog, f"$.instances[{k}]") for k, o in enumerate(doc["instances"])]}
        else:
            raise SchemaError("expected 'images' or 'instances'")
    except SchemaError as exc:
        if exc.source is None and source is not None:
            raise SchemaError(str(exc), source=source) from None
        raise
    except ValidationError as exc:
        raise ValidationError(f"{source}: {exc}" if source else str(exc)) from None
    return out, catalog


def load_instances(path, catalog: ClassCatalog | None = None):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", source=f"{path}:{exc.lineno}") from None
    return instances_from_json(doc, catalog, source=str(path))


def instances_to_json(images: dict, catalog: ClassCatalog) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "classes": list(catalog.names),
        "images": {
            img: [
                {
                    "id": p.instance_id,
                    "class": catalog.name(p.class_id),
                    "confidence": p.confidence,
                    "visible": p.visible.to_json(),
                    "occluded": p.occluded.to_json(),
                }
                for p in preds
            ]
            for img, preds in images.items()
        },
    }


def frame_as_instances(labels: FrameLabels) -> list[InstancePrediction]:
    return [
        InstancePrediction(inst.class_id, inst.visible, inst.occluded, 1.0, inst.instance_id)
        for inst in labels.instances
    ]
