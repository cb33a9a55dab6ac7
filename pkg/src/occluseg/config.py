from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .augment import AugmentRanges
from .exceptions import SchemaError
from .loss_kernels import DEFAULT_LAMBDA
from .occlusion_planner import DEFAULT_EDGE_THRESHOLD, DEFAULT_VISIBLE_EPS
from .pq_eval import MATCHING_MODES

JOBS_ENV = "OCCLUSEG_JOBS"


@dataclass(frozen=True)
class Config:
    catalog: str | None = None
    augment: AugmentRanges = field(default_factory=AugmentRanges)
    lam: float = DEFAULT_LAMBDA
    matching: str = "union"
    edge_threshold: float = DEFAULT_EDGE_THRESHOLD
    visible_eps: float = DEFAULT_VISIBLE_EPS
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.matching not in MATCHING_MODES:
            raise SchemaError(f"matching must be one of {MATCHING_MODES}", field="matching")
        if self.lam < 0:
            raise SchemaError("lambda must be non-negative", field="lambda")
        if self.jobs < 1:
            raise SchemaError("jobs must be >= 1", field="jobs")


_KEYS = {
    "catalog": "catalog",
    "lambda": "lam",
    "matching": "matching",
    "edge_threshold": "edge_threshold",
    "visible_eps": "visible_eps",
    "seed": "seed",
    "jobs": "jobs",
}


def config_from_dict(doc: dict, source: str | None = None) -> Config:
    kwargs = {}
    for key, value in doc.items():
        if key == "augment":
            try:
                kwargs["augment"] = AugmentRanges.from_dict(value)
            except (TypeError, ValueError) as exc:
                raise SchemaError(str(exc), field="augment", source=source) from None
        elif key in _KEYS:
            kwargs[_KEYS[key]] = value
        elif key != "format_version":
            raise SchemaError(f"unknown config key {key!r}", source=source)
    return Config(**kwargs)


def load_config(path=None) -> Config:
    """Defaults, overlaid by a TOML or JSON file, with ``OCCLUSEG_JOBS`` as the jobs default."""
    cfg = Config()
    if JOBS_ENV in os.environ:
        cfg = replace(cfg, jobs=int(os.environ[JOBS_ENV]))
    if path is None:
        return cfg
    path = Path(path)
    raw = path.read_bytes()
    try:
        doc = tomllib.loads(raw.decode()) if path.suffix == ".toml" else json.loads(raw)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot parse config: {exc}", source=str(path)) from None
    merged = config_from_dict(doc, source=str(path))
    if "jobs" not in doc:
        merged = replace(merged, jobs=cfg.jobs)
    return merged
