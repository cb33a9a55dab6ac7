"""``occluseg`` command line: dataset-build, augment, eval, plan, losscheck.

JSON results go to stdout (or ``--out``); diagnostics go to stderr. Exit
status is 0 on success, 1 when a check fails, 2 on bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
from PIL import Image

from . import gradcheck
from . import loss_kernels as lk
from .augment import Sample, augment_sample, sample_params
from .config import Config, load_config
from .dataset_gen import (
    FORMAT_VERSION,
    ClassCatalog,
    backproject,
    frame_labels_from_json,
    frame_labels_to_json,
    load_dataset,
)
from .exceptions import SchemaError, ValidationError
from .formats import frame_as_instances, instances_to_json, load_instances
from .occlusion_planner import build_graph, next_random_pick, plan_target_pick, random_pick_plan
from .pq_eval import MATCHING_MODES, mpq

log = logging.getLogger("occluseg")

LAMBDA_SWEEP = (1.0, 0.5, 0.25, 0.1)


class CheckFailed(Exception):
    pass


def _dumps(doc) -> str:
    return json.dumps(doc, separators=(",", ":")) + "\n"


def _emit(doc, out: str | None) -> None:
    text = json.dumps(doc, indent=1) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _resolve(args) -> Config:
    cfg = load_config(args.config)
    overrides = {
        "seed": args.seed,
        "jobs": args.jobs,
        "matching": args.matching,
        "lam": args.lam,
        "edge_threshold": args.edge_threshold,
        "visible_eps": args.visible_eps,
        "catalog": getattr(args, "catalog", None),
    }
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})


def _load_catalog(path) -> ClassCatalog | None:
    if path is None:
        return None
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", source=f"{path}:{exc.lineno}") from None
    names = doc.get("classes") if isinstance(doc, dict) else doc
    if not isinstance(names, list):
        raise SchemaError("expected a class list or {'classes': [...]}", source=str(path))
    return ClassCatalog(tuple(names))


# -- subcommands -----------------------------------------------------------

def cmd_dataset_build(args, cfg: Config) -> int:
    ds = load_dataset(args.annotation)
    if not ds.videos:
        log.warning("%s: no videos, nothing written", args.annotation)
        _emit({"format_version": FORMAT_VERSION, "frames": []}, None)
        return 0
    if not args.out:
        raise SchemaError("dataset-build needs --out DIR")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def build(v):
        return v, backproject(ds.videos[v], ds.height, ds.width, ds.catalog.n_class)

    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        results = list(pool.map(build, range(len(ds.videos))))
    written, images = [], {}
    for v, frames in results:
        for labels in frames:
            image_id = f"video{v:03d}_frame{labels.frame:04d}"
            name = f"{image_id}.json"
            doc = frame_labels_to_json(labels, ds.catalog, video=v, image_id=image_id)
            (out / name).write_text(_dumps(doc))
            written.append(name)
            images[image_id] = frame_as_instances(labels)
    (out / "instances.json").write_text(_dumps(instances_to_json(images, ds.catalog)))
    _emit({"format_version": FORMAT_VERSION, "frames": written, "instances": "instances.json"}, None)
    return 0


def _read_sample(path: Path) -> tuple[Sample, ClassCatalog, dict]:
    doc = json.loads(path.read_text())
    labels, catalog = frame_labels_from_json(doc, source=str(path))
    if "image" not in doc:
        raise SchemaError("sample needs an 'image' path", field="$.image", source=str(path))
    image = np.asarray(Image.open(path.parent / doc["image"]).convert("RGB"))
    return Sample(image, labels), catalog, doc


def cmd_augment(args, cfg: Config) -> int:
    if not args.out:
        raise SchemaError("augment needs --out DIR")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(i, Path(p), k) for i, p in enumerate(args.samples) for k in range(args.count)]

    def run(job):
        i, path, k = job
        sample, catalog, doc = _read_sample(path)
        params = sample_params(cfg.augment, [cfg.seed, i, k], sample.image.shape[:2])
        return i, path, k, augment_sample(sample, params), catalog, doc, params

    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        results = list(pool.map(run, jobs))
    written = []
    for i, path, k, aug, catalog, doc, params in results:
        stem = f"{path.stem}_aug{k}"
        Image.fromarray(aug.image).save(out / f"{stem}.png")
        extra = {key: doc[key] for key in ("video", "image_id") if key in doc}
        label_doc = frame_labels_to_json(aug.labels, catalog, **extra)
        label_doc["image"] = f"{stem}.png"
        p = asdict(params)
        p["translation"] = list(p["translation"])
        p["rng_seed"] = [cfg.seed, i, k]
        label_doc["augment_params"] = p
        (out / f"{stem}.json").write_text(_dumps(label_doc))
        written.append(f"{stem}.json")
    _emit({"format_version": FORMAT_VERSION, "samples": written}, None)
    return 0


def cmd_eval(args, cfg: Config) -> int:
    catalog = _load_catalog(cfg.catalog)
    gts, gt_catalog = load_instances(args.gt, catalog)
    catalog = catalog or gt_catalog
    preds, _ = load_instances(args.pred, catalog)
    for img in gts:
        preds.setdefault(img, [])
    reports = {mode: mpq(preds, gts, catalog, mode) for mode in MATCHING_MODES}
    primary = reports[cfg.matching]
    doc = {"format_version": FORMAT_VERSION, **primary.to_dict(),
           "by_matching": {m: r.to_dict() for m, r in reports.items()}}
    _emit(doc, args.out)
    print(primary.table(), file=sys.stderr)
    return 0


def cmd_plan(args, cfg: Config) -> int:
    catalog = _load_catalog(cfg.catalog)
    images, _ = load_instances(args.labels, catalog)
    if args.image is not None:
        if args.image not in images:
            raise ValidationError(f"image {args.image!r} not in {args.labels}")
        image_id = args.image
    elif len(images) == 1:
        image_id = next(iter(images))
    else:
        raise ValidationError(f"{args.labels} holds {len(images)} images; choose one with --image")
    graph = build_graph(images[image_id], cfg.edge_threshold)
    doc = {"format_version": FORMAT_VERSION, "image_id": image_id}
    if args.target is not None:
        plan = plan_target_pick(graph, args.target)
        doc.update(mode="target", target=args.target, degraded=False)
    else:
        plan = random_pick_plan(graph, cfg.visible_eps)
        doc.update(mode="random", degraded=next_random_pick(graph, cfg.visible_eps).degraded)
    doc.update(plan.to_dict())
    doc["graph"] = graph.to_dict()
    _emit(doc, args.out)
    for w in plan.warnings:
        log.warning(w)
    return 0


def _parse_sizes(text: str) -> list[tuple[int, int, int]]:
    sizes = []
    for part in text.split(","):
        dims = tuple(int(v) for v in part.lower().split("x"))
        if len(dims) != 3 or min(dims) < 1:
            raise argparse.ArgumentTypeError(f"size {part!r} is not HxWxC")
        sizes.append(dims)
    return sizes


def _sweep_components(seed: int, size: tuple[int, int, int]) -> dict:
    rng = np.random.default_rng(seed)
    h, w, _ = size
    n_class = 41
    n_roi = h * w
    return {
        "l_rpn_box": lk.smooth_l1(rng.normal(size=4 * n_roi), rng.normal(size=4 * n_roi))[0],
        "l_rpn_cls": lk.classification_ce(rng.normal(size=(n_roi, 2)), rng.integers(0, 2, n_roi))[0],
        "l_ins_box": lk.smooth_l1(rng.normal(size=4 * n_roi), rng.normal(size=4 * n_roi))[0],
        "l_ins_cls": lk.classification_ce(rng.normal(size=(n_roi, n_class)), rng.integers(0, n_class, n_roi))[0],
        "l_ins_mask": lk.softmax_ce(rng.normal(size=(h, w, 3)), rng.integers(0, 3, (h, w)))[0],
        "l_sem_vis": lk.softmax_ce(rng.normal(size=(h, w, n_class)), rng.integers(0, n_class, (h, w)))[0],
        "l_sem_occ": lk.sigmoid_ce(rng.normal(size=(h, w, n_class - 1)), rng.integers(0, 2, (h, w, n_class - 1)))[0],
    }


def cmd_losscheck(args, cfg: Config) -> int:
    sizes = args.sizes
    rows = []
    for kernel in gradcheck.KERNELS:
        for size in sizes:
            res = gradcheck.check_kernel(
                kernel, trials=args.trials, seed=cfg.seed, size=size,
                flip_sign=(kernel == args.inject_wrong_sign),
            )
            rows.append({"kernel": kernel, "size": list(size), "trials": res.trials,
                         "worst_rel_error": res.worst_rel_error, "passed": res.passed})
            log.info("%-18s %-9s worst rel err %.2e  %s", kernel, "x".join(map(str, size)),
                     res.worst_rel_error, "ok" if res.passed else "FAIL")
    comps = _sweep_components(cfg.seed, sizes[0])
    sweep = [aggregate_row(comps, lam) for lam in sorted(set(LAMBDA_SWEEP) | {cfg.lam}, reverse=True)]
    passed = all(r["passed"] for r in rows)
    _emit({"format_version": FORMAT_VERSION, "tolerance": gradcheck.REL_TOL, "step": gradcheck.STEP,
           "kernels": rows, "components": comps, "lambda_sweep": sweep, "passed": passed}, args.out)
    if not passed:
        raise CheckFailed("gradient check failed for " + ", ".join(
            sorted({r["kernel"] for r in rows if not r["passed"]})))
    return 0


def aggregate_row(comps: dict, lam: float) -> dict:
    b = lk.aggregate(comps, lam)
    return {"lambda": lam, "l_ins": b.l_ins, "l_sem": b.l_sem, "total": b.total}


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="worker threads (default: $OCCLUSEG_JOBS or 1)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--matching", choices=MATCHING_MODES)
    common.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("--edge-threshold", type=float)
    common.add_argument("--visible-eps", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="occluseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset-build", parents=[common], help="per-frame labels from a video annotation file")
    p.add_argument("annotation")
    p.set_defaults(func=cmd_dataset_build)

    p = sub.add_parser("augment", parents=[common], help="augment samples (label JSON with an 'image' PNG)")
    p.add_argument("samples", nargs="+")
    p.add_argument("--count", type=int, default=1, help="augmented copies per sample")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("eval", parents=[common], help="PQ / mPQ of predictions against ground truth")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--catalog", help="JSON class list")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plan", parents=[common], help="pick plan from instance masks")
    p.add_argument("labels")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--target", type=int)
    group.add_argument("--random", action="store_true")
    p.add_argument("--image", help="image id when the file holds several")
    p.add_argument("--catalog", help="JSON class list")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("losscheck", parents=[common], help="finite-difference check of every loss kernel")
    p.add_argument("--sizes", type=_parse_sizes, default=_parse_sizes("4x4x3,4x4x5"),
                   help="comma-separated HxWxC instance sizes")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--inject-wrong-sign", choices=gradcheck.KERNELS, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_losscheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _resolve(args)
        return args.func(args, cfg)
    except CheckFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SchemaError, ValidationError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
