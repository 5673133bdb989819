"""Directory-level pipeline: correct, rasterize, compare, evaluate, prep.

Every image is processed independently by a pure function, so failures
stay isolated, workers can run in any order, and reruns are
byte-identical. Timing and displacement statistics go to the returned
report (and stdout), never into the output files.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from celledge.annotations import (
    AnnotationSet,
    PolygonAnnotation,
    load_grayscale,
    parse_annotation,
    write_annotation,
)
from celledge.config import PipelineConfig
from celledge.correction import snap_points
from celledge.dataset import patch_grid, split_dataset
from celledge.evaluation import PRPoint, default_thresholds, pr_curve, summarize
from celledge.gradients import compute_gradient_field
from celledge.raster import EdgeMap, rasterize_set
from celledge.refit import interpolate_gaps, refit_closed_curve

__all__ = [
    "ImageReport",
    "correct_pair",
    "run_correct",
    "run_rasterize",
    "run_compare",
    "run_eval",
    "run_prep",
]

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass
class ImageReport:
    stem: str
    ok: bool
    error: str = ""
    n_polygons: int = 0
    n_points: int = 0
    n_moved: int = 0
    mean_displacement: float = 0.0
    max_displacement: float = 0.0
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def edge_map_png(edge_map: EdgeMap) -> bytes:
    """8-bit PNG, edge=255, background=0."""
    img = Image.fromarray(edge_map.bits.astype(np.uint8) * 255, mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def gradient_png(magnitude: np.ndarray) -> bytes:
    """Magnitude normalized to the full 16-bit range."""
    peak = float(magnitude.max())
    scaled = magnitude / peak * 65535.0 if peak > 0 else magnitude
    img = Image.fromarray(scaled.astype(np.uint16))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def load_edge_png(data: bytes) -> EdgeMap:
    with Image.open(io.BytesIO(data)) as img:
        return EdgeMap(np.asarray(img.convert("L")) > 127)


def load_soft_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img.convert("L"), dtype=np.float64) / 255.0


def correct_pair(
    image_bytes: bytes,
    annotation_bytes: bytes,
    config: PipelineConfig,
) -> tuple[dict[str, bytes], ImageReport]:
    """Full single-image pipeline on in-memory payloads.

    Returns output filename-suffix -> bytes plus the per-image report.
    Suffixes: '_corrected.json', '_edges.png', optionally
    '_original_edges.png' and '_gradient.png'.
    """
    start = time.perf_counter()
    image = load_grayscale(image_bytes)
    annotation = parse_annotation(annotation_bytes)
    field = compute_gradient_field(image, config.sigma)

    displacements = []
    corrected_polys: list[PolygonAnnotation] = []
    refit_loops: list[np.ndarray] = []
    for poly in annotation.polygons:
        snapped, _ = snap_points(poly.points, field, config.correction)
        displacements.append(np.linalg.norm(snapped - poly.points, axis=1))
        dense = interpolate_gaps(snapped, config.fit.step)
        refit = refit_closed_curve(dense, poly.cell_class, config.fit)
        corrected_polys.append(PolygonAnnotation(refit, poly.cell_class, poly.id))
        refit_loops.append(refit)

    corrected_set = AnnotationSet(
        image_path=annotation.image_path,
        image_size=annotation.image_size,
        polygons=corrected_polys,
    )
    outputs = {
        "_corrected.json": write_annotation(corrected_set),
        "_edges.png": edge_map_png(rasterize_set(annotation, refit_loops)),
    }
    if config.write_original:
        outputs["_original_edges.png"] = edge_map_png(rasterize_set(annotation))
    if config.dump_gradient:
        outputs["_gradient.png"] = gradient_png(field.magnitude)

    moved = np.concatenate(displacements) if displacements else np.zeros(0)
    report = ImageReport(
        stem="",
        ok=True,
        n_polygons=len(annotation.polygons),
        n_points=int(moved.size),
        n_moved=int((moved > 0).sum()),
        mean_displacement=float(moved.mean()) if moved.size else 0.0,
        max_displacement=float(moved.max()) if moved.size else 0.0,
        seconds=time.perf_counter() - start,
    )
    return outputs, report


def find_pairs(in_dir: Path) -> tuple[list[tuple[str, Path, Path]], list[str]]:
    """Match annotation JSONs to images by stem; report leftovers."""
    in_dir = Path(in_dir)
    if not in_dir.is_dir():
        raise ValueError(f"input directory {in_dir} does not exist")
    images = {}
    for suffix in IMAGE_SUFFIXES:
        for path in sorted(in_dir.glob(f"*{suffix}")):
            images.setdefault(path.stem, path)
    pairs = []
    unmatched = []
    stems_seen = set()
    for json_path in sorted(in_dir.glob("*.json")):
        stem = json_path.stem
        stems_seen.add(stem)
        if stem in images:
            pairs.append((stem, images[stem], json_path))
        else:
            unmatched.append(f"{json_path.name}: no matching image")
    for stem, path in sorted(images.items()):
        if stem not in stems_seen:
            unmatched.append(f"{path.name}: no matching annotation")
    return pairs, unmatched


def _process_one(args) -> ImageReport:
    stem, image_path, json_path, out_dir, config = args
    try:
        outputs, report = correct_pair(
            image_path.read_bytes(), json_path.read_bytes(), config)
    except Exception as exc:  # isolate per-image failures
        return ImageReport(stem=stem, ok=False, error=str(exc))
    for suffix, payload in outputs.items():
        (out_dir / f"{stem}{suffix}").write_bytes(payload)
    report.stem = stem
    return report


def run_correct(in_dir: Path, out_dir: Path, config: PipelineConfig) -> dict:
    """Correct every (image, annotation) pair under in_dir.

    Returns the report dict: per-image stats, unmatched files, wall time,
    and an exit_code field (0 clean, 1 partial failures).
    """
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs, unmatched = find_pairs(in_dir)

    start = time.perf_counter()
    tasks = [(stem, img, ann, out_dir, config) for stem, img, ann in pairs]
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            reports = list(pool.map(_process_one, tasks))
    else:
        reports = [_process_one(task) for task in tasks]
    wall = time.perf_counter() - start

    failures = [r for r in reports if not r.ok]
    return {
        "images": [r.as_dict() for r in reports],
        "unmatched": unmatched,
        "n_images": len(reports),
        "n_failed": len(failures),
        "total_seconds": wall,
        "exit_code": 1 if failures or unmatched else 0,
    }


def run_rasterize(in_dir: Path, out_dir: Path) -> dict:
    """Rasterize annotations as-is (the uncorrected baseline labels)."""
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    if not in_dir.is_dir():
        raise ValueError(f"input directory {in_dir} does not exist")
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    failures = 0
    for json_path in sorted(in_dir.glob("*.json")):
        try:
            annotation = parse_annotation(json_path.read_bytes())
            payload = edge_map_png(rasterize_set(annotation))
            (out_dir / f"{json_path.stem}_edges.png").write_bytes(payload)
            entries.append({"stem": json_path.stem, "ok": True})
        except Exception as exc:
            failures += 1
            entries.append({"stem": json_path.stem, "ok": False, "error": str(exc)})
    return {"images": entries, "n_failed": failures,
            "exit_code": 1 if failures else 0}


def _overlay(gray: np.ndarray, edges: EdgeMap, channel: int) -> np.ndarray:
    rgb = np.stack([gray] * 3, axis=2).astype(np.uint8)
    rgb[edges.bits] = 0
    rgb[edges.bits, channel] = 255
    return rgb


def run_compare(in_dir: Path, out_dir: Path, config: PipelineConfig) -> dict:
    """Side-by-side PNGs: original labels (red) vs corrected labels (green)."""
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs, unmatched = find_pairs(in_dir)
    entries = []
    failures = 0
    for stem, image_path, json_path in pairs:
        try:
            image = load_grayscale(image_path.read_bytes())
            annotation = parse_annotation(json_path.read_bytes())
            field = compute_gradient_field(image, config.sigma)
            loops = []
            for poly in annotation.polygons:
                snapped, _ = snap_points(poly.points, field, config.correction)
                dense = interpolate_gaps(snapped, config.fit.step)
                loops.append(refit_closed_curve(dense, poly.cell_class, config.fit))
            gray = np.asarray(image.pixels, dtype=np.uint8)
            left = _overlay(gray, rasterize_set(annotation), channel=0)
            right = _overlay(gray, rasterize_set(annotation, loops), channel=1)
            panel = np.concatenate([left, right], axis=1)
            buf = io.BytesIO()
            Image.fromarray(panel).save(buf, format="PNG")
            (out_dir / f"{stem}_compare.png").write_bytes(buf.getvalue())
            entries.append({"stem": stem, "ok": True})
        except Exception as exc:
            failures += 1
            entries.append({"stem": stem, "ok": False, "error": str(exc)})
    return {"images": entries, "unmatched": unmatched, "n_failed": failures,
            "exit_code": 1 if failures or unmatched else 0}


def run_eval(
    pred_dir: Path,
    gt_dir: Path,
    out_dir: Path,
    tol: float | None = None,
    n_thresholds: int = 33,
) -> dict:
    """Score soft predictions against ground-truth edge maps by stem.

    Writes report.json and pr_curve.csv into out_dir and returns the
    report dict.
    """
    pred_dir, gt_dir, out_dir = Path(pred_dir), Path(gt_dir), Path(out_dir)
    if not pred_dir.is_dir() or not gt_dir.is_dir():
        raise ValueError(f"prediction/ground-truth directories must exist: "
                         f"{pred_dir}, {gt_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    thresholds = default_thresholds(n_thresholds)

    stems = []
    tables = []
    unmatched = []
    for pred_path in sorted(pred_dir.glob("*.png")):
        gt_path = gt_dir / pred_path.name
        if not gt_path.exists():
            unmatched.append(pred_path.name)
            continue
        soft = load_soft_png(pred_path.read_bytes())
        gt = load_edge_png(gt_path.read_bytes())
        tables.append(pr_curve(soft, gt, thresholds, tol))
        stems.append(pred_path.stem)
    if not tables:
        raise ValueError(f"no prediction/ground-truth pairs under {pred_dir}")

    summary = summarize(tables)
    report = {
        "ods": summary.ods,
        "ois": summary.ois,
        "ap": summary.ap,
        "per_image": [
            {
                "stem": stem,
                "best_f": max(pt.f for pt in table),
                "best_threshold": max(table, key=lambda pt: pt.f).threshold,
            }
            for stem, table in zip(stems, tables)
        ],
        "unmatched": unmatched,
        "exit_code": 1 if unmatched else 0,
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2))
    with open(out_dir / "pr_curve.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["threshold", "tp", "fp", "fn", "precision", "recall", "f"])
        for k, t in enumerate(thresholds):
            tp = sum(tbl[k].tp for tbl in tables)
            fp = sum(tbl[k].fp for tbl in tables)
            fn = sum(tbl[k].fn for tbl in tables)
            point = PRPoint(float(t), tp, fp, fn)
            writer.writerow([f"{t:.6f}", tp, fp, fn,
                             f"{point.precision:.6f}", f"{point.recall:.6f}",
                             f"{point.f:.6f}"])
    return report


def run_prep(in_dir: Path, out_dir: Path, seed: int) -> dict:
    """Cut 49 offset-grid patches per (image, *_edges.png) pair and write a
    split manifest with a 6:1:3 train/val/test assignment by source image."""
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    if not in_dir.is_dir():
        raise ValueError(f"input directory {in_dir} does not exist")
    out_dir.mkdir(parents=True, exist_ok=True)

    by_stem = {}
    for suffix in IMAGE_SUFFIXES:
        for image_path in sorted(in_dir.glob(f"*{suffix}")):
            if image_path.stem.endswith("_edges"):
                continue
            label_path = in_dir / f"{image_path.stem}_edges.png"
            if label_path.exists():
                by_stem.setdefault(image_path.stem, (image_path, label_path))
    pairs = [(stem, img, lbl) for stem, (img, lbl) in sorted(by_stem.items())]
    if not pairs:
        raise ValueError(f"no (image, *_edges.png) pairs under {in_dir}")

    assignment = split_dataset(len(pairs), seed) if len(pairs) >= 10 else None
    split_of = {}
    if assignment:
        for name, indices in (("train", assignment.train),
                              ("val", assignment.val),
                              ("test", assignment.test)):
            for idx in indices:
                split_of[idx] = name

    rows = []
    for idx, (stem, image_path, label_path) in enumerate(pairs):
        image = load_grayscale(image_path.read_bytes())
        edges = load_edge_png(label_path.read_bytes())
        spec = patch_grid((image.width, image.height))
        split = split_of.get(idx, "train")
        for k, (x0, y0) in enumerate(spec.origins):
            img_patch = image.pixels[y0:y0 + spec.patch_h, x0:x0 + spec.patch_w]
            lbl_patch = edges.bits[y0:y0 + spec.patch_h, x0:x0 + spec.patch_w]
            img_name = f"{stem}_p{k:02d}.png"
            buf = io.BytesIO()
            Image.fromarray(np.asarray(img_patch, dtype=np.uint8)).save(buf, "PNG")
            (out_dir / img_name).write_bytes(buf.getvalue())
            buf = io.BytesIO()
            Image.fromarray(lbl_patch.astype(np.uint8) * 255).save(buf, "PNG")
            (out_dir / f"{stem}_p{k:02d}_edges.png").write_bytes(buf.getvalue())
            rows.append((img_name, split))

    with open(out_dir / "manifest.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["filename", "split"])
        writer.writerows(rows)
    return {"n_images": len(pairs), "n_patches": len(rows), "exit_code": 0}
