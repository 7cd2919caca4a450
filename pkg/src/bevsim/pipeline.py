"""End-to-end pipeline stages shared by the HTTP service and the tests.

Each stage is a plain function over a :class:`~bevsim.config.RunConfig`
and filesystem paths, returning a JSON-serializable report dict.
"""

from __future__ import annotations

import logging
import time
from pathlib import Path

import numpy as np

from .augment import ObjectDatabase, augment_frame, harvest_objects
from .bevgrid import grid_dims
from .config import RunConfig
from .dataio import (
    LabelEntry,
    footprint_to_label,
    frame_name,
    frame_paths,
    labels_to_footprints,
    list_frames,
    parse_labels,
    read_cloud,
    read_splits,
    split_dataset,
    write_cloud,
    write_labels,
    write_splits,
)
from .errors import DataError
from .geometry import Box, Capsule, Cylinder, Ellipsoid, Plane, Pose, Sphere, matrix_to_ypr
from .metrics import MetricAccumulator, predictions_to_detections
from .predictions import read_ground_truth, read_predictions, write_ground_truth
from .raster import rasterize, write_mask
from .raycast import NoiseModel, ScanPattern, cast_rays, set_worker_threads
from .scene import Scene, SceneObject, generate_scene, object_yaw, save_scene
from .taxonomy import Taxonomy

logger = logging.getLogger(__name__)

_MIX = 0x9E3779B97F4A7C15


def mix_seed(seed: int, *indices: int) -> int:
    """Derive a stable 64-bit sub-seed from a base seed and indices."""
    state = seed & 0xFFFFFFFFFFFFFFFF
    for idx in indices:
        state ^= (idx + 1) * _MIX & 0xFFFFFFFFFFFFFFFF
        state = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9 & 0xFFFFFFFFFFFFFFFF
        state = (state ^ (state >> 27)) * 0x94D049BB133111EB & 0xFFFFFFFFFFFFFFFF
        state ^= state >> 31
    return state


def _footprint_dims(obj: SceneObject) -> tuple[float, float, float]:
    """(length, width, height) of an object's tight axis-aligned local box."""
    g = obj.geometry
    if isinstance(g, Sphere):
        d = 2.0 * g.radius
        return d, d, d
    if isinstance(g, Box):
        hx, hy, hz = g.half_extents
        return 2.0 * hx, 2.0 * hy, 2.0 * hz
    if isinstance(g, Cylinder):
        return 2.0 * g.radius, 2.0 * g.radius, 2.0 * g.half_height
    if isinstance(g, Capsule):
        return 2.0 * g.radius, 2.0 * g.radius, 2.0 * (g.half_length + g.radius)
    if isinstance(g, Ellipsoid):
        rx, ry, rz = g.radii
        return 2.0 * rx, 2.0 * ry, 2.0 * rz
    raise TypeError(f"no footprint for geometry {type(g).__name__}")


def _occlusion_band(visible_fraction: float) -> int:
    if visible_fraction >= 0.5:
        return 0
    if visible_fraction >= 0.25:
        return 1
    if visible_fraction > 0.0:
        return 2
    return 3


def scene_labels(
    scene: Scene,
    sensor_pose: Pose,
    pattern: ScanPattern,
    taxonomy: Taxonomy,
    visible_counts: dict[int, int] | None = None,
) -> list[LabelEntry]:
    """Perfect annotations for every non-plane object, in the sensor frame.

    Occlusion levels are banded by the fraction of a scan's hits the
    object keeps compared to scanning it alone (>=50% -> 0, >=25% -> 1,
    >0 -> 2, else 3); truncation is always 0.
    """
    inv = sensor_pose.inverse()
    entries = []
    for idx, obj in enumerate(scene.objects):
        if isinstance(obj.geometry, Plane):
            continue
        l, w, h = _footprint_dims(obj)
        location = inv.apply(obj.pose.translation)
        yaw = object_yaw(obj) - matrix_to_ypr(sensor_pose.rotation)[0]
        occlusion = 0
        if visible_counts is not None:
            alone = Scene(objects=(obj,), workspace=scene.workspace, seed=scene.seed)
            n_alone = len(cast_rays(alone, sensor_pose, pattern).cloud)
            n_seen = visible_counts.get(idx, 0)
            frac = n_seen / n_alone if n_alone else 0.0
            occlusion = _occlusion_band(min(frac, 1.0))
        entries.append(
            LabelEntry(
                type=taxonomy.class_name(obj.class_id),
                truncation=0.0,
                occlusion=occlusion,
                dims_hwl=(h, w, l),
                location=location,
                yaw=yaw,
            )
        )
    return entries


def generate_dataset(config: RunConfig, count: int, out_dir: str | Path, seed: int | None = None) -> dict:
    """Generate ``count`` frames (scene, scan, labels) plus the split manifest."""
    if count < len(config.split_ratios):
        raise DataError(f"need at least {len(config.split_ratios)} frames, got {count}")
    seed = config.seed if seed is None else seed
    out = Path(out_dir)
    taxonomy = config.taxonomy()
    scene_cfg = config.scene.to_scene_config(taxonomy)
    pattern = config.scan.to_pattern()
    sensor_pose = Pose(translation=np.array([0.0, 0.0, config.scan.sensor_z]))

    frame_ids = [frame_name(i) for i in range(count)]
    parts = split_dataset(frame_ids, config.split_ratios, seed)
    split_of = {}
    splits = {}
    for name, ids in zip(("train", "val", "test"), parts):
        splits[name] = sorted(ids)
        for fid in ids:
            split_of[fid] = name

    timings = []
    for i, fid in enumerate(frame_ids):
        t0 = time.perf_counter()
        scene = generate_scene(scene_cfg, seed=mix_seed(seed, i))
        noise = config.noise.to_model(seed=mix_seed(seed, i, 1))
        result = cast_rays(scene, sensor_pose, pattern, noise)
        counts = dict(zip(*np.unique(result.object_indices, return_counts=True)))
        labels = scene_labels(scene, sensor_pose, pattern, taxonomy,
                              visible_counts={int(k): int(v) for k, v in counts.items()})
        rec = frame_paths(out, split_of[fid], fid)
        rec.cloud_path.parent.mkdir(parents=True, exist_ok=True)
        rec.label_path.parent.mkdir(parents=True, exist_ok=True)
        scene_dir = out / split_of[fid] / "scenes"
        scene_dir.mkdir(parents=True, exist_ok=True)
        write_cloud(result.cloud, rec.cloud_path)
        write_labels(labels, rec.label_path)
        save_scene(scene, scene_dir / f"{fid}.json")
        timings.append(time.perf_counter() - t0)

    write_splits(out, splits)
    return {
        "out_dir": str(out),
        "frames": count,
        "splits": {k: len(v) for k, v in splits.items()},
        "seconds_total": float(sum(timings)),
        "seconds_per_frame": [round(t, 6) for t in timings],
        "rays_per_frame": pattern.n_rays,
    }


def _iter_dataset_frames(root: Path, split: str | None):
    splits = read_splits(root)
    names = [split] if split else list(splits)
    for name in names:
        if name not in splits:
            raise DataError(f"unknown split {name!r}; manifest has {sorted(splits)}")
        yield from ((name, fid) for fid in splits[name])


def rasterize_dataset(
    config: RunConfig, dataset_dir: str | Path, out_dir: str | Path, split: str | None = None
) -> dict:
    """Rasterize every frame's labels into instance masks + ground-truth docs.

    Per-frame failures (missing or corrupt label files) are collected and
    reported; remaining frames still process.
    """
    root = Path(dataset_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = config.grid_spec()
    taxonomy = config.taxonomy()
    written = []
    failures = []
    for split_name, fid in _iter_dataset_frames(root, split):
        rec = frame_paths(root, split_name, fid)
        try:
            entries = parse_labels(rec.label_path)
            boxes = labels_to_footprints(entries, taxonomy)
            mask_map = rasterize(boxes, spec)
            mask_file = f"{fid}.mask"
            write_mask(mask_map, out / mask_file)
            instances = []
            present = set(np.unique(mask_map.cells))
            for box in boxes:
                if box.instance_id not in present:
                    continue  # fully overwritten or off-grid footprint
                instances.append(
                    {
                        "instance_id": box.instance_id,
                        "class_id": box.class_id,
                        "dims": box.dims.tolist(),
                        "position": box.position.tolist(),
                        "yaw": box.yaw,
                    }
                )
            write_ground_truth(out / f"{fid}.json", fid, mask_file, instances)
            written.append(fid)
        except Exception as exc:  # keep going; report at the end
            failures.append({"frame_id": fid, "error": str(exc)})
    return {
        "out_dir": str(out),
        "written": len(written),
        "frames": written,
        "failures": failures,
        "grid": list(grid_dims(spec)),
    }


def augment_dataset(
    config: RunConfig,
    dataset_dir: str | Path,
    out_dir: str | Path,
    seed: int | None = None,
    split: str | None = None,
) -> dict:
    """Augment every frame into a parallel dataset tree."""
    seed = config.seed if seed is None else seed
    root = Path(dataset_dir)
    out = Path(out_dir)
    cfg = config.augment.to_config()

    db = None
    if cfg.insert_count[1] > 0:
        db = build_object_database(root, split="train", max_items=500)
        if not len(db):
            logger.warning("no harvestable objects found; insertion disabled")
            db = None

    splits = read_splits(root)
    processed: dict[str, list[str]] = {}
    count = 0
    for i, (split_name, fid) in enumerate(_iter_dataset_frames(root, split)):
        rec = frame_paths(root, split_name, fid)
        cloud = read_cloud(rec.cloud_path)
        labels = parse_labels(rec.label_path)
        bounds = (config.scene.workspace_lo[0], config.scene.workspace_hi[0])
        cloud2, labels2 = augment_frame(
            cloud, labels, cfg, seed=mix_seed(seed, i), object_db=db, insert_bounds_xy=bounds
        )
        dst = frame_paths(out, split_name, fid)
        dst.cloud_path.parent.mkdir(parents=True, exist_ok=True)
        dst.label_path.parent.mkdir(parents=True, exist_ok=True)
        write_cloud(cloud2, dst.cloud_path)
        write_labels(labels2, dst.label_path)
        processed.setdefault(split_name, []).append(fid)
        count += 1
    write_splits(out, {k: sorted(v) for k, v in processed.items()} or splits)
    return {"out_dir": str(out), "frames": count}


def build_object_database(
    dataset_dir: str | Path, split: str = "train", max_items: int = 500
) -> ObjectDatabase:
    """Harvest labeled objects (points cropped by footprint) from a split."""
    db = ObjectDatabase()
    for rec in list_frames(dataset_dir, split):
        cloud = read_cloud(rec.cloud_path)
        labels = parse_labels(rec.label_path)
        for item in harvest_objects(cloud, labels):
            db.add(item)
            if len(db) >= max_items:
                return db
    return db


def evaluate_dirs(config: RunConfig, pred_dir: str | Path, gt_dir: str | Path) -> dict:
    """Compute AP/mIoU/PQ between per-frame prediction and ground-truth files.

    Frame ids are the JSON file stems; the two directories must contain
    the same ids.

    Raises:
        DataError: mismatched frame sets (offenders listed).
    """
    pred_dir = Path(pred_dir)
    gt_dir = Path(gt_dir)
    pred_ids = {p.stem for p in pred_dir.glob("*.json")}
    gt_ids = {p.stem for p in gt_dir.glob("*.json")}
    if pred_ids != gt_ids:
        missing_pred = sorted(gt_ids - pred_ids)
        missing_gt = sorted(pred_ids - gt_ids)
        raise DataError(
            f"frame mismatch: missing predictions for {missing_pred[:10]}, "
            f"missing ground truth for {missing_gt[:10]}"
        )
    if not gt_ids:
        raise DataError(f"no frames found in {gt_dir}")

    acc = MetricAccumulator(ap_thresholds=tuple(config.eval.iou_thresholds))
    for fid in sorted(gt_ids):
        gts = read_ground_truth(gt_dir / f"{fid}.json")
        preds = read_predictions(pred_dir / f"{fid}.json", max_queries=config.eval.n_queries)
        dets = predictions_to_detections(
            preds, config.eval.confidence_threshold, config.eval.mask_threshold
        )
        acc.update(dets, gts)
    report = acc.finalize().to_dict()
    report["pred_dir"] = str(pred_dir)
    report["gt_dir"] = str(gt_dir)
    return report


def scan_scene_to_cloud(
    config: RunConfig, scene: Scene, sensor_pose: Pose | None = None, seed: int | None = None
):
    """Single scan with the configured pattern and noise."""
    seed = config.seed if seed is None else seed
    pose = sensor_pose or Pose(translation=np.array([0.0, 0.0, config.scan.sensor_z]))
    return cast_rays(scene, pose, config.scan.to_pattern(), config.noise.to_model(seed=seed))


def _bench_scene(objects: int, seed: int) -> Scene:
    from .scene import Aabb, ClassSpec, SceneConfig

    kinds = ("box", "sphere", "cylinder", "capsule", "ellipsoid")
    per = objects // len(kinds)
    counts = [per + (1 if k < objects - per * len(kinds) else 0) for k in range(len(kinds))]
    specs = tuple(
        ClassSpec(
            class_id=k,
            kind=kind,
            count=(counts[k], counts[k]),
            size_ranges=((0.15, 0.4), (0.15, 0.4), (0.15, 0.4)),
        )
        for k, kind in enumerate(kinds)
        if counts[k] > 0
    )
    cfg = SceneConfig(workspace=Aabb(lo=(-4.8, -4.8, -1.4), hi=(4.8, 4.8, 2.4)), classes=specs)
    return generate_scene(cfg, seed=seed)


def run_bench(
    rays: int = 100_000,
    objects: int = 50,
    workers: tuple[int, ...] = (1, 8),
    repeats: int = 3,
    seed: int = 0,
) -> dict:
    """Time full scans of a synthetic scene across kernel thread counts."""
    import os

    scene = _bench_scene(objects, seed)
    az = 500
    el = max(1, -(-rays // az))
    pattern = ScanPattern(
        azimuth_count=az,
        elevation_start=np.radians(-30.0),
        elevation_end=np.radians(52.0),
        elevation_count=el,
        max_range=30.0,
    )
    noise = NoiseModel()
    pose = Pose.identity()
    n_rays = pattern.n_rays

    results = []
    throughput = {}
    try:
        for requested in workers:
            effective = set_worker_threads(requested)
            cast_rays(scene, pose, pattern, noise)  # warmup (JIT + thread pool)
            best = min(
                _timed(lambda: cast_rays(scene, pose, pattern, noise)) for _ in range(repeats)
            )
            rays_per_sec = n_rays / best
            throughput[requested] = rays_per_sec
            results.append(
                {
                    "requested_workers": requested,
                    "effective_workers": effective,
                    "seconds": best,
                    "rays_per_sec": rays_per_sec,
                }
            )
    finally:
        set_worker_threads(os.cpu_count() or 1)

    base = throughput.get(1) or min(throughput.values())
    scaling = max(throughput.values()) / base if base else 1.0
    return {
        "rays": n_rays,
        "objects": len([o for o in scene.objects]),
        "host_cpus": os.cpu_count(),
        "results": results,
        "scaling_ratio": scaling,
    }


def _timed(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0
