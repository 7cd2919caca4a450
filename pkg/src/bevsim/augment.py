"""Frame augmentation: point-level, object-level and mask-level.

The pipeline order is fixed and documented:

1. global z-axis rotation by theta ~ U(rotation_range), applied to points
   and labels (locations rotated, yaws shifted and re-wrapped);
2. per-point xyz jitter N(0, jitter_sigma^2) plus one shared global
   offset N(0, global_sigma^2) drawn per frame (sensor-drift noise,
   points only);
3. decimation by Bernoulli(keep_prob) followed by independent random
   dropping with drop_prob;
4. box-level noise on each label: location, size fraction, yaw;
5. sampled-object insertion from a prebuilt database with
   bounding-circle collision checking (budget-limited; on exhaustion
   fewer objects are inserted and a warning is logged);
6. random shuffle of point order.

Everything is a pure function of (inputs, config, seed).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dataio import LabelEntry
from .geometry import wrap_angle
from .raycast import PointCloud

logger = logging.getLogger(__name__)

_INSERT_ATTEMPTS = 100


@dataclass(frozen=True)
class AugmentConfig:
    """Augmentation strengths; the default config is the identity."""

    rotation_range: tuple[float, float] = (0.0, 0.0)
    jitter_sigma: float = 0.0
    keep_prob: float = 1.0
    global_sigma: float = 0.0
    drop_prob: float = 0.0
    box_location_sigma: float = 0.0
    box_size_frac_sigma: float = 0.0
    box_yaw_sigma: float = 0.0
    insert_count: tuple[int, int] = (0, 0)
    mask_perturb_prob: float = 0.0

    def __post_init__(self):
        for name in ("keep_prob", "drop_prob", "mask_perturb_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for name in ("jitter_sigma", "global_sigma", "box_location_sigma",
                     "box_size_frac_sigma", "box_yaw_sigma"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if self.insert_count[0] < 0 or self.insert_count[1] < self.insert_count[0]:
            raise ValueError(f"bad insert_count range {self.insert_count}")


@dataclass(frozen=True, eq=False)
class DbObject:
    """One harvested object: a label template plus its points in the
    box frame (box center at the origin, yaw removed)."""

    label: LabelEntry
    points: np.ndarray  # (n, 4)


class ObjectDatabase:
    """Bank of harvested objects used for insertion augmentation."""

    def __init__(self, items: list[DbObject] | None = None):
        self.items: list[DbObject] = list(items or [])

    def __len__(self) -> int:
        return len(self.items)

    def add(self, item: DbObject) -> None:
        self.items.append(item)

    def save(self, path: str | Path) -> None:
        meta = []
        arrays = {}
        for k, item in enumerate(self.items):
            e = item.label
            meta.append(
                {
                    "type": e.type,
                    "truncation": e.truncation,
                    "occlusion": e.occlusion,
                    "dims_hwl": e.dims_hwl.tolist(),
                    "location": e.location.tolist(),
                    "yaw": e.yaw,
                }
            )
            arrays[f"points_{k}"] = item.points.astype(np.float32)
        np.savez_compressed(path, meta=json.dumps(meta), **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "ObjectDatabase":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            items = [
                DbObject(label=LabelEntry(**entry), points=data[f"points_{k}"].astype(float))
                for k, entry in enumerate(meta)
            ]
        return cls(items)


def _footprint_radius(entry: LabelEntry) -> float:
    h, w, l = entry.dims_hwl
    return 0.5 * math.hypot(l, w)


def harvest_objects(cloud: PointCloud, labels: list[LabelEntry], z_margin: float = 0.05) -> list[DbObject]:
    """Crop each labeled object's points and normalize them to the box frame."""
    items = []
    pts = cloud.points
    for entry in labels:
        h, w, l = entry.dims_hwl
        cx, cy, cz = entry.location
        c, s = math.cos(entry.yaw), math.sin(entry.yaw)
        dx = pts[:, 0] - cx
        dy = pts[:, 1] - cy
        u = c * dx + s * dy
        t = -s * dx + c * dy
        inside = (
            (np.abs(u) <= 0.5 * l)
            & (np.abs(t) <= 0.5 * w)
            & (np.abs(pts[:, 2] - cz) <= 0.5 * h + z_margin)
        )
        local = np.column_stack((u[inside], t[inside], pts[inside, 2] - cz, pts[inside, 3]))
        if len(local):
            items.append(DbObject(label=entry, points=local))
    return items


def _insert_objects(
    points: np.ndarray,
    labels: list[LabelEntry],
    db: ObjectDatabase,
    count: int,
    bounds_xy: tuple[float, float],
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[LabelEntry]]:
    occupied = [
        (float(e.location[0]), float(e.location[1]), _footprint_radius(e)) for e in labels
    ]
    inserted = 0
    chunks = [points]
    lo, hi = bounds_xy
    for _ in range(count):
        placed = False
        for _attempt in range(_INSERT_ATTEMPTS):
            item = db.items[int(rng.integers(len(db.items)))]
            x = float(rng.uniform(lo, hi))
            y = float(rng.uniform(lo, hi))
            yaw = float(rng.uniform(-math.pi, math.pi))
            radius = _footprint_radius(item.label)
            if any(math.hypot(x - ox, y - oy) <= radius + orad for ox, oy, orad in occupied):
                continue
            c, s = math.cos(yaw), math.sin(yaw)
            local = item.points
            world = np.column_stack(
                (
                    c * local[:, 0] - s * local[:, 1] + x,
                    s * local[:, 0] + c * local[:, 1] + y,
                    local[:, 2] + item.label.location[2],
                    local[:, 3],
                )
            )
            chunks.append(world)
            labels = labels + [
                replace(
                    item.label,
                    location=np.array([x, y, float(item.label.location[2])]),
                    yaw=wrap_angle(yaw),
                )
            ]
            occupied.append((x, y, radius))
            inserted += 1
            placed = True
            break
        if not placed:
            logger.warning(
                "object insertion budget exhausted after %d of %d objects", inserted, count
            )
            break
    return np.concatenate(chunks, axis=0), labels


def augment_frame(
    cloud: PointCloud,
    labels: list[LabelEntry],
    cfg: AugmentConfig,
    seed: int,
    object_db: ObjectDatabase | None = None,
    insert_bounds_xy: tuple[float, float] = (-4.0, 4.0),
) -> tuple[PointCloud, list[LabelEntry]]:
    """Apply the augmentation pipeline; deterministic given the seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    points = cloud.points.copy()
    labels = list(labels)

    # 1. global rotation about z
    theta = float(rng.uniform(cfg.rotation_range[0], cfg.rotation_range[1]))
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    points[:, :2] = points[:, :2] @ rot.T
    rotated = []
    for e in labels:
        loc = e.location.copy()
        loc[:2] = rot @ loc[:2]
        rotated.append(replace(e, location=loc, yaw=wrap_angle(e.yaw + theta)))
    labels = rotated

    # 2. per-point jitter + one shared global offset
    points[:, :3] += rng.normal(0.0, cfg.jitter_sigma, size=(len(points), 3))
    points[:, :3] += rng.normal(0.0, cfg.global_sigma, size=3)

    # 3. decimation, then independent random dropping
    keep = rng.random(len(points)) < cfg.keep_prob
    keep &= rng.random(len(points)) >= cfg.drop_prob
    points = points[keep]

    # 4. box-level noise
    noised = []
    for e in labels:
        loc = e.location + rng.normal(0.0, cfg.box_location_sigma, size=3)
        scale = np.maximum(1.0 + rng.normal(0.0, cfg.box_size_frac_sigma, size=3), 0.05)
        yaw = wrap_angle(e.yaw + float(rng.normal(0.0, cfg.box_yaw_sigma)))
        noised.append(replace(e, location=loc, dims_hwl=e.dims_hwl * scale, yaw=yaw))
    labels = noised

    # 5. sampled-object insertion
    n_insert = int(rng.integers(cfg.insert_count[0], cfg.insert_count[1] + 1))
    if n_insert > 0 and object_db is not None and len(object_db):
        points, labels = _insert_objects(points, labels, object_db, n_insert, insert_bounds_xy, rng)

    # 6. shuffle point order
    points = points[rng.permutation(len(points))]
    points[:, 3] = np.clip(points[:, 3], 0.0, 1.0)
    return PointCloud(points=points), labels


# --- mask perturbation ----------------------------------------------------------


def _shifted(mask: np.ndarray, dr: int, dc: int) -> np.ndarray:
    out = np.zeros_like(mask)
    h, w = mask.shape
    rs_src = slice(max(0, -dr), min(h, h - dr))
    cs_src = slice(max(0, -dc), min(w, w - dc))
    rs_dst = slice(max(0, dr), min(h, h + dr))
    cs_dst = slice(max(0, dc), min(w, w + dc))
    out[rs_dst, cs_dst] = mask[rs_src, cs_src]
    return out


_CROSS = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))


def dilate_cross(mask: np.ndarray) -> np.ndarray:
    """One binary dilation with the 3x3 cross structuring element."""
    m = np.asarray(mask) != 0
    out = np.zeros_like(m)
    for dr, dc in _CROSS:
        out |= _shifted(m, dr, dc)
    return out.astype(np.uint8)


def erode_cross(mask: np.ndarray) -> np.ndarray:
    """One binary erosion with the 3x3 cross structuring element.

    Cells outside the grid count as background, so the border erodes.
    """
    m = np.asarray(mask) != 0
    out = np.ones_like(m)
    for dr, dc in _CROSS:
        out &= _shifted(m, dr, dc)
    return out.astype(np.uint8)


def perturb_mask(mask: np.ndarray, cfg: AugmentConfig, seed: int) -> np.ndarray:
    """With probability ``mask_perturb_prob``: one dilation or erosion
    (fair coin); otherwise the mask is returned unchanged."""
    rng = np.random.Generator(np.random.PCG64(seed))
    mask = np.asarray(mask)
    if rng.random() >= cfg.mask_perturb_prob:
        return mask.copy()
    if rng.random() < 0.5:
        return dilate_cross(mask)
    return erode_cross(mask)
