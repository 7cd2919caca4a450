"""Indoor scenes as posed analytic primitives, plus procedural generation.

A scene is immutable once built and safe to share across threads. The
procedural generator places objects uniformly at random inside the
workspace and rejects placements whose bounding spheres touch an already
placed object, so generated scenes never interpenetrate (up to the
conservative sphere bound). Planes model floors/walls and are exempt
from both the collision check and the workspace-containment invariant.

Randomness comes from numpy's PCG64 generator seeded with a 64-bit
integer, which makes generation a pure function of (config, seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, PlacementError
from .geometry import (
    Box,
    Capsule,
    Cylinder,
    Ellipsoid,
    GeometryPrimitive,
    Plane,
    Pose,
    Sphere,
    geometry_from_dict,
    geometry_to_dict,
    local_bounding_radius,
    matrix_to_ypr,
    wrap_angle,
)

DEFAULT_PLACEMENT_ATTEMPTS = 100


@dataclass(frozen=True, eq=False)
class Aabb:
    """Axis-aligned box given by two corners, in meters."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(3)
        hi = np.asarray(self.hi, dtype=float).reshape(3)
        if not np.all(hi > lo):
            raise ConfigError(f"degenerate workspace: lo={lo.tolist()} hi={hi.tolist()}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains_sphere(self, center: np.ndarray, radius: float) -> bool:
        return bool(np.all(center - radius >= self.lo) and np.all(center + radius <= self.hi))


@dataclass(frozen=True, eq=False)
class SceneObject:
    id: int
    class_id: int
    geometry: GeometryPrimitive
    pose: Pose
    dynamic: bool = False

    def __post_init__(self):
        if self.id <= 0:
            raise ValueError(f"object id must be positive, got {self.id}")
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")


def bounding_sphere(obj: SceneObject) -> tuple[np.ndarray, float]:
    """World-frame (center, radius) sphere that encloses the object.

    Radius is inf for planes. Box radii use the corner distance, which is
    the tightest origin-centered bound.
    """
    return obj.pose.translation.copy(), local_bounding_radius(obj.geometry)


@dataclass(frozen=True, eq=False)
class Scene:
    objects: tuple[SceneObject, ...]
    workspace: Aabb
    seed: int = 0

    def __post_init__(self):
        objects = tuple(self.objects)
        ids = [o.id for o in objects]
        if len(set(ids)) != len(ids):
            raise ValueError("scene object ids must be unique")
        for obj in objects:
            if isinstance(obj.geometry, Plane):
                continue
            center, radius = bounding_sphere(obj)
            if not self.workspace.contains_sphere(center, radius):
                raise ValueError(
                    f"object {obj.id} (radius {radius:.3f}) does not fit in the workspace"
                )
        object.__setattr__(self, "objects", objects)

    def __len__(self) -> int:
        return len(self.objects)


@dataclass(frozen=True)
class ClassSpec:
    """Placement rules for one object class.

    ``size_ranges`` is three (lo, hi) pairs in meters whose meaning depends
    on ``kind``:

    - sphere:    (radius, -, -)
    - box:       (half_x, half_y, half_z)
    - cylinder:  (radius, -, half_height)
    - capsule:   (radius, -, half_length)
    - ellipsoid: (radius_x, radius_y, radius_z)
    """

    class_id: int
    kind: str
    count: tuple[int, int]
    size_ranges: tuple[tuple[float, float], ...]
    yaw_range: tuple[float, float] = (-math.pi, math.pi)
    dynamic: bool = False

    def __post_init__(self):
        if self.kind not in ("sphere", "box", "cylinder", "capsule", "ellipsoid"):
            raise ConfigError(f"cannot procedurally place geometry kind {self.kind!r}")
        if self.count[0] < 0 or self.count[1] < self.count[0]:
            raise ConfigError(f"bad count range {self.count}")
        if len(self.size_ranges) != 3:
            raise ConfigError("size_ranges needs three (lo, hi) pairs")
        for lo, hi in self.size_ranges:
            if not (0.0 < lo <= hi):
                raise ConfigError(f"bad size range ({lo}, {hi})")


@dataclass(frozen=True)
class SceneConfig:
    workspace: Aabb
    classes: tuple[ClassSpec, ...]
    floor_z: float | None = None
    floor_class_id: int = 0
    max_attempts: int = DEFAULT_PLACEMENT_ATTEMPTS


def _sample_geometry(spec: ClassSpec, rng: np.random.Generator) -> GeometryPrimitive:
    s = [rng.uniform(lo, hi) for lo, hi in spec.size_ranges]
    if spec.kind == "sphere":
        return Sphere(radius=s[0])
    if spec.kind == "box":
        return Box(half_extents=(s[0], s[1], s[2]))
    if spec.kind == "cylinder":
        return Cylinder(radius=s[0], half_height=s[2])
    if spec.kind == "capsule":
        return Capsule(radius=s[0], half_length=s[2])
    return Ellipsoid(radii=(s[0], s[1], s[2]))


def generate_scene(config: SceneConfig, seed: int) -> Scene:
    """Procedurally generate a scene; pure function of (config, seed).

    Objects are placed class by class in config order. Each placement
    draws a geometry, yaw and center, then is accepted only if its
    bounding sphere is strictly disjoint from every object placed so far.

    Raises:
        PlacementError: an object could not be placed within
            ``config.max_attempts`` tries.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    ws = config.workspace
    objects: list[SceneObject] = []
    placed: list[tuple[np.ndarray, float]] = []  # (center, radius), planes excluded
    next_id = 1

    if config.floor_z is not None:
        floor = Plane(normal=(0.0, 0.0, 1.0), offset=-float(config.floor_z))
        objects.append(
            SceneObject(id=next_id, class_id=config.floor_class_id, geometry=floor, pose=Pose.identity())
        )
        next_id += 1

    for spec in config.classes:
        count = int(rng.integers(spec.count[0], spec.count[1] + 1))
        for _ in range(count):
            for _attempt in range(config.max_attempts):
                geom = _sample_geometry(spec, rng)
                radius = local_bounding_radius(geom)
                lo = ws.lo + radius
                hi = ws.hi - radius
                if not np.all(hi > lo):
                    continue  # object too large for the workspace, resample
                center = rng.uniform(lo, hi)
                yaw = rng.uniform(spec.yaw_range[0], spec.yaw_range[1])
                if all(np.linalg.norm(center - c) > radius + r for c, r in placed):
                    pose = Pose.from_ypr(translation=center, yaw=yaw)
                    objects.append(
                        SceneObject(
                            id=next_id,
                            class_id=spec.class_id,
                            geometry=geom,
                            pose=pose,
                            dynamic=spec.dynamic,
                        )
                    )
                    placed.append((center, radius))
                    next_id += 1
                    break
            else:
                raise PlacementError(f"class {spec.class_id} ({spec.kind})", config.max_attempts)

    return Scene(objects=tuple(objects), workspace=ws, seed=seed)


# --- JSON serialization ----------------------------------------------------
#
# Schema (units: meters, radians):
#   {"seed": u64,
#    "workspace": {"lo": [x, y, z], "hi": [x, y, z]},
#    "objects": [{"id": int, "class_id": int, "dynamic": bool,
#                 "geometry": {"kind": ..., <params>},
#                 "pose": {"translation": [x, y, z],
#                          "yaw": r, "pitch": r, "roll": r}}]}


def scene_to_dict(scene: Scene) -> dict:
    objs = []
    for obj in scene.objects:
        yaw, pitch, roll = matrix_to_ypr(obj.pose.rotation)
        objs.append(
            {
                "id": obj.id,
                "class_id": obj.class_id,
                "dynamic": obj.dynamic,
                "geometry": geometry_to_dict(obj.geometry),
                "pose": {
                    "translation": obj.pose.translation.tolist(),
                    "yaw": yaw,
                    "pitch": pitch,
                    "roll": roll,
                },
            }
        )
    return {
        "seed": scene.seed,
        "workspace": {"lo": scene.workspace.lo.tolist(), "hi": scene.workspace.hi.tolist()},
        "objects": objs,
    }


def scene_from_dict(data: dict) -> Scene:
    ws = Aabb(lo=data["workspace"]["lo"], hi=data["workspace"]["hi"])
    objects = []
    for od in data["objects"]:
        pose = Pose.from_ypr(
            translation=od["pose"]["translation"],
            yaw=od["pose"]["yaw"],
            pitch=od["pose"].get("pitch", 0.0),
            roll=od["pose"].get("roll", 0.0),
        )
        objects.append(
            SceneObject(
                id=od["id"],
                class_id=od["class_id"],
                geometry=geometry_from_dict(od["geometry"]),
                pose=pose,
                dynamic=od.get("dynamic", False),
            )
        )
    return Scene(objects=tuple(objects), workspace=ws, seed=data.get("seed", 0))


def save_scene(scene: Scene, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2) + "\n")


def load_scene(path: str | Path) -> Scene:
    return scene_from_dict(json.loads(Path(path).read_text()))


def object_yaw(obj: SceneObject) -> float:
    """Yaw of an object's pose, wrapped to [-pi, pi)."""
    return wrap_angle(matrix_to_ypr(obj.pose.rotation)[0])
