"""Spherical-grid lidar scanning with analytic closest-hit selection.

A scan emits one ray per (elevation, azimuth) grid cell from the sensor
pose, intersects every ray against all scene primitives in their local
frames, keeps the closest hit within range, applies the noise model and
returns the surviving hit points in the sensor frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError
from .geometry import (
    Box,
    Capsule,
    Cylinder,
    Ellipsoid,
    GeometryPrimitive,
    Plane,
    Pose,
    Sphere,
    local_bounding_radius,
)
from .scene import Scene

#: Minimum accepted hit distance; guards against self-hits at the origin.
T_EPSILON = 1e-6


@dataclass(frozen=True)
class ScanPattern:
    """Regular spherical ray grid.

    Azimuth samples are ``start + k * (end - start) / count`` for
    k = 0..count-1 (end exclusive, natural for a periodic sweep);
    elevation samples include both endpoints (a single sample sits at
    ``elevation_start``). Rays are ordered row-major over
    (elevation, azimuth).
    """

    azimuth_start: float = 0.0
    azimuth_end: float = 2.0 * math.pi
    azimuth_count: int = 512
    elevation_start: float = 0.0
    elevation_end: float = 0.0
    elevation_count: int = 1
    max_range: float = 30.0

    def __post_init__(self):
        if self.azimuth_count < 1 or self.elevation_count < 1:
            raise ConfigError("ray counts must be >= 1")
        if not self.max_range > 0.0:
            raise ConfigError("max_range must be positive")

    @property
    def n_rays(self) -> int:
        return self.azimuth_count * self.elevation_count

    def azimuths(self) -> np.ndarray:
        step = (self.azimuth_end - self.azimuth_start) / self.azimuth_count
        return self.azimuth_start + step * np.arange(self.azimuth_count)

    def elevations(self) -> np.ndarray:
        if self.elevation_count == 1:
            return np.array([self.elevation_start])
        return np.linspace(self.elevation_start, self.elevation_end, self.elevation_count)


@dataclass(frozen=True, eq=False)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=float).reshape(3)
        d = np.asarray(self.direction, dtype=float).reshape(3)
        norm = float(np.linalg.norm(d))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"ray direction must be unit length, got |d| = {norm}")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class NoiseModel:
    """Additive Gaussian range noise plus independent per-ray dropout."""

    range_sigma: float = 0.0
    dropout_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.range_sigma < 0.0:
            raise ConfigError("range_sigma must be >= 0")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ConfigError("dropout_prob must be in [0, 1]")


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N x (x, y, z, intensity) records; coordinates in meters."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 4)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite values")
        if len(pts) and (pts[:, 3].min() < 0.0 or pts[:, 3].max() > 1.0):
            raise ValueError("intensity must lie in [0, 1]")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(points=np.empty((0, 4)))


@dataclass(frozen=True, eq=False)
class ScanResult:
    """Point cloud plus per-point provenance (emitting ray, hit object)."""

    cloud: PointCloud
    ray_indices: np.ndarray
    object_indices: np.ndarray


def ray_directions(pattern: ScanPattern) -> np.ndarray:
    """Unit directions (cos el cos az, cos el sin az, sin el), row-major
    over (elevation, azimuth)."""
    az = pattern.azimuths()
    el = pattern.elevations()
    el_grid = np.repeat(el, len(az))
    az_grid = np.tile(az, len(el))
    cos_el = np.cos(el_grid)
    return np.column_stack((cos_el * np.cos(az_grid), cos_el * np.sin(az_grid), np.sin(el_grid)))


def _encode_geometry(geom: GeometryPrimitive) -> tuple[int, np.ndarray]:
    params = np.zeros(4)
    if isinstance(geom, Plane):
        params[:3] = geom.normal
        params[3] = geom.offset
        return _kernels.GEOM_PLANE, params
    if isinstance(geom, Sphere):
        params[0] = geom.radius
        return _kernels.GEOM_SPHERE, params
    if isinstance(geom, Box):
        params[:3] = geom.half_extents
        return _kernels.GEOM_BOX, params
    if isinstance(geom, Cylinder):
        params[0] = geom.radius
        params[1] = geom.half_height
        return _kernels.GEOM_CYLINDER, params
    if isinstance(geom, Capsule):
        params[0] = geom.radius
        params[1] = geom.half_length
        return _kernels.GEOM_CAPSULE, params
    if isinstance(geom, Ellipsoid):
        params[:3] = geom.radii
        return _kernels.GEOM_ELLIPSOID, params
    raise TypeError(f"unknown geometry {type(geom).__name__}")


def intersect(ray: Ray, geom: GeometryPrimitive, t_eps: float = T_EPSILON) -> float | None:
    """Smallest surface-crossing distance t > t_eps, or None for a miss.

    The ray must already be expressed in the primitive's local frame.
    A ray starting inside a solid reports its exit crossing.
    """
    gtype, p = _encode_geometry(geom)
    o, d = ray.origin, ray.direction
    t = _kernels.intersect_local(
        gtype, o[0], o[1], o[2], d[0], d[1], d[2], p[0], p[1], p[2], p[3], t_eps
    )
    return float(t) if t > 0.0 else None


def ray_march_oracle(
    ray: Ray,
    geom: GeometryPrimitive,
    step: float,
    t_max: float = 50.0,
    t_eps: float = T_EPSILON,
) -> float | None:
    """Sign-change scan of the implicit function, refined by bisection.

    Deliberately independent of the analytic solvers; meant as a slow
    reference for testing them. Resolution is limited by ``step``:
    features narrower than one step can be missed.
    """
    if not step > 0.0:
        raise ValueError("step must be positive")
    gtype, p = _encode_geometry(geom)
    o, d = ray.origin, ray.direction
    t = _kernels.march_local(
        gtype, o[0], o[1], o[2], d[0], d[1], d[2], p[0], p[1], p[2], p[3], step, t_eps, t_max
    )
    return float(t) if t > 0.0 else None


def _encode_scene(scene: Scene, sensor_pose: Pose):
    n = len(scene.objects)
    gtypes = np.empty(n, dtype=np.int64)
    params = np.zeros((n, 4))
    rot_inv = np.empty((n, 3, 3))
    local_origins = np.empty((n, 3))
    cull = np.empty(n)
    origin_world = sensor_pose.translation
    for j, obj in enumerate(scene.objects):
        gtypes[j], params[j] = _encode_geometry(obj.geometry)
        r_inv = obj.pose.rotation.T
        rot_inv[j] = r_inv
        local_origins[j] = r_inv @ (origin_world - obj.pose.translation)
        radius = local_bounding_radius(obj.geometry)
        cull[j] = -1.0 if math.isinf(radius) else radius
    return gtypes, params, rot_inv, local_origins, cull


def cast_rays(
    scene: Scene,
    sensor_pose: Pose,
    pattern: ScanPattern,
    noise: NoiseModel = NoiseModel(),
) -> ScanResult:
    """Scan the scene and keep per-point provenance.

    Returns hit points in the sensor frame, ordered by ray index. Range
    noise perturbs the hit distance along the ray after closest-hit
    selection; dropout then removes rays. Intensity is
    clamp(1 - t / max_range, 0, 1) of the recorded (noisy) distance.
    """
    dirs_sensor = ray_directions(pattern)
    dirs_world = dirs_sensor @ sensor_pose.rotation.T
    gtypes, params, rot_inv, local_origins, cull = _encode_scene(scene, sensor_pose)

    n = len(dirs_sensor)
    out_t = np.empty(n)
    out_obj = np.empty(n, dtype=np.int64)
    if len(scene.objects) == 0:
        out_t.fill(-1.0)
        out_obj.fill(-1)
    else:
        _kernels.cast_kernel(
            dirs_world,
            local_origins,
            rot_inv,
            gtypes,
            params,
            cull,
            T_EPSILON,
            pattern.max_range,
            noise.range_sigma,
            noise.dropout_prob,
            np.uint64(noise.seed & 0xFFFFFFFFFFFFFFFF),
            out_t,
            out_obj,
        )

    hit = out_t > 0.0
    t_hit = out_t[hit]
    xyz = dirs_sensor[hit] * t_hit[:, None]
    intensity = np.clip(1.0 - t_hit / pattern.max_range, 0.0, 1.0)
    points = np.column_stack((xyz, intensity))
    return ScanResult(
        cloud=PointCloud(points=points),
        ray_indices=np.nonzero(hit)[0],
        object_indices=out_obj[hit],
    )


def cast_scan(
    scene: Scene,
    sensor_pose: Pose,
    pattern: ScanPattern,
    noise: NoiseModel = NoiseModel(),
) -> PointCloud:
    """One point per ray that hits within max_range, in the sensor frame."""
    return cast_rays(scene, sensor_pose, pattern, noise).cloud


def set_worker_threads(workers: int) -> int:
    """Set the number of kernel threads; returns the effective count.

    Requests above the host's available thread budget are clamped.
    """
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    if not _kernels.HAVE_NUMBA:
        return 1
    import numba

    effective = min(workers, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(effective)
    return effective
