"""Rigid poses and analytic geometry primitives.

All primitives are defined in their own local frame, centered at the
origin (a plane is the exception: it is the zero set of n.p + d).
Units are meters and radians throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

ORTHONORMAL_TOL = 1e-9

TWO_PI = 2.0 * math.pi


def wrap_angle(angle: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return float(angle - TWO_PI * math.floor((angle + math.pi) / TWO_PI))


def angle_diff(a: float, b: float) -> float:
    """Smallest signed difference a - b, wrapped to (-pi, pi]."""
    d = math.fmod(a - b, TWO_PI)
    if d > math.pi:
        d -= TWO_PI
    elif d <= -math.pi:
        d += TWO_PI
    return float(d)


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def ypr_to_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Intrinsic Z-Y-X rotation: R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def matrix_to_ypr(rotation: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`ypr_to_matrix` (gimbal-lock convention: roll = 0)."""
    r = np.asarray(rotation, dtype=float)
    pitch = math.asin(max(-1.0, min(1.0, -r[2, 0])))
    if abs(r[2, 0]) > 1.0 - 1e-12:
        # Degenerate: only yaw +/- roll is observable; put it all in yaw.
        yaw = math.atan2(-r[0, 1], r[1, 1])
        roll = 0.0
    else:
        yaw = math.atan2(r[1, 0], r[0, 0])
        roll = math.atan2(r[2, 1], r[2, 2])
    return yaw, pitch, roll


def _check_rotation(rotation: np.ndarray) -> None:
    err = np.abs(rotation @ rotation.T - np.eye(3)).max()
    if err > ORTHONORMAL_TOL:
        raise ValueError(f"rotation is not orthonormal (max deviation {err:.2e})")
    det = float(np.linalg.det(rotation))
    if abs(det - 1.0) > ORTHONORMAL_TOL:
        raise ValueError(f"rotation determinant is {det}, expected +1")


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: x_world = rotation @ x_local + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        tr = np.asarray(self.translation, dtype=float).reshape(3)
        _check_rotation(rot)
        rot.flags.writeable = False
        tr.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_ypr(
        cls,
        translation=(0.0, 0.0, 0.0),
        yaw: float = 0.0,
        pitch: float = 0.0,
        roll: float = 0.0,
    ) -> "Pose":
        return cls(rotation=ypr_to_matrix(yaw, pitch, roll), translation=np.asarray(translation, dtype=float))

    def compose(self, other: "Pose") -> "Pose":
        """self @ other (apply ``other`` first, then ``self``)."""
        return Pose(
            rotation=self.rotation @ other.rotation,
            translation=self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "Pose":
        rt = self.rotation.T.copy()
        return Pose(rotation=rt, translation=-(rt @ self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def apply_vector(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate direction vectors of shape (..., 3) (no translation)."""
        return np.asarray(vectors, dtype=float) @ self.rotation.T

    def ypr(self) -> tuple[float, float, float]:
        return matrix_to_ypr(self.rotation)

    def almost_equal(self, other: "Pose", tol: float = 1e-9) -> bool:
        return (
            np.abs(self.rotation - other.rotation).max() <= tol
            and np.abs(self.translation - other.translation).max() <= tol
        )


def _positive(name: str, *values: float) -> None:
    for v in values:
        if not v > 0.0:
            raise ValueError(f"{name} must be strictly positive, got {v}")


@dataclass(frozen=True, eq=False)
class Plane:
    """Zero set of normal . p + offset = 0; the half-space normal . p + offset > 0 is outside."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = float(np.linalg.norm(n))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"plane normal must be unit length, got |n| = {norm}")
        n.flags.writeable = False
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))


@dataclass(frozen=True)
class Sphere:
    radius: float

    def __post_init__(self):
        _positive("radius", self.radius)


@dataclass(frozen=True, eq=False)
class Box:
    half_extents: np.ndarray

    def __post_init__(self):
        he = np.asarray(self.half_extents, dtype=float).reshape(3)
        _positive("half_extents", *he)
        he.flags.writeable = False
        object.__setattr__(self, "half_extents", he)


@dataclass(frozen=True)
class Cylinder:
    """Finite closed cylinder along the local z axis."""

    radius: float
    half_height: float

    def __post_init__(self):
        _positive("radius", self.radius)
        _positive("half_height", self.half_height)


@dataclass(frozen=True)
class Capsule:
    """Cylinder of ``half_length`` along local z with hemispherical caps."""

    radius: float
    half_length: float

    def __post_init__(self):
        _positive("radius", self.radius)
        _positive("half_length", self.half_length)


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    radii: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float).reshape(3)
        _positive("radii", *r)
        r.flags.writeable = False
        object.__setattr__(self, "radii", r)


GeometryPrimitive = Union[Plane, Sphere, Box, Cylinder, Capsule, Ellipsoid]

#: Geometry kind tags, shared with the disk format and the numba kernels.
GEOMETRY_KINDS = ("plane", "sphere", "box", "cylinder", "capsule", "ellipsoid")


def geometry_kind(geom: GeometryPrimitive) -> str:
    return type(geom).__name__.lower()


def local_bounding_radius(geom: GeometryPrimitive) -> float:
    """Radius of the smallest origin-centered sphere used for culling.

    Exact for spheres, cylinders, capsules and ellipsoids; for boxes it is
    the corner distance |half_extents| (minimal for the centered box).
    Planes are unbounded and return inf.
    """
    if isinstance(geom, Plane):
        return math.inf
    if isinstance(geom, Sphere):
        return geom.radius
    if isinstance(geom, Box):
        return float(np.linalg.norm(geom.half_extents))
    if isinstance(geom, Cylinder):
        return math.hypot(geom.radius, geom.half_height)
    if isinstance(geom, Capsule):
        return geom.radius + geom.half_length
    if isinstance(geom, Ellipsoid):
        return float(np.max(geom.radii))
    raise TypeError(f"unknown geometry {type(geom).__name__}")


def implicit_value(geom: GeometryPrimitive, points: np.ndarray) -> np.ndarray:
    """Implicit surface function: negative inside, zero on the surface.

    For sphere/box/cylinder/capsule the value is a true signed distance
    (outside); for ellipsoid it is the quadratic form minus one and for
    planes the signed plane equation. Only the sign and the zero set are
    contractual.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    if isinstance(geom, Plane):
        out = p @ geom.normal + geom.offset
    elif isinstance(geom, Sphere):
        out = np.linalg.norm(p, axis=-1) - geom.radius
    elif isinstance(geom, Box):
        d = np.abs(p) - geom.half_extents
        out = np.max(d, axis=-1)
    elif isinstance(geom, Cylinder):
        radial = np.hypot(x, y) - geom.radius
        out = np.maximum(radial, np.abs(z) - geom.half_height)
    elif isinstance(geom, Capsule):
        cz = np.clip(z, -geom.half_length, geom.half_length)
        out = np.sqrt(x * x + y * y + (z - cz) ** 2) - geom.radius
    elif isinstance(geom, Ellipsoid):
        a, b, c = geom.radii
        out = (x / a) ** 2 + (y / b) ** 2 + (z / c) ** 2 - 1.0
    else:
        raise TypeError(f"unknown geometry {type(geom).__name__}")
    if np.ndim(points) == 1:
        return out[0]
    return out


def geometry_to_dict(geom: GeometryPrimitive) -> dict:
    kind = geometry_kind(geom)
    if isinstance(geom, Plane):
        params = {"normal": geom.normal.tolist(), "offset": geom.offset}
    elif isinstance(geom, Sphere):
        params = {"radius": geom.radius}
    elif isinstance(geom, Box):
        params = {"half_extents": geom.half_extents.tolist()}
    elif isinstance(geom, Cylinder):
        params = {"radius": geom.radius, "half_height": geom.half_height}
    elif isinstance(geom, Capsule):
        params = {"radius": geom.radius, "half_length": geom.half_length}
    else:
        params = {"radii": geom.radii.tolist()}
    return {"kind": kind, **params}


def geometry_from_dict(data: dict) -> GeometryPrimitive:
    kind = data.get("kind")
    params = {k: v for k, v in data.items() if k != "kind"}
    ctor = {
        "plane": Plane,
        "sphere": Sphere,
        "box": Box,
        "cylinder": Cylinder,
        "capsule": Capsule,
        "ellipsoid": Ellipsoid,
    }.get(kind)
    if ctor is None:
        raise ValueError(f"unknown geometry kind {kind!r}")
    return ctor(**params)
