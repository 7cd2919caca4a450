"""Indoor lidar simulation, BEV ground truth, and mask-based evaluation."""

__version__ = "0.1.0"

from .errors import (
    BevSimError,
    ConfigError,
    DataError,
    DataFormatError,
    PlacementError,
)
from .geometry import (
    Box,
    Capsule,
    Cylinder,
    Ellipsoid,
    GeometryPrimitive,
    Plane,
    Pose,
    Sphere,
)
from .raycast import (
    NoiseModel,
    PointCloud,
    Ray,
    ScanPattern,
    cast_rays,
    cast_scan,
    intersect,
    ray_directions,
    ray_march_oracle,
)
from .scene import (
    Aabb,
    ClassSpec,
    Scene,
    SceneConfig,
    SceneObject,
    bounding_sphere,
    generate_scene,
    load_scene,
    save_scene,
)

__all__ = [
    "Aabb",
    "BevSimError",
    "Box",
    "Capsule",
    "ClassSpec",
    "ConfigError",
    "Cylinder",
    "DataError",
    "DataFormatError",
    "Ellipsoid",
    "GeometryPrimitive",
    "NoiseModel",
    "Plane",
    "PlacementError",
    "PointCloud",
    "Pose",
    "Ray",
    "ScanPattern",
    "Scene",
    "SceneConfig",
    "SceneObject",
    "Sphere",
    "bounding_sphere",
    "cast_rays",
    "cast_scan",
    "generate_scene",
    "intersect",
    "load_scene",
    "ray_directions",
    "ray_march_oracle",
    "save_scene",
]
