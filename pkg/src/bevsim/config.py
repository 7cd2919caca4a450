"""Run configuration: one validated document covering the whole pipeline.

Defaults follow the reference operating point: 0.02 m cells over a
[-5, 5] x [-5, 5] x [-3, 3] m workspace (a 500 x 500 BEV grid), 9
classes including background, a 30-query prediction cap and a 0.8
confidence threshold for evaluation. Config files are JSON documents
with this model's schema; unknown keys are rejected.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import pydantic
from pydantic import BaseModel, ConfigDict, Field

from .augment import AugmentConfig
from .bevgrid import GridSpec
from .errors import ConfigError
from .raycast import NoiseModel, ScanPattern
from .scene import Aabb, ClassSpec, SceneConfig
from .taxonomy import DEFAULT_CLASS_NAMES, Taxonomy


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(_Model):
    x_range: tuple[float, float] = (-5.0, 5.0)
    y_range: tuple[float, float] = (-5.0, 5.0)
    z_range: tuple[float, float] = (-3.0, 3.0)
    cell_size: float = 0.02

    def to_spec(self) -> GridSpec:
        return GridSpec(
            x_range=self.x_range,
            y_range=self.y_range,
            z_range=self.z_range,
            cell_size=self.cell_size,
        )


class ScanConfig(_Model):
    azimuth_start: float = 0.0
    azimuth_end: float = 2.0 * math.pi
    azimuth_count: int = Field(default=720, ge=1)
    elevation_start: float = math.radians(-7.0)
    elevation_end: float = math.radians(52.0)
    elevation_count: int = Field(default=64, ge=1)
    max_range: float = Field(default=30.0, gt=0)
    sensor_z: float = 0.0

    def to_pattern(self) -> ScanPattern:
        return ScanPattern(
            azimuth_start=self.azimuth_start,
            azimuth_end=self.azimuth_end,
            azimuth_count=self.azimuth_count,
            elevation_start=self.elevation_start,
            elevation_end=self.elevation_end,
            elevation_count=self.elevation_count,
            max_range=self.max_range,
        )


class NoiseConfig(_Model):
    range_sigma: float = Field(default=0.005, ge=0)
    dropout_prob: float = Field(default=0.002, ge=0, le=1)

    def to_model(self, seed: int) -> NoiseModel:
        return NoiseModel(range_sigma=self.range_sigma, dropout_prob=self.dropout_prob, seed=seed)


class ClassPlacement(_Model):
    name: str
    kind: str
    count: tuple[int, int]
    size_ranges: tuple[tuple[float, float], tuple[float, float], tuple[float, float]]
    yaw_range: tuple[float, float] = (-math.pi, math.pi)
    dynamic: bool = False


def _default_placements() -> list[ClassPlacement]:
    return [
        ClassPlacement(name="Person", kind="capsule", count=(0, 2), dynamic=True,
                       size_ranges=((0.18, 0.30), (0.18, 0.30), (0.45, 0.65))),
        ClassPlacement(name="Table", kind="box", count=(1, 3),
                       size_ranges=((0.40, 0.90), (0.30, 0.70), (0.30, 0.40))),
        ClassPlacement(name="Chair", kind="box", count=(1, 4),
                       size_ranges=((0.18, 0.30), (0.18, 0.30), (0.35, 0.50))),
        ClassPlacement(name="Shelf", kind="box", count=(0, 2),
                       size_ranges=((0.12, 0.22), (0.35, 0.70), (0.70, 0.95))),
        ClassPlacement(name="Box", kind="box", count=(1, 4),
                       size_ranges=((0.10, 0.30), (0.10, 0.30), (0.10, 0.30))),
        ClassPlacement(name="Robot", kind="cylinder", count=(0, 2), dynamic=True,
                       size_ranges=((0.22, 0.40), (0.22, 0.40), (0.18, 0.35))),
        ClassPlacement(name="Misc", kind="ellipsoid", count=(1, 3),
                       size_ranges=((0.10, 0.35), (0.10, 0.35), (0.10, 0.35))),
    ]


class SceneGenConfig(_Model):
    workspace_lo: tuple[float, float, float] = (-4.8, -4.8, -0.8)
    workspace_hi: tuple[float, float, float] = (4.8, 4.8, 2.4)
    floor_z: float | None = -0.8
    classes: list[ClassPlacement] = Field(default_factory=_default_placements)
    max_attempts: int = Field(default=100, ge=1)

    def to_scene_config(self, taxonomy: Taxonomy, floor_class: str = "Wall") -> SceneConfig:
        specs = tuple(
            ClassSpec(
                class_id=taxonomy.class_id(p.name),
                kind=p.kind,
                count=(p.count[0], p.count[1]),
                size_ranges=tuple((lo, hi) for lo, hi in p.size_ranges),
                yaw_range=p.yaw_range,
                dynamic=p.dynamic,
            )
            for p in self.classes
        )
        return SceneConfig(
            workspace=Aabb(lo=self.workspace_lo, hi=self.workspace_hi),
            classes=specs,
            floor_z=self.floor_z,
            floor_class_id=taxonomy.class_id(floor_class),
            max_attempts=self.max_attempts,
        )


class AugmentSettings(_Model):
    rotation_range: tuple[float, float] = (-math.pi, math.pi)
    jitter_sigma: float = Field(default=0.003, ge=0)
    keep_prob: float = Field(default=0.95, ge=0, le=1)
    global_sigma: float = Field(default=0.005, ge=0)
    drop_prob: float = Field(default=0.02, ge=0, le=1)
    box_location_sigma: float = Field(default=0.02, ge=0)
    box_size_frac_sigma: float = Field(default=0.02, ge=0)
    box_yaw_sigma: float = Field(default=0.02, ge=0)
    insert_count: tuple[int, int] = (0, 0)
    mask_perturb_prob: float = Field(default=0.0, ge=0, le=1)

    def to_config(self) -> AugmentConfig:
        return AugmentConfig(
            rotation_range=self.rotation_range,
            jitter_sigma=self.jitter_sigma,
            keep_prob=self.keep_prob,
            global_sigma=self.global_sigma,
            drop_prob=self.drop_prob,
            box_location_sigma=self.box_location_sigma,
            box_size_frac_sigma=self.box_size_frac_sigma,
            box_yaw_sigma=self.box_yaw_sigma,
            insert_count=self.insert_count,
            mask_perturb_prob=self.mask_perturb_prob,
        )


class EvalConfig(_Model):
    iou_thresholds: tuple[float, ...] = (0.25, 0.5)
    confidence_threshold: float = Field(default=0.8, ge=0, le=1)
    mask_threshold: float = Field(default=0.5, ge=0, le=1)
    n_queries: int = Field(default=30, ge=1)


class RunConfig(_Model):
    grid: GridConfig = Field(default_factory=GridConfig)
    scan: ScanConfig = Field(default_factory=ScanConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    scene: SceneGenConfig = Field(default_factory=SceneGenConfig)
    augment: AugmentSettings = Field(default_factory=AugmentSettings)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES
    split_ratios: tuple[float, float, float] = (0.7, 0.15, 0.15)
    seed: int = Field(default=0, ge=0)

    def taxonomy(self) -> Taxonomy:
        return Taxonomy(names=self.class_names)

    def grid_spec(self) -> GridSpec:
        return self.grid.to_spec()

    def validate_consistency(self) -> "RunConfig":
        # surfaces grid/scene mistakes at load time rather than mid-pipeline
        self.grid.to_spec()
        self.scene.to_scene_config(self.taxonomy())
        return self


def default_config() -> RunConfig:
    return RunConfig()


def load_config(path: str | Path) -> RunConfig:
    """Load and validate a JSON config file.

    Raises:
        ConfigError: unreadable file, schema violation, or inconsistent values.
    """
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return config_from_dict(data, source=str(path))


def config_from_dict(data: dict, source: str = "<inline>") -> RunConfig:
    try:
        return RunConfig.model_validate(data).validate_consistency()
    except pydantic.ValidationError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"{source}: {exc}") from None


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(config.model_dump_json(indent=2) + "\n")
