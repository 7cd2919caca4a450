"""Request/response models for the HTTP service.

Every pipeline request accepts either an inline ``config`` document
(the RunConfig schema) or a server-side ``config_path``; with neither,
the service defaults apply. Directory and file paths are interpreted on
the server's filesystem.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class _Request(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: dict | None = None
    config_path: str | None = None


class HealthResponse(BaseModel):
    status: str
    version: str


class GenerateRequest(_Request):
    count: int = Field(ge=1)
    out_dir: str
    seed: int | None = Field(default=None, ge=0)


class GenerateResponse(BaseModel):
    out_dir: str
    frames: int
    splits: dict[str, int]
    seconds_total: float
    seconds_per_frame: list[float]
    rays_per_frame: int


class PoseSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0


class ScanRequest(_Request):
    scene_path: str | None = None
    scene: dict | None = None
    sensor_pose: PoseSpec | None = None
    seed: int | None = Field(default=None, ge=0)
    out_path: str | None = None
    return_points: bool = False


class ScanResponse(BaseModel):
    n_points: int
    out_path: str | None = None
    points_b64: str | None = None  # raw .bin payload (little-endian float32 x,y,z,intensity)


class RasterizeRequest(_Request):
    dataset_dir: str
    out_dir: str
    split: str | None = None


class RasterizeResponse(BaseModel):
    out_dir: str
    written: int
    frames: list[str]
    failures: list[dict]
    grid: list[int]


class AugmentRequest(_Request):
    dataset_dir: str
    out_dir: str
    seed: int | None = Field(default=None, ge=0)
    split: str | None = None


class AugmentResponse(BaseModel):
    out_dir: str
    frames: int


class EvalRequest(_Request):
    pred_dir: str
    gt_dir: str


class BenchRequest(_Request):
    rays: int = Field(default=100_000, ge=1)
    objects: int = Field(default=50, ge=1)
    workers: tuple[int, ...] = (1, 8)
    repeats: int = Field(default=3, ge=1)
    seed: int = Field(default=0, ge=0)


class ErrorBody(BaseModel):
    error: str
    kind: str  # "config" | "data" | "internal"
