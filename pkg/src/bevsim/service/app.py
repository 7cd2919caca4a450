"""FastAPI service wrapping the simulation/evaluation pipeline."""

from __future__ import annotations

import base64
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, pipeline
from ..config import RunConfig, config_from_dict, load_config
from ..dataio import write_cloud
from ..errors import BevSimError, ConfigError, DataError
from ..geometry import Pose
from ..scene import load_scene, scene_from_dict
from . import schemas


def _resolve_config(req: schemas._Request) -> RunConfig:
    if req.config is not None and req.config_path is not None:
        raise ConfigError("give either an inline config or a config_path, not both")
    if req.config is not None:
        return config_from_dict(req.config)
    if req.config_path is not None:
        return load_config(req.config_path)
    return RunConfig()


def create_app() -> FastAPI:
    app = FastAPI(title="bevsim", version=__version__)

    @app.exception_handler(ConfigError)
    async def _config_error(_request: Request, exc: ConfigError):
        return JSONResponse(status_code=400, content={"error": str(exc), "kind": "config"})

    @app.exception_handler(DataError)
    async def _data_error(_request: Request, exc: DataError):
        return JSONResponse(status_code=409, content={"error": str(exc), "kind": "data"})

    @app.exception_handler(BevSimError)
    async def _other_error(_request: Request, exc: BevSimError):
        return JSONResponse(status_code=500, content={"error": str(exc), "kind": "internal"})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/config")
    def default_config():
        return RunConfig().model_dump(mode="json")

    @app.post("/generate", response_model=schemas.GenerateResponse)
    def generate(req: schemas.GenerateRequest):
        config = _resolve_config(req)
        report = pipeline.generate_dataset(config, count=req.count, out_dir=req.out_dir, seed=req.seed)
        return schemas.GenerateResponse(**report)

    @app.post("/scan", response_model=schemas.ScanResponse)
    def scan(req: schemas.ScanRequest):
        config = _resolve_config(req)
        if (req.scene_path is None) == (req.scene is None):
            raise ConfigError("give exactly one of scene_path or an inline scene")
        try:
            scene = load_scene(req.scene_path) if req.scene_path else scene_from_dict(req.scene)
        except (OSError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"cannot load scene: {exc}") from None
        pose = None
        if req.sensor_pose is not None:
            p = req.sensor_pose
            pose = Pose.from_ypr(translation=p.translation, yaw=p.yaw, pitch=p.pitch, roll=p.roll)
        result = pipeline.scan_scene_to_cloud(config, scene, sensor_pose=pose, seed=req.seed)
        out_path = None
        points_b64 = None
        if req.out_path:
            Path(req.out_path).parent.mkdir(parents=True, exist_ok=True)
            write_cloud(result.cloud, req.out_path)
            out_path = req.out_path
        if req.return_points:
            raw = np.ascontiguousarray(result.cloud.points, dtype="<f4").tobytes()
            points_b64 = base64.b64encode(raw).decode("ascii")
        return schemas.ScanResponse(n_points=len(result.cloud), out_path=out_path, points_b64=points_b64)

    @app.post("/rasterize", response_model=schemas.RasterizeResponse)
    def rasterize(req: schemas.RasterizeRequest):
        config = _resolve_config(req)
        report = pipeline.rasterize_dataset(config, req.dataset_dir, req.out_dir, split=req.split)
        return schemas.RasterizeResponse(**report)

    @app.post("/augment", response_model=schemas.AugmentResponse)
    def augment(req: schemas.AugmentRequest):
        config = _resolve_config(req)
        report = pipeline.augment_dataset(
            config, req.dataset_dir, req.out_dir, seed=req.seed, split=req.split
        )
        return schemas.AugmentResponse(**report)

    @app.post("/eval")
    def evaluate(req: schemas.EvalRequest):
        config = _resolve_config(req)
        return pipeline.evaluate_dirs(config, req.pred_dir, req.gt_dir)

    @app.post("/bench")
    def bench(req: schemas.BenchRequest):
        _resolve_config(req)  # validates config if provided; bench has no knobs in it yet
        return pipeline.run_bench(
            rays=req.rays,
            objects=req.objects,
            workers=req.workers,
            repeats=req.repeats,
            seed=req.seed,
        )

    return app
