"""FastAPI service wrapping the training/evaluation stack.

Training can run synchronously (small desk-scale runs) or as a background
job polled via /api/jobs/{id}. Evaluation, comparison, plotting, and replay
inspection are plain request/response.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.responses import Response

from .. import runs
from ..errors import (CheckpointError, ConfigError, ContractError,
                      InfeasibleScenarioError, NumericError, SwarmNavError)
from . import schemas
from .jobs import JobRegistry

VERSION = "0.1.0"

_USAGE_ERRORS = (ConfigError, ContractError, CheckpointError, FileNotFoundError)
_RUNTIME_ERRORS = (NumericError, InfeasibleScenarioError, SwarmNavError)


def _guard(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except _USAGE_ERRORS as e:
        raise HTTPException(status_code=422, detail=f"{type(e).__name__}: {e}")
    except _RUNTIME_ERRORS as e:
        raise HTTPException(status_code=500, detail=f"{type(e).__name__}: {e}")


def create_app() -> FastAPI:
    app = FastAPI(title="swarmnav", version=VERSION)
    app.state.jobs = JobRegistry()

    @app.get("/api/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=VERSION)

    @app.post("/api/train")
    def train(req: schemas.TrainRequest):
        kwargs = dict(config=req.config, config_path=req.config_path,
                      out_dir=req.out_dir, seed=req.seed, variant=req.variant,
                      reward_mode=req.reward_mode)
        if req.background:
            job_id = app.state.jobs.submit(runs.run_train, **kwargs)
            return schemas.JobInfo(job_id=job_id, state="queued")
        summary = _guard(runs.run_train, **kwargs)
        return schemas.TrainResponse(**summary)

    @app.get("/api/jobs/{job_id}", response_model=schemas.JobInfo)
    def job(job_id: str):
        info = app.state.jobs.get(job_id)
        if info is None:
            raise HTTPException(status_code=404, detail=f"no job {job_id!r}")
        return schemas.JobInfo(job_id=job_id, **info)

    @app.post("/api/eval", response_model=schemas.EvalResponse)
    def evaluate(req: schemas.EvalRequest):
        summary = _guard(runs.run_eval, checkpoint=req.checkpoint, config=req.config,
                         config_path=req.config_path, out_dir=req.out_dir,
                         n_trials=req.n_trials, seed=req.seed,
                         deterministic=req.deterministic, workers=req.workers,
                         save_trajectories=req.save_trajectories,
                         stage_index=req.stage_index)
        return schemas.EvalResponse(**summary)

    @app.post("/api/compare", response_model=schemas.CompareResponse)
    def compare(req: schemas.CompareRequest):
        summary = _guard(runs.run_compare, checkpoints=req.checkpoints,
                         labels=req.labels, config=req.config,
                         config_path=req.config_path, out_dir=req.out_dir,
                         n_trials=req.n_trials, seed=req.seed,
                         deterministic=req.deterministic, workers=req.workers,
                         stage_index=req.stage_index)
        return schemas.CompareResponse(**summary)

    @app.post("/api/plot")
    def plot(req: schemas.PlotRequest):
        svg = _guard(runs.run_plot, req.trajectory_path, req.world_path, req.out_path)
        return Response(content=svg, media_type="image/svg+xml")

    @app.post("/api/replay/inspect")
    def replay_inspect(req: schemas.InspectReplayRequest):
        return _guard(runs.inspect_replay, checkpoint=req.checkpoint,
                      config=req.config, config_path=req.config_path,
                      seed=req.seed, max_steps=req.max_steps,
                      post_steps=req.post_steps)

    return app


app = create_app()
