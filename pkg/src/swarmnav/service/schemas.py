"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class TrainRequest(BaseModel):
    config: Optional[dict] = None
    config_path: Optional[str] = None
    out_dir: str = "run"
    seed: Optional[int] = None
    variant: Optional[str] = None
    reward_mode: Optional[str] = None
    background: bool = False


class TrainResponse(BaseModel):
    out_dir: str
    checkpoints: list[str]
    curves_path: str
    manifest_path: str
    final_sr: Optional[float] = None
    first_mean_reward: float
    best_mean_reward: float
    iterations_run: int
    stage_reached: int


class JobInfo(BaseModel):
    job_id: str
    state: str                      # queued | running | done | error
    result: Optional[dict] = None
    error: Optional[str] = None


class MetricsModel(BaseModel):
    sr: float
    cr: float
    tr: float
    avg_steps: Optional[float] = None
    n_trials: int
    n_agents: int


class EvalRequest(BaseModel):
    checkpoint: str
    config: Optional[dict] = None
    config_path: Optional[str] = None
    out_dir: Optional[str] = None
    n_trials: Optional[int] = None
    seed: Optional[int] = None
    deterministic: Optional[bool] = None
    workers: int = 1
    save_trajectories: Optional[int] = None
    stage_index: Optional[int] = None


class EvalResponse(BaseModel):
    metrics: MetricsModel
    checkpoint: str
    n_trials: int
    seed: int
    deterministic: bool
    manifest_path: Optional[str] = None


class CompareRequest(BaseModel):
    checkpoints: list[str] = Field(min_length=1)
    labels: Optional[list[str]] = None
    config: Optional[dict] = None
    config_path: Optional[str] = None
    out_dir: Optional[str] = None
    n_trials: Optional[int] = None
    seed: Optional[int] = None
    deterministic: Optional[bool] = None
    workers: int = 1
    stage_index: Optional[int] = None


class CompareResponse(BaseModel):
    rows: list[dict]
    world_hashes_equal: bool
    table: str
    manifest_path: Optional[str] = None


class PlotRequest(BaseModel):
    trajectory_path: str
    world_path: str
    out_path: Optional[str] = None


class InspectReplayRequest(BaseModel):
    checkpoint: str
    config: Optional[dict] = None
    config_path: Optional[str] = None
    seed: int = 0
    max_steps: int = 2000
    post_steps: int = 10


class ErrorResponse(BaseModel):
    detail: str
    kind: str = "runtime"


AnyDict = dict[str, Any]
