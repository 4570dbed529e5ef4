"""HTTP service exposing the audit pipeline to multiple clients.

Each endpoint takes a full experiment config, runs the corresponding
pipeline synchronously, writes artifacts under the config's output
directory on the server, and returns the report plus the written paths.
"""

from __future__ import annotations

import json
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import runner
from .config import TOOL_VERSION, ExperimentConfig

app = FastAPI(
    title="dualview audit service",
    description="Membership-privacy auditing of machine unlearning via dual-view queries",
    version=TOOL_VERSION,
)


class RunRequest(BaseModel):
    config: ExperimentConfig
    write: bool = True  # persist artifacts under config.output_dir


class UnlearnRequest(RunRequest):
    checkpoint_path: Optional[str] = None


class AttackRequest(RunRequest):
    stats_path: Optional[str] = None  # reuse a persisted shadow-stats file


class SweepRequest(RunRequest):
    ratios: list[float] = Field(default_factory=lambda: [0.025, 0.05, 0.10])


class RunResponse(BaseModel):
    config_hash: str
    report: dict
    artifacts: list[str]


class HealthResponse(BaseModel):
    status: str
    version: str


def _finish(cfg: ExperimentConfig, out: runner.RunOutput, write: bool) -> RunResponse:
    paths = runner.write_outputs(cfg.output_dir, out) if write else []
    return RunResponse(config_hash=cfg.config_hash(), report=out.report, artifacts=paths)


def _run(fn, cfg: ExperimentConfig, write: bool, *args, **kwargs) -> RunResponse:
    try:
        out = fn(cfg, *args, **kwargs)
    except (ValueError, FileNotFoundError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except RuntimeError as exc:
        raise HTTPException(status_code=500, detail=str(exc)) from exc
    return _finish(cfg, out, write)


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=TOOL_VERSION)


@app.post("/train", response_model=RunResponse)
def train_endpoint(req: RunRequest) -> RunResponse:
    return _run(runner.run_train, req.config, req.write)


@app.post("/unlearn", response_model=RunResponse)
def unlearn_endpoint(req: UnlearnRequest) -> RunResponse:
    return _run(runner.run_unlearn, req.config, req.write, checkpoint_path=req.checkpoint_path)


@app.post("/attack", response_model=RunResponse)
def attack_endpoint(req: AttackRequest) -> RunResponse:
    stats_payload = None
    if req.stats_path is not None:
        try:
            with open(req.stats_path, "r", encoding="utf-8") as fh:
                stats_payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise HTTPException(status_code=400, detail=f"cannot read stats file: {exc}") from exc
    return _run(runner.run_attack, req.config, req.write, stats_payload=stats_payload)


@app.post("/gain", response_model=RunResponse)
def gain_endpoint(req: RunRequest) -> RunResponse:
    return _run(runner.run_gain, req.config, req.write)


@app.post("/sweep", response_model=RunResponse)
def sweep_endpoint(req: SweepRequest) -> RunResponse:
    return _run(runner.run_sweep, req.config, req.write, ratios=req.ratios)


@app.post("/export-densities", response_model=RunResponse)
def export_densities_endpoint(req: RunRequest) -> RunResponse:
    return _run(runner.run_export_densities, req.config, req.write)
