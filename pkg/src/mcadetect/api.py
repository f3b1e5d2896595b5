"""HTTP service exposing the simulator.

The same :func:`execute` entry point backs the ``POST /runs`` endpoint and the
in-process path of the command-line client, so both produce identical rows.
Run a server with ``python -m mcadetect.api [--host H] [--port P]``.
"""
from __future__ import annotations

import argparse
from typing import Optional

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .channel import ScenarioParams, draw_realization
from .config import ExperimentConfig, parse_config
from .detector import DetectorKind, detect
from .errors import ConfigError, SimulationError
from .experiment import ResultRow, run_experiment
from .linalg import RngStream
from .output import csv_text
from .recipes import RECIPES, get_recipe, run_recipe


class RunRequest(BaseModel):
    config_toml: str = Field("", description="TOML text layered over the shipped defaults")
    seed: Optional[int] = Field(None, ge=0, description="overrides the configured seed")
    threads: Optional[int] = Field(None, ge=1)
    recipe: Optional[str] = None
    curves: Optional[list[str]] = None


class CurveResult(BaseModel):
    name: str
    rows: list[ResultRow]
    csv: str


class RunResponse(BaseModel):
    recipe: Optional[str]
    seed: int
    out_path: str
    gpu_tops_per_watt: float
    results: list[CurveResult]


class DetectRequest(BaseModel):
    R: int = Field(64, ge=1)
    K: int = Field(4, ge=1)
    variant: str = Field("MMSE", pattern="^(ZF|MMSE)$")
    rho: float = Field(0.01, ge=0)
    seed: int = Field(0, ge=0)


class DetectResponse(BaseModel):
    s: list[float]
    s_hat: list[float]


class RecipeInfo(BaseModel):
    name: str
    description: str
    plot_kind: str
    curves: list[str]


class ErrorBody(BaseModel):
    kind: str
    detail: str


def resolve_config(req: RunRequest) -> ExperimentConfig:
    cfg = parse_config(req.config_toml)
    update = {}
    if req.seed is not None:
        update["seed"] = req.seed
    if req.threads is not None:
        update["threads"] = req.threads
    return cfg.model_copy(update=update) if update else cfg


def execute(req: RunRequest) -> RunResponse:
    """Run a plain experiment or a recipe. Raises ConfigError / SimulationError."""
    cfg = resolve_config(req)
    if req.recipe:
        get_recipe(req.recipe)
        results = run_recipe(req.recipe, cfg, req.curves)
    else:
        if req.curves:
            raise ConfigError("curves only apply to recipes")
        results = {cfg.name: run_experiment(cfg)}
    return RunResponse(
        recipe=req.recipe, seed=cfg.seed, out_path=cfg.out_path,
        gpu_tops_per_watt=cfg.metrics.gpu_tops_per_watt,
        results=[CurveResult(name=k, rows=v, csv=csv_text(v)) for k, v in results.items()])


app = FastAPI(title="mcadetect", version=__version__)


@app.exception_handler(ConfigError)
async def _config_error(_, exc: ConfigError):
    return JSONResponse(status_code=400, content=ErrorBody(kind="config", detail=str(exc)).model_dump())


@app.exception_handler(SimulationError)
async def _sim_error(_, exc: SimulationError):
    return JSONResponse(status_code=500,
                        content=ErrorBody(kind="numerical", detail=f"{type(exc).__name__}: {exc}").model_dump())


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.get("/recipes", response_model=list[RecipeInfo])
def recipes() -> list[RecipeInfo]:
    return [RecipeInfo(name=r.name, description=r.description, plot_kind=r.plot_kind,
                       curves=[c.name for c in r.curves]) for r in RECIPES.values()]


@app.post("/runs", response_model=RunResponse)
def runs(req: RunRequest) -> RunResponse:
    # plain def: FastAPI runs it in a worker thread, keeping the event loop free
    return execute(req)


@app.post("/detect", response_model=DetectResponse)
def detect_once(req: DetectRequest) -> DetectResponse:
    """Noise-free digital detection of one random QPSK-like frame (smoke check)."""
    if req.R < req.K:
        raise ConfigError("need R >= K")
    params = ScenarioParams(R=req.R, K=req.K)
    stream = RngStream(req.seed, 0)
    chan = draw_realization(params, stream, rho=req.rho, lam=np.ones(req.K))
    gen = stream.child(1).generator()
    s = np.sign(gen.standard_normal(2 * req.K))
    y = chan.H @ s
    s_hat = detect(chan.H, y, DetectorKind(req.variant, req.rho))
    if not np.all(np.isfinite(s_hat)):
        raise SimulationError("non-finite estimate")
    return DetectResponse(s=[float(v) for v in s], s_hat=[float(v) for v in s_hat])


def main(argv=None) -> int:
    import uvicorn

    ap = argparse.ArgumentParser(prog="mcadetect-server")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8000)
    args = ap.parse_args(argv)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
