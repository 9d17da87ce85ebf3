"""HTTP service exposing experiment runs, partition stats, and selftests.

Request models mirror the flat experiment config; omitted fields use the
package defaults. Responses carry plain rows so clients can render CSVs
without recomputing anything.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .datagen import partition_stats
from .experiment import ConfigError, build_config, run_experiment
from .federation import build_data
from .selftest import run_selftest

app = FastAPI(title="fedentropy", version=__version__)


class ConfigOverrides(BaseModel):
    """Experiment config fields; every field optional, defaults apply."""

    classes: int | None = None
    dims: int | None = None
    per_class: int | None = None
    spread: float | None = None
    partition: str | None = None
    beta: float | None = None
    devices: int | None = None
    fraction: float | None = None
    epsilon: float | None = None
    rounds: int | None = None
    epochs: int | None = None
    batch_size: int | None = None
    learning_rate: float | None = None
    momentum: float | None = None
    mu: float | None = None
    hidden_units: int | None = None
    seeds: list[int] | str | None = None
    modes: list[str] | str | None = None
    target_accuracy: float | None = None


class RoundRecord(BaseModel):
    round: int
    mode: str
    seed: int
    accuracy: float
    selected: int
    accepted: int
    rejected: int
    entropy_initial: float
    entropy_final: float
    bytes_models: int
    bytes_labels: int


class SummaryRecord(BaseModel):
    mode: str
    accuracy_mean: float
    accuracy_std: float
    target: float | None
    rounds_to_target_mean: float | None
    rounds_to_target_std: float | None
    bytes_to_target_mean: float
    target_reached: bool


class RunResponse(BaseModel):
    rounds: list[RoundRecord]
    summaries: list[SummaryRecord]
    total_rounds: int


class PartitionStatsResponse(BaseModel):
    devices: int
    classes: int
    counts: list[list[int]]


class SelftestRequest(BaseModel):
    judgment_trials: int = Field(default=1000, ge=1)
    gradient_trials: int = Field(default=20, ge=1)
    seed: int = Field(default=0, ge=0)


class SelftestCheck(BaseModel):
    name: str
    passed: bool
    detail: str


class SelftestResponse(BaseModel):
    passed: bool
    checks: list[SelftestCheck]


def _config_from(request: ConfigOverrides):
    overrides = request.model_dump(exclude_none=True)
    try:
        return build_config(overrides)
    except ConfigError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/run", response_model=RunResponse)
def run(request: ConfigOverrides) -> RunResponse:
    cfg = _config_from(request)
    result = run_experiment(cfg)
    return RunResponse(
        rounds=[RoundRecord(**vars(r)) for r in result.rounds],
        summaries=[SummaryRecord(**vars(s)) for s in result.summaries],
        total_rounds=cfg.rounds,
    )


@app.post("/partition-stats", response_model=PartitionStatsResponse)
def partition_stats_endpoint(request: ConfigOverrides) -> PartitionStatsResponse:
    cfg = _config_from(request)
    split, partition = build_data(cfg, cfg.seeds[0])
    counts = partition_stats(partition, split.train)
    return PartitionStatsResponse(
        devices=cfg.devices,
        classes=cfg.classes,
        counts=[[int(v) for v in row] for row in counts],
    )


@app.post("/selftest", response_model=SelftestResponse)
def selftest(request: SelftestRequest) -> SelftestResponse:
    checks = run_selftest(
        judgment_trials=request.judgment_trials,
        gradient_trials=request.gradient_trials,
        seed=request.seed,
    )
    return SelftestResponse(
        passed=all(c.passed for c in checks),
        checks=[SelftestCheck(**vars(c)) for c in checks],
    )
