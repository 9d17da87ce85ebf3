"""Experiment configuration, multi-seed comparison runs, and CSV output.

Config files are flat ``key = value`` text ('#' starts a comment); any key
can be overridden programmatically or by CLI flags. Unset keys fall back
to defaults chosen to keep the full comparison run at desk scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .datagen import PARTITION_CASES, PartitionSpec
from .federation import MODES, ClientConfig, RoundReport, run_training
from .pools import SelectionConfig


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending key."""


@dataclass(frozen=True)
class ExperimentConfig:
    classes: int = 10
    dims: int = 16
    per_class: int = 200
    spread: float = 1.5
    partition: str = "single_label"
    beta: float = 0.1
    devices: int = 20
    fraction: float = 0.25
    epsilon: float = 0.8
    rounds: int = 100
    epochs: int = 5
    batch_size: int = 50
    learning_rate: float = 0.01
    momentum: float = 0.5
    mu: float = 0.01
    hidden_units: int = 0
    seeds: tuple[int, ...] = (0, 1, 2)
    modes: tuple[str, ...] = ("fedentropy", "fedavg_random")
    target_accuracy: float | None = None

    def partition_spec(self) -> PartitionSpec:
        return PartitionSpec(case=self.partition, beta=self.beta)

    def selection_spec(self) -> SelectionConfig:
        return SelectionConfig(
            device_count=self.devices, fraction=self.fraction, epsilon=self.epsilon
        )

    def client_spec(self, mode: str) -> ClientConfig:
        optimizer = "fedprox" if mode.startswith("fedprox") else "fedavg"
        return ClientConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            optimizer=optimizer,
            mu=self.mu,
        )


@dataclass
class RoundRow:
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


@dataclass
class SummaryRow:
    mode: str
    accuracy_mean: float
    accuracy_std: float
    target: float | None
    rounds_to_target_mean: float | None
    rounds_to_target_std: float | None
    bytes_to_target_mean: float
    target_reached: bool


@dataclass
class ExperimentResult:
    rounds: list[RoundRow]
    summaries: list[SummaryRow]
    reports: dict[tuple[str, int], list[RoundReport]]


ROUND_CSV_HEADER = (
    "round,mode,seed,accuracy,selected,accepted,rejected,"
    "entropy_initial,entropy_final,bytes_models,bytes_labels"
)
SUMMARY_CSV_HEADER = (
    "mode,accuracy_mean,accuracy_std,target,rounds_to_target_mean,"
    "rounds_to_target_std,bytes_to_target_mean"
)


def _to_int(key, value):
    try:
        if isinstance(value, bool):
            raise ValueError
        return int(str(value))
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}") from None


def _to_float(key, value):
    try:
        return float(str(value))
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {value!r}") from None


def _to_tuple(key, value, element):
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(",") if p.strip()]
    elif isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        parts = [value]
    return tuple(element(key, p) for p in parts)


_COERCERS = {
    "classes": _to_int,
    "dims": _to_int,
    "per_class": _to_int,
    "spread": _to_float,
    "partition": lambda k, v: str(v),
    "beta": _to_float,
    "devices": _to_int,
    "fraction": _to_float,
    "epsilon": _to_float,
    "rounds": _to_int,
    "epochs": _to_int,
    "batch_size": _to_int,
    "learning_rate": _to_float,
    "momentum": _to_float,
    "mu": _to_float,
    "hidden_units": _to_int,
    "seeds": lambda k, v: _to_tuple(k, v, _to_int),
    "modes": lambda k, v: _to_tuple(k, v, lambda kk, vv: str(vv)),
    "target_accuracy": lambda k, v: None if v in (None, "", "none") else _to_float(k, v),
}


def build_config(overrides: Mapping[str, object] | None = None) -> ExperimentConfig:
    """Merge overrides onto the defaults and validate every field."""
    values = {}
    for key, raw in (overrides or {}).items():
        if key not in _COERCERS:
            known = ", ".join(sorted(_COERCERS))
            raise ConfigError(f"unknown config key {key!r} (known keys: {known})")
        values[key] = _COERCERS[key](key, raw)
    cfg = ExperimentConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    def need(condition: bool, message: str):
        if not condition:
            raise ConfigError(message)

    need(cfg.classes >= 2, f"classes must be >= 2, got {cfg.classes}")
    need(cfg.dims >= 2, f"dims must be >= 2, got {cfg.dims}")
    need(cfg.per_class >= 5, f"per_class must be >= 5, got {cfg.per_class}")
    need(cfg.spread > 0, f"spread must be > 0, got {cfg.spread}")
    need(
        cfg.partition in PARTITION_CASES,
        f"partition must be one of {PARTITION_CASES}, got {cfg.partition!r}",
    )
    if cfg.partition == "dirichlet":
        need(cfg.beta > 0, f"beta must be > 0 for dirichlet partitions, got {cfg.beta}")
    need(cfg.devices >= 1, f"devices must be >= 1, got {cfg.devices}")
    need(0 < cfg.fraction <= 1, f"fraction must be in (0, 1], got {cfg.fraction}")
    need(0 <= cfg.epsilon <= 1, f"epsilon must be in [0, 1], got {cfg.epsilon}")
    need(cfg.rounds >= 0, f"rounds must be >= 0, got {cfg.rounds}")
    need(cfg.epochs >= 1, f"epochs must be >= 1, got {cfg.epochs}")
    need(cfg.batch_size >= 1, f"batch_size must be >= 1, got {cfg.batch_size}")
    need(cfg.learning_rate > 0, f"learning_rate must be > 0, got {cfg.learning_rate}")
    need(0 <= cfg.momentum < 1, f"momentum must be in [0, 1), got {cfg.momentum}")
    need(cfg.mu >= 0, f"mu must be >= 0, got {cfg.mu}")
    need(cfg.hidden_units >= 0, f"hidden_units must be >= 0, got {cfg.hidden_units}")
    need(len(cfg.seeds) > 0, "seeds must not be empty")
    need(all(s >= 0 for s in cfg.seeds), f"seeds must be >= 0, got {cfg.seeds}")
    need(len(cfg.modes) > 0, "modes must not be empty")
    for mode in cfg.modes:
        need(mode in MODES, f"modes entries must be one of {MODES}, got {mode!r}")
    if cfg.target_accuracy is not None:
        need(
            0 <= cfg.target_accuracy <= 1,
            f"target_accuracy must be in [0, 1], got {cfg.target_accuracy}",
        )


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' comments and blank lines are skipped."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def load_config(
    path: str | Path | None = None,
    overrides: Mapping[str, object] | None = None,
) -> ExperimentConfig:
    """Read a config file (optional) and apply overrides on top (flags win)."""
    merged: dict[str, object] = {}
    if path is not None:
        file_path = Path(path)
        if not file_path.exists():
            raise ConfigError(f"config file not found: {file_path}")
        merged.update(parse_config_text(file_path.read_text()))
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    return build_config(merged)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every (mode, seed) pair and summarize per mode."""
    rows: list[RoundRow] = []
    summaries: list[SummaryRow] = []
    reports: dict[tuple[str, int], list[RoundReport]] = {}

    for mode in cfg.modes:
        for seed in cfg.seeds:
            mode_reports, _ = run_training(cfg, seed, mode)
            reports[(mode, seed)] = mode_reports
            rows.extend(
                RoundRow(
                    round=r.round,
                    mode=mode,
                    seed=seed,
                    accuracy=r.accuracy,
                    selected=len(r.selected),
                    accepted=len(r.accepted),
                    rejected=len(r.rejected),
                    entropy_initial=r.entropy_initial,
                    entropy_final=r.entropy_final,
                    bytes_models=r.bytes_models,
                    bytes_labels=r.bytes_labels,
                )
                for r in mode_reports
            )
        summaries.append(summarize_mode(cfg, mode, [reports[(mode, s)] for s in cfg.seeds]))

    return ExperimentResult(rounds=rows, summaries=summaries, reports=reports)


def rounds_to_target(reports: list[RoundReport], target: float) -> int | None:
    """First round whose accuracy reaches the target (first crossing)."""
    for report in reports:
        if report.accuracy >= target:
            return report.round
    return None


def summarize_mode(
    cfg: ExperimentConfig, mode: str, per_seed: list[list[RoundReport]]
) -> SummaryRow:
    final_accs = [
        float(np.mean([r.accuracy for r in reports[-10:]])) if reports else float("nan")
        for reports in per_seed
    ]

    crossings: list[int | None] = [None] * len(per_seed)
    if cfg.target_accuracy is not None:
        crossings = [rounds_to_target(reports, cfg.target_accuracy) for reports in per_seed]
    reached = cfg.target_accuracy is not None and all(c is not None for c in crossings)

    bytes_per_seed = []
    for reports, crossing in zip(per_seed, crossings):
        upto = crossing if crossing is not None else len(reports)
        bytes_per_seed.append(
            float(sum(r.bytes_models + r.bytes_labels for r in reports[:upto]))
        )

    return SummaryRow(
        mode=mode,
        accuracy_mean=float(np.mean(final_accs)),
        accuracy_std=float(np.std(final_accs)),
        target=cfg.target_accuracy,
        rounds_to_target_mean=float(np.mean(crossings)) if reached else None,
        rounds_to_target_std=float(np.std(crossings)) if reached else None,
        bytes_to_target_mean=float(np.mean(bytes_per_seed)),
        target_reached=reached,
    )


def write_round_csv(rows: list[RoundRow], path: str | Path) -> None:
    if not rows:
        raise ValueError("no round rows to write")
    _write_csv(
        path,
        ROUND_CSV_HEADER.split(","),
        (
            [
                r.round,
                r.mode,
                r.seed,
                r.accuracy,
                r.selected,
                r.accepted,
                r.rejected,
                r.entropy_initial,
                r.entropy_final,
                r.bytes_models,
                r.bytes_labels,
            ]
            for r in rows
        ),
    )


def write_summary(summaries: list[SummaryRow], path: str | Path, total_rounds: int) -> None:
    if not summaries:
        raise ValueError("no summaries to write")
    unreached = f">{total_rounds}"

    def row(s: SummaryRow):
        if s.target is None:
            rounds_mean, rounds_std, target = "", "", ""
        elif s.rounds_to_target_mean is None:
            rounds_mean, rounds_std, target = unreached, unreached, s.target
        else:
            rounds_mean, rounds_std, target = (
                s.rounds_to_target_mean,
                s.rounds_to_target_std,
                s.target,
            )
        return [s.mode, s.accuracy_mean, s.accuracy_std, target, rounds_mean, rounds_std, s.bytes_to_target_mean]

    _write_csv(path, SUMMARY_CSV_HEADER.split(","), (row(s) for s in summaries))


def write_partition_csv(counts: np.ndarray, path: str | Path) -> None:
    header = ["device"] + [f"class_{k}" for k in range(counts.shape[1])]
    _write_csv(
        path,
        header,
        ([device, *map(int, row)] for device, row in enumerate(counts)),
    )


def _write_csv(path, header, rows) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc
