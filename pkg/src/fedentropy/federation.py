"""Cloud-device training loop: broadcast, local training, soft-label
judgment, selective upload, weighted aggregation, evaluation.

All selected devices train locally every round. With judgment enabled only
the accepted ("positive") devices upload their models; rejected devices
keep theirs, which is exactly where the communication saving comes from.
Uplink is counted in bytes: 8 per float64, soft labels and models alike.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping

import numpy as np

from .datagen import Dataset, make_blobs, make_partition
from .judgment import (
    JudgmentResult,
    SoftLabelSummary,
    aggregate_soft_labels,
    group_entropy,
    judge_entropy,
)
from .model import Batch, ModelParams, loss_and_grad, sgd_step, forward
from .pools import DevicePools, SelectionConfig, init_pools, return_devices, select_round

if TYPE_CHECKING:
    from .experiment import ExperimentConfig

MODES = ("fedentropy", "fedavg_random", "fedprox_random", "fedprox_fedentropy")

# rng namespace tags so every stream is derived from (seed, tag, ...)
_TAG_DATA, _TAG_PARTITION, _TAG_INIT, _TAG_ROUNDS, _TAG_CLIENT = range(5)


@dataclass(frozen=True)
class ClientConfig:
    epochs: int = 5
    batch_size: int = 50
    learning_rate: float = 0.01
    momentum: float = 0.5
    optimizer: str = "fedavg"
    mu: float = 0.01

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.optimizer not in ("fedavg", "fedprox"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.optimizer == "fedprox" and self.mu < 0:
            raise ValueError("mu must be >= 0")


@dataclass
class RoundReport:
    round: int
    selected: tuple[int, ...]
    accepted: tuple[int, ...]
    rejected: tuple[int, ...]
    entropy_initial: float
    entropy_final: float
    bytes_models: int
    bytes_labels: int
    accuracy: float
    wall_time: float


@dataclass
class TrainingState:
    seed: int
    mode: str
    model: ModelParams
    pools: DevicePools
    device_data: list[Batch]
    test_data: Dataset
    selection: SelectionConfig
    client: ClientConfig
    rng: np.random.Generator
    round: int = 0

    @property
    def judging(self) -> bool:
        return self.mode in ("fedentropy", "fedprox_fedentropy")


def client_update(
    global_model: ModelParams,
    data: Batch,
    cfg: ClientConfig,
    rng: np.random.Generator,
    device_id: int = 0,
) -> tuple[ModelParams, SoftLabelSummary]:
    """Local training from the broadcast model, then soft-label summary.

    Runs ``epochs`` passes of shuffled minibatch SGD starting from a fresh
    copy of the global model (velocity zeroed). For fedprox the proximal
    anchor is the broadcast model itself. The summary is computed with the
    trained local model over all local samples.
    """
    if data.size == 0:
        raise ValueError("device data is empty")
    proximal = None
    if cfg.optimizer == "fedprox":
        proximal = (cfg.mu, global_model)

    local = global_model.clone()
    local.reset_velocity()
    for _ in range(cfg.epochs):
        order = rng.permutation(data.size)
        for start in range(0, data.size, cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            minibatch = Batch(data.inputs[rows], data.labels[rows])
            _, grads = loss_and_grad(local, minibatch, proximal)
            local = sgd_step(local, grads, cfg.learning_rate, cfg.momentum)

    summary = aggregate_soft_labels(local, data, device_id=device_id)
    return local, summary


def aggregate_models(
    models: Mapping[int, ModelParams],
    counts: Mapping[int, int],
    accepted: set[int],
) -> ModelParams:
    """Sample-count-weighted parameter mean over the accepted devices."""
    if not accepted:
        raise ValueError("cannot aggregate an empty device set")
    ids = sorted(accepted)
    first = models[ids[0]]
    if any(not first.same_shape(models[k]) for k in ids[1:]):
        raise ValueError("models have mismatched shapes")

    total = float(sum(counts[k] for k in ids))
    weights = [np.zeros_like(w) for w in first.weights]
    biases = [np.zeros_like(b) for b in first.biases]
    for k in ids:
        share = counts[k] / total
        for i in range(len(weights)):
            weights[i] += share * models[k].weights[i]
            biases[i] += share * models[k].biases[i]
    return ModelParams.from_arrays(weights, biases)


def evaluate(model: ModelParams, test: Dataset) -> float:
    """Fraction of argmax-correct predictions; ties break to the lowest class."""
    if test.size == 0:
        raise ValueError("test set is empty")
    logits, _ = forward(model, test.inputs)
    return float((logits.argmax(axis=1) == test.labels).mean())


def run_round(state: TrainingState) -> RoundReport:
    """Advance one round and report it; judgment only in fedentropy modes."""
    start_time = time.perf_counter()
    state.round += 1
    selected = select_round(state.pools, state.selection, state.rng)

    local_models: dict[int, ModelParams] = {}
    summaries: dict[int, SoftLabelSummary] = {}
    counts: dict[int, int] = {}
    for k in sorted(selected):
        client_rng = np.random.default_rng([state.seed, _TAG_CLIENT, state.round, k])
        local, summary = client_update(
            state.model, state.device_data[k], state.client, client_rng, device_id=k
        )
        local_models[k] = local
        summaries[k] = summary
        counts[k] = summary.sample_count

    if state.judging:
        verdict = judge_entropy(selected, summaries)
    else:
        whole = group_entropy(summaries[k] for k in sorted(selected))
        verdict = JudgmentResult(
            accepted=set(selected),
            rejected=set(),
            initial_entropy=whole,
            final_entropy=whole,
            entropy_trace=(whole,),
        )

    state.model = aggregate_models(local_models, counts, verdict.accepted)
    return_devices(state.pools, verdict.accepted, verdict.rejected)
    accuracy = evaluate(state.model, state.test_data)

    class_count = state.model.class_count
    return RoundReport(
        round=state.round,
        selected=tuple(sorted(selected)),
        accepted=tuple(sorted(verdict.accepted)),
        rejected=tuple(sorted(verdict.rejected)),
        entropy_initial=verdict.initial_entropy,
        entropy_final=verdict.final_entropy,
        bytes_models=len(verdict.accepted) * state.model.size_bytes,
        bytes_labels=len(selected) * class_count * 8,
        accuracy=accuracy,
        wall_time=time.perf_counter() - start_time,
    )


def baseline_random_round(state: TrainingState) -> RoundReport:
    """One round with judgment forced off (plain FedAvg/FedProx behaviour)."""
    if state.judging:
        raise ValueError("baseline rounds require a *_random mode state")
    return run_round(state)


def build_data(cfg: "ExperimentConfig", seed: int):
    """Dataset and device partition for one seed, shared by every mode."""
    split = make_blobs(
        cfg.classes, cfg.dims, cfg.per_class, cfg.spread, seed=[seed, _TAG_DATA]
    )
    partition = make_partition(
        split.train, cfg.partition_spec(), cfg.devices, seed=[seed, _TAG_PARTITION]
    )
    return split, partition


def init_training(cfg: "ExperimentConfig", seed: int, mode: str) -> TrainingState:
    """Build the dataset, partition, pools, and initial model for one run."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    split, partition = build_data(cfg, seed)
    device_data = [
        Batch(split.train.inputs[idx], split.train.labels[idx]) for idx in partition
    ]
    init_rng = np.random.default_rng([seed, _TAG_INIT])
    model = ModelParams.init(
        cfg.dims, cfg.classes, hidden_units=cfg.hidden_units, rng=init_rng
    )
    return TrainingState(
        seed=seed,
        mode=mode,
        model=model,
        pools=init_pools(cfg.devices),
        device_data=device_data,
        test_data=split.test,
        selection=cfg.selection_spec(),
        client=cfg.client_spec(mode),
        rng=np.random.default_rng([seed, _TAG_ROUNDS]),
    )


def run_training(
    cfg: "ExperimentConfig", seed: int, mode: str
) -> tuple[list[RoundReport], ModelParams]:
    """Run ``cfg.rounds`` rounds for one (seed, mode) pair."""
    state = init_training(cfg, seed, mode)
    reports = [run_round(state) for _ in range(cfg.rounds)]
    return reports, state.model
