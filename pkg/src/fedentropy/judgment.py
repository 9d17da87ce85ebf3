"""Soft-label aggregation and the maximum-entropy device filter.

Each device summarizes its data distribution as the mean of its model's
softmax outputs over all local samples. The cloud then greedily drops
devices from the selected set while dropping one strictly raises the
entropy of the size-weighted mean soft label; survivors are "positive"
devices, dropped ones "negative".
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .model import Batch, ModelParams, forward


@dataclass
class SoftLabelSummary:
    device_id: int
    p: np.ndarray
    sample_count: int

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if self.p.ndim != 1 or abs(float(self.p.sum()) - 1.0) > 1e-9 or self.p.min() < 0:
            raise ValueError("p must be a probability vector")


@dataclass
class JudgmentResult:
    accepted: set[int]
    rejected: set[int]
    initial_entropy: float
    final_entropy: float
    # group entropy after each committed removal, starting at the full set
    entropy_trace: tuple[float, ...] = field(default=())


def aggregate_soft_labels(model: ModelParams, data: Batch, device_id: int = 0) -> SoftLabelSummary:
    """Mean softmax output over every sample on the device, right or wrong."""
    if data.size == 0:
        raise ValueError("device data is empty")
    _, probs = forward(model, data.inputs)
    return SoftLabelSummary(device_id=device_id, p=probs.mean(axis=0), sample_count=data.size)


def entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats, with 0*log(0) = 0."""
    p = np.asarray(p, dtype=np.float64)
    positive = p[p > 0]
    return float(-(positive * np.log(positive)).sum())


def group_entropy(summaries: Iterable[SoftLabelSummary]) -> float:
    """Entropy of the sample-count-weighted mean of the soft labels."""
    summaries = list(summaries)
    if not summaries:
        raise ValueError("group_entropy needs at least one summary")
    stacked = np.stack([s.p for s in summaries])
    counts = np.array([s.sample_count for s in summaries], dtype=np.float64)
    return entropy(stacked.T @ counts / counts.sum())


def judge_entropy(
    selected: Iterable[int],
    summaries: Mapping[int, SoftLabelSummary],
) -> JudgmentResult:
    """Greedy maximum-entropy filter over the selected devices.

    While more than one device remains, evaluate every single-device
    removal; commit the one that raises the group entropy the most,
    provided the increase is strict, and repeat. Equal-improvement ties go
    to the lowest device id. The last remaining device is never removed.
    """
    selected = set(selected)
    if not selected:
        raise ValueError("selected set is empty")
    if set(summaries.keys()) != selected:
        raise ValueError("summaries must cover exactly the selected devices")

    accepted = sorted(selected)
    rejected: set[int] = set()
    current = group_entropy(summaries[k] for k in accepted)
    initial = current
    trace = [current]

    while len(accepted) > 1:
        best_entropy = current
        best_id = None
        for k in accepted:
            candidate = group_entropy(summaries[j] for j in accepted if j != k)
            if candidate > best_entropy:
                best_entropy = candidate
                best_id = k
        if best_id is None:
            break
        accepted.remove(best_id)
        rejected.add(best_id)
        current = best_entropy
        trace.append(current)

    return JudgmentResult(
        accepted=set(accepted),
        rejected=rejected,
        initial_entropy=initial,
        final_entropy=current,
        entropy_trace=tuple(trace),
    )


def greedy_oracle(
    selected: Iterable[int],
    summaries: Mapping[int, SoftLabelSummary],
) -> JudgmentResult:
    """Naive reference for judge_entropy; test/selftest use only.

    Re-derives each greedy step by enumerating all subsets one smaller than
    the current set, with plain-Python arithmetic throughout.
    """
    selected = set(selected)
    if not selected:
        raise ValueError("selected set is empty")
    if set(summaries.keys()) != selected:
        raise ValueError("summaries must cover exactly the selected devices")

    vectors = {k: [float(v) for v in summaries[k].p] for k in selected}
    counts = {k: summaries[k].sample_count for k in selected}
    width = len(next(iter(vectors.values())))

    def subset_entropy(ids):
        total = sum(counts[k] for k in ids)
        value = 0.0
        for j in range(width):
            pj = sum(vectors[k][j] * counts[k] for k in ids) / total
            if pj > 0.0:
                value -= pj * math.log(pj)
        return value

    remaining = sorted(selected)
    rejected: list[int] = []
    current = subset_entropy(remaining)
    initial = current
    trace = [current]

    while len(remaining) > 1:
        best = None  # (entropy, removed id)
        for subset in itertools.combinations(remaining, len(remaining) - 1):
            value = subset_entropy(subset)
            (removed,) = set(remaining) - set(subset)
            if value > current:
                if best is None or value > best[0] or (value == best[0] and removed < best[1]):
                    best = (value, removed)
        if best is None:
            break
        current, removed = best
        remaining.remove(removed)
        rejected.append(removed)
        trace.append(current)

    return JudgmentResult(
        accepted=set(remaining),
        rejected=set(rejected),
        initial_entropy=initial,
        final_entropy=current,
        entropy_trace=tuple(trace),
    )
