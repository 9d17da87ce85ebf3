"""Positive/negative device pools and epsilon-greedy round selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class DevicePools:
    positive: set[int] = field(default_factory=set)
    negative: set[int] = field(default_factory=set)


@dataclass(frozen=True)
class SelectionConfig:
    device_count: int
    fraction: float
    epsilon: float

    def __post_init__(self):
        if self.device_count < 1:
            raise ValueError("device_count must be >= 1")
        if not 0 < self.fraction <= 1:
            raise ValueError("fraction must be in (0, 1]")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must be in [0, 1]")

    @property
    def round_size(self) -> int:
        return max(1, int(round(self.device_count * self.fraction)))


def init_pools(device_count: int) -> DevicePools:
    """All devices start in the positive pool."""
    if device_count < 1:
        raise ValueError("device_count must be >= 1")
    return DevicePools(positive=set(range(device_count)), negative=set())


def _draw(pool: set[int], count: int, rng: np.random.Generator) -> list[int]:
    if count == 0:
        return []
    ids = sorted(pool)
    picked = rng.choice(len(ids), size=count, replace=False)
    return [ids[i] for i in picked]


def select_round(pools: DevicePools, cfg: SelectionConfig, rng: np.random.Generator) -> set[int]:
    """Pick this round's devices and remove them from their pools.

    The primary pool is positive with probability epsilon, negative
    otherwise; any shortfall is refilled uniformly from the other pool.
    """
    m = cfg.round_size
    if len(pools.positive) + len(pools.negative) < m:
        raise ValueError(f"pools hold fewer than {m} devices")

    if rng.random() < cfg.epsilon:
        primary, other = pools.positive, pools.negative
    else:
        primary, other = pools.negative, pools.positive

    selected = _draw(primary, min(m, len(primary)), rng)
    selected += _draw(other, m - len(selected), rng)

    chosen = set(selected)
    pools.positive -= chosen
    pools.negative -= chosen
    return chosen


def return_devices(pools: DevicePools, accepted: set[int], rejected: set[int]) -> None:
    """Route judged devices back: accepted to positive, rejected to negative."""
    if accepted & rejected:
        raise ValueError("accepted and rejected overlap")
    incoming = accepted | rejected
    if incoming & (pools.positive | pools.negative):
        raise ValueError("devices being returned are already pooled")
    pools.positive |= accepted
    pools.negative |= rejected
