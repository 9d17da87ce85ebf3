"""Synthetic Gaussian-blob datasets and non-IID device partitions.

Three heterogeneity cases are supported: every device holds one label,
every device holds two labels evenly, or per-class Dirichlet allocation
over devices (smaller beta = more skew).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PARTITION_CASES = ("single_label", "two_label", "dirichlet")


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.labels) != len(self.inputs) or len(self.labels) == 0:
            raise ValueError("inputs and labels must be non-empty and the same length")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise ValueError("labels outside [0, class_count)")

    @property
    def size(self) -> int:
        return len(self.labels)


@dataclass
class DataSplit:
    train: Dataset
    test: Dataset


@dataclass(frozen=True)
class PartitionSpec:
    case: str = "single_label"
    beta: float = 0.1

    def __post_init__(self):
        if self.case not in PARTITION_CASES:
            raise ValueError(f"unknown partition case {self.case!r}")
        if self.case == "dirichlet" and self.beta <= 0:
            raise ValueError("beta must be > 0 for dirichlet partitions")


# Partition = list of per-device index arrays into the train dataset.
Partition = list


def make_blobs(
    class_count: int,
    dims: int,
    per_class: int,
    spread: float,
    seed,
) -> DataSplit:
    """Gaussian clusters with one cluster per class, split 80/20 stratified.

    Cluster means are drawn from the seed at unit scale and rescaled only if
    needed so the minimum pairwise mean distance stays >= 2*spread; samples
    get isotropic noise with std ``spread``.
    """
    if class_count < 2 or dims < 2 or per_class < 1:
        raise ValueError("need class_count >= 2, dims >= 2, per_class >= 1")
    if spread <= 0:
        raise ValueError("spread must be > 0")

    rng = np.random.default_rng(seed)
    means = rng.standard_normal((class_count, dims))
    diffs = means[:, None, :] - means[None, :, :]
    dist = np.sqrt((diffs**2).sum(axis=-1))
    min_dist = dist[~np.eye(class_count, dtype=bool)].min()
    if min_dist < 2.0 * spread:
        means *= (2.0 * spread) / min_dist

    inputs = np.repeat(means, per_class, axis=0) + rng.normal(
        0.0, spread, size=(class_count * per_class, dims)
    )
    labels = np.repeat(np.arange(class_count), per_class)

    train_idx, test_idx = [], []
    n_train = int(round(0.8 * per_class))
    if per_class >= 2:
        n_train = min(max(n_train, 1), per_class - 1)
    for klass in range(class_count):
        idx = rng.permutation(per_class) + klass * per_class
        train_idx.extend(idx[:n_train])
        test_idx.extend(idx[n_train:])
    train_idx = np.sort(np.asarray(train_idx, dtype=np.int64))
    test_idx = np.sort(np.asarray(test_idx, dtype=np.int64))

    train = Dataset(inputs[train_idx], labels[train_idx], class_count)
    if len(test_idx) == 0:
        raise ValueError("per_class too small to leave a test split")
    test = Dataset(inputs[test_idx], labels[test_idx], class_count)
    return DataSplit(train=train, test=test)


def _split_class_indices(class_indices, device_slots, rng):
    """Deal a class's shuffled sample indices into near-equal chunks."""
    shuffled = rng.permutation(class_indices)
    return np.array_split(shuffled, device_slots)


def partition_single_label(dataset: Dataset, device_count: int, seed) -> Partition:
    """Case 1: device i holds only class (i mod c)."""
    if device_count < 1:
        raise ValueError("device_count must be >= 1")
    rng = np.random.default_rng(seed)
    c = dataset.class_count
    owners = [[] for _ in range(c)]
    for device in range(device_count):
        owners[device % c].append(device)

    assignments = [np.empty(0, dtype=np.int64) for _ in range(device_count)]
    for klass in range(c):
        if not owners[klass]:
            continue
        class_indices = np.flatnonzero(dataset.labels == klass)
        for device, chunk in zip(owners[klass], _split_class_indices(class_indices, len(owners[klass]), rng)):
            assignments[device] = np.sort(chunk)
    _check_non_empty(assignments)
    return assignments


def partition_two_label(dataset: Dataset, device_count: int, seed) -> Partition:
    """Case 2: each device holds two classes with near-equal counts.

    Classes are paired from a seeded random permutation (a perfect matching
    for even c, a cycle for odd c) and pairs are assigned round-robin.
    """
    if device_count < 1:
        raise ValueError("device_count must be >= 1")
    c = dataset.class_count
    if c < 2:
        raise ValueError("two_label partition needs at least 2 classes")
    rng = np.random.default_rng(seed)
    order = rng.permutation(c)
    if c % 2 == 0:
        pairs = [(int(order[i]), int(order[i + 1])) for i in range(0, c, 2)]
    else:
        pairs = [(int(order[i]), int(order[(i + 1) % c])) for i in range(c)]

    holders: dict[int, list[int]] = {klass: [] for klass in range(c)}
    device_pairs = []
    for device in range(device_count):
        a, b = pairs[device % len(pairs)]
        device_pairs.append((a, b))
        holders[a].append(device)
        holders[b].append(device)

    chunks: dict[int, dict[int, np.ndarray]] = {}
    for klass in range(c):
        if not holders[klass]:
            continue
        class_indices = np.flatnonzero(dataset.labels == klass)
        parts = _split_class_indices(class_indices, len(holders[klass]), rng)
        chunks[klass] = dict(zip(holders[klass], parts))

    assignments = []
    for device, (a, b) in enumerate(device_pairs):
        merged = np.concatenate([chunks[a][device], chunks[b][device]])
        assignments.append(np.sort(merged))
    _check_non_empty(assignments)
    return assignments


def partition_dirichlet(dataset: Dataset, device_count: int, beta: float, seed) -> Partition:
    """Case 3: per class, a Dirichlet(beta) draw over devices sets the share
    of that class's samples each device receives (largest-remainder rounding).

    Devices left empty are topped up with one sample taken at random from the
    currently largest device, so every device size stays >= 1.
    """
    if device_count < 1:
        raise ValueError("device_count must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be > 0")
    rng = np.random.default_rng(seed)

    buckets: list[list[np.ndarray]] = [[] for _ in range(device_count)]
    for klass in range(dataset.class_count):
        class_indices = rng.permutation(np.flatnonzero(dataset.labels == klass))
        weights = rng.dirichlet(np.full(device_count, beta))
        counts = _largest_remainder(weights * len(class_indices))
        start = 0
        for device, count in enumerate(counts):
            if count:
                buckets[device].append(class_indices[start : start + count])
            start += count

    assignments = [
        np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
        for parts in buckets
    ]

    for device in range(device_count):
        if len(assignments[device]) > 0:
            continue
        donor = max(range(device_count), key=lambda i: (len(assignments[i]), -i))
        if len(assignments[donor]) <= 1:
            raise ValueError("not enough samples to give every device at least one")
        pick = int(rng.integers(len(assignments[donor])))
        moved = assignments[donor][pick]
        assignments[donor] = np.delete(assignments[donor], pick)
        assignments[device] = np.asarray([moved], dtype=np.int64)

    return assignments


def make_partition(dataset: Dataset, spec: PartitionSpec, device_count: int, seed) -> Partition:
    if spec.case == "single_label":
        return partition_single_label(dataset, device_count, seed)
    if spec.case == "two_label":
        return partition_two_label(dataset, device_count, seed)
    return partition_dirichlet(dataset, device_count, spec.beta, seed)


def partition_stats(partition: Partition, dataset: Dataset) -> np.ndarray:
    """Per-device class histogram, shape (devices, classes)."""
    counts = np.zeros((len(partition), dataset.class_count), dtype=np.int64)
    for device, indices in enumerate(partition):
        for klass, num in zip(*np.unique(dataset.labels[indices], return_counts=True)):
            counts[device, klass] = num
    return counts


def _largest_remainder(quotas: np.ndarray) -> np.ndarray:
    """Round non-negative quotas to integers preserving their exact sum."""
    total = int(round(quotas.sum()))
    floors = np.floor(quotas).astype(np.int64)
    shortfall = total - int(floors.sum())
    if shortfall > 0:
        remainders = quotas - floors
        # ties go to the lowest index: stable sort on negated remainder
        order = np.argsort(-remainders, kind="stable")
        floors[order[:shortfall]] += 1
    return floors


def _check_non_empty(assignments):
    for device, indices in enumerate(assignments):
        if len(indices) == 0:
            raise ValueError(
                f"device {device} received no samples; use more samples or fewer devices"
            )
