import math

import numpy as np
import pytest

from fedentropy.judgment import (
    SoftLabelSummary,
    aggregate_soft_labels,
    entropy,
    greedy_oracle,
    group_entropy,
    judge_entropy,
)
from fedentropy.model import Batch, ModelParams
from fedentropy.selftest import random_judgment_instance

LN2 = 0.6931471805599453
# -0.25*ln(0.25) - 0.75*ln(0.75), hand-computed
H_25_75 = 0.5623351446188083


def summaries_of(pairs):
    """pairs: {device_id: (prob_list, count)}"""
    return {
        k: SoftLabelSummary(device_id=k, p=np.array(p, dtype=float), sample_count=n)
        for k, (p, n) in pairs.items()
    }


def test_aggregate_uniform_model():
    model = ModelParams.init(3, 4)  # zero weights -> uniform output
    batch = Batch(np.random.default_rng(0).normal(size=(9, 3)), np.zeros(9, dtype=int))
    summary = aggregate_soft_labels(model, batch, device_id=5)
    assert summary.device_id == 5
    assert summary.sample_count == 9
    assert np.allclose(summary.p, 0.25, atol=1e-12)


def test_aggregate_single_sample():
    rng = np.random.default_rng(1)
    model = ModelParams.init(3, 3, rng=rng, scale=0.8)
    batch = Batch(rng.normal(size=(1, 3)), np.array([0]))
    from fedentropy.model import forward

    _, probs = forward(model, batch.inputs)
    summary = aggregate_soft_labels(model, batch)
    assert np.array_equal(summary.p, probs[0])


def test_aggregate_saturated_pair_averages():
    # inputs on opposite one-hots with a strong identity model: softmax rows
    # approach [1,0] and [0,1], so the mean approaches [0.5, 0.5]
    model = ModelParams.from_arrays([60.0 * np.eye(2)], [np.zeros(2)])
    batch = Batch(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0, 1]))
    summary = aggregate_soft_labels(model, batch)
    assert np.allclose(summary.p, [0.5, 0.5], atol=1e-9)


def test_aggregate_rejects_empty():
    model = ModelParams.init(2, 2)
    with pytest.raises(ValueError):
        aggregate_soft_labels(model, Batch(np.zeros((0, 2)), np.zeros(0, dtype=int)))


def test_entropy_one_hot_is_zero():
    for c in (2, 4, 7):
        p = np.zeros(c)
        p[c // 2] = 1.0
        assert entropy(p) == 0.0


def test_entropy_uniform_is_log_c():
    for c in (2, 3, 10):
        assert entropy(np.full(c, 1.0 / c)) == pytest.approx(math.log(c), abs=1e-12)
    assert entropy([0.5, 0.5]) == pytest.approx(0.693147, abs=1e-6)


def test_entropy_hand_computed():
    assert entropy([0.25, 0.75]) == pytest.approx(H_25_75, abs=1e-12)


def test_entropy_bounds_random():
    rng = np.random.default_rng(2)
    for _ in range(500):
        c = int(rng.integers(2, 8))
        p = rng.dirichlet(np.full(c, 0.4))
        e = entropy(p)
        assert 0.0 <= e <= math.log(c) + 1e-12


def test_group_entropy_single_summary():
    s = summaries_of({0: ([0.25, 0.75], 13)})
    assert group_entropy(s.values()) == pytest.approx(H_25_75, abs=1e-12)


def test_group_entropy_complementary():
    s = summaries_of({0: ([1.0, 0.0], 4), 1: ([0.0, 1.0], 4)})
    assert group_entropy(s.values()) == pytest.approx(LN2, abs=1e-12)


def test_group_entropy_weighted():
    s = summaries_of({0: ([1.0, 0.0], 3), 1: ([0.0, 1.0], 1)})
    assert group_entropy(s.values()) == pytest.approx(H_25_75, abs=1e-12)


def test_group_entropy_permutation_and_count_scale_invariance():
    rng = np.random.default_rng(3)
    for _ in range(30):
        n = int(rng.integers(2, 7))
        c = int(rng.integers(2, 5))
        items = [
            SoftLabelSummary(device_id=i, p=rng.dirichlet(np.ones(c)), sample_count=int(rng.integers(1, 9)))
            for i in range(n)
        ]
        base = group_entropy(items)
        shuffled = [items[i] for i in rng.permutation(n)]
        assert group_entropy(shuffled) == pytest.approx(base, abs=1e-12)
        scaled = [
            SoftLabelSummary(device_id=s.device_id, p=s.p, sample_count=s.sample_count * 5)
            for s in items
        ]
        assert group_entropy(scaled) == pytest.approx(base, abs=1e-12)


def test_group_entropy_rejects_empty():
    with pytest.raises(ValueError):
        group_entropy([])


def test_judge_identical_summaries_keeps_all():
    p = [0.2, 0.3, 0.5]
    s = summaries_of({i: (p, 7) for i in range(5)})
    result = judge_entropy(set(range(5)), s)
    assert result.accepted == set(range(5))
    assert result.rejected == set()
    assert result.final_entropy == result.initial_entropy


def test_judge_worked_three_device_example():
    s = summaries_of({1: ([1.0, 0.0], 2), 2: ([0.0, 1.0], 2), 3: ([1.0, 0.0], 2)})
    result = judge_entropy({1, 2, 3}, s)
    assert result.accepted == {2, 3}
    assert result.rejected == {1}
    assert result.final_entropy == pytest.approx(0.693147, abs=1e-6)
    # entropy of the full group: mean [2/3, 1/3]
    assert result.initial_entropy == pytest.approx(0.636514, abs=1e-6)


def test_judge_singleton_guard():
    s = summaries_of({4: ([0.9, 0.1], 3)})
    result = judge_entropy({4}, s)
    assert result.accepted == {4}
    assert result.rejected == set()


def test_judge_errors():
    s = summaries_of({0: ([0.5, 0.5], 1)})
    with pytest.raises(ValueError):
        judge_entropy(set(), {})
    with pytest.raises(ValueError):
        judge_entropy({0, 1}, s)


def test_judge_trace_strictly_increases_and_partitions():
    rng = np.random.default_rng(4)
    for _ in range(200):
        selected, summaries = random_judgment_instance(rng)
        result = judge_entropy(selected, summaries)
        assert result.accepted | result.rejected == selected
        assert result.accepted & result.rejected == set()
        assert len(result.accepted) >= 1
        assert result.final_entropy >= result.initial_entropy
        trace = result.entropy_trace
        assert all(b > a for a, b in zip(trace, trace[1:]))


def test_judge_never_removes_mean_equal_device():
    # device 3's label equals the weighted mean, so removing it cannot
    # strictly improve; 1 and 2 average to the entropy maximum already
    s = summaries_of({1: ([0.3, 0.7], 2), 2: ([0.7, 0.3], 2), 3: ([0.5, 0.5], 2)})
    result = judge_entropy({1, 2, 3}, s)
    assert result.rejected == set()


def test_oracle_matches_on_worked_example():
    s = summaries_of({1: ([1.0, 0.0], 2), 2: ([0.0, 1.0], 2), 3: ([1.0, 0.0], 2)})
    fast = judge_entropy({1, 2, 3}, s)
    slow = greedy_oracle({1, 2, 3}, s)
    assert fast.accepted == slow.accepted == {2, 3}
    assert fast.rejected == slow.rejected == {1}
    assert abs(fast.final_entropy - slow.final_entropy) < 1e-12


def test_oracle_matches_identical_summaries():
    s = summaries_of({i: ([0.25, 0.25, 0.5], 3) for i in (2, 5, 9)})
    fast = judge_entropy({2, 5, 9}, s)
    slow = greedy_oracle({2, 5, 9}, s)
    assert fast.accepted == slow.accepted
    assert slow.rejected == set()


def test_oracle_equivalence_random_instances():
    rng = np.random.default_rng(10)
    for _ in range(300):
        selected, summaries = random_judgment_instance(rng)
        fast = judge_entropy(selected, summaries)
        slow = greedy_oracle(selected, summaries)
        assert fast.accepted == slow.accepted
        assert fast.rejected == slow.rejected
        assert abs(fast.final_entropy - slow.final_entropy) < 1e-12


def test_summary_validation():
    with pytest.raises(ValueError):
        SoftLabelSummary(device_id=0, p=np.array([0.5, 0.6]), sample_count=1)
    with pytest.raises(ValueError):
        SoftLabelSummary(device_id=0, p=np.array([0.5, 0.5]), sample_count=0)
