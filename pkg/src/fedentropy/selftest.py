"""Built-in verification suites: judgment-vs-oracle and gradient checks.

These back the ``selftest`` CLI/service surface and are reused by the test
suite. They exercise the production code against independent references
(exhaustive greedy enumeration, central finite differences).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .judgment import SoftLabelSummary, greedy_oracle, judge_entropy
from .model import Batch, ModelParams, finite_diff_grad, loss_and_grad


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def random_judgment_instance(rng: np.random.Generator):
    """A random selected set with Dirichlet soft labels and integer sizes."""
    n = int(rng.integers(1, 9))
    c = int(rng.integers(2, 6))
    ids = sorted(int(i) for i in rng.choice(50, size=n, replace=False))
    summaries = {
        k: SoftLabelSummary(
            device_id=k,
            p=rng.dirichlet(np.full(c, 0.5)),
            sample_count=int(rng.integers(1, 30)),
        )
        for k in ids
    }
    return set(ids), summaries


def judgment_oracle_check(trials: int = 1000, seed: int = 0) -> CheckResult:
    """judge_entropy must match the exhaustive greedy oracle exactly."""
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        selected, summaries = random_judgment_instance(rng)
        fast = judge_entropy(selected, summaries)
        slow = greedy_oracle(selected, summaries)
        if fast.accepted != slow.accepted or fast.rejected != slow.rejected:
            return CheckResult(
                name="judgment_oracle",
                passed=False,
                detail=f"set mismatch on trial {trial}: {fast} vs {slow}",
            )
        if abs(fast.final_entropy - slow.final_entropy) > 1e-12:
            return CheckResult(
                name="judgment_oracle",
                passed=False,
                detail=f"entropy mismatch on trial {trial}: "
                f"{fast.final_entropy} vs {slow.final_entropy}",
            )
    return CheckResult(
        name="judgment_oracle",
        passed=True,
        detail=f"{trials} random instances matched the oracle",
    )


def max_relative_error(analytic, numeric) -> float:
    """Elementwise |a-b| / max(|a|+|b|, 1e-6), maximized over all tensors."""
    worst = 0.0
    for a, b in zip(analytic.weights + analytic.biases, numeric.weights + numeric.biases):
        denom = np.maximum(np.abs(a) + np.abs(b), 1e-6)
        worst = max(worst, float((np.abs(a - b) / denom).max()))
    return worst


def random_gradient_instance(rng: np.random.Generator):
    dims = int(rng.integers(2, 7))
    classes = int(rng.integers(2, 6))
    hidden = int(rng.choice([0, 0, 3, 5]))
    n = int(rng.integers(2, 11))
    model = ModelParams.init(dims, classes, hidden_units=hidden, rng=rng, scale=0.5)
    batch = Batch(rng.standard_normal((n, dims)), rng.integers(0, classes, size=n))
    proximal = None
    if rng.random() < 0.5:
        anchor = ModelParams.init(dims, classes, hidden_units=hidden, rng=rng, scale=0.5)
        proximal = (float(rng.choice([0.01, 0.1, 1.0])), anchor)
    return model, batch, proximal


def gradient_check(trials: int = 20, seed: int = 0, tolerance: float = 1e-4) -> CheckResult:
    """Analytic gradients must agree with central finite differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(trials):
        model, batch, proximal = random_gradient_instance(rng)
        _, analytic = loss_and_grad(model, batch, proximal)
        numeric = finite_diff_grad(model, batch, proximal, step=1e-5)
        err = max_relative_error(analytic, numeric)
        worst = max(worst, err)
        if err >= tolerance:
            return CheckResult(
                name="gradient_check",
                passed=False,
                detail=f"trial {trial}: relative error {err:.2e} >= {tolerance}",
            )
    return CheckResult(
        name="gradient_check",
        passed=True,
        detail=f"{trials} instances, worst relative error {worst:.2e}",
    )


def run_selftest(
    judgment_trials: int = 1000, gradient_trials: int = 20, seed: int = 0
) -> list[CheckResult]:
    return [
        judgment_oracle_check(trials=judgment_trials, seed=seed),
        gradient_check(trials=gradient_trials, seed=seed),
    ]
