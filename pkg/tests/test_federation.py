import numpy as np
import pytest

from fedentropy.experiment import build_config
from fedentropy.federation import (
    ClientConfig,
    aggregate_models,
    client_update,
    evaluate,
    init_training,
    run_round,
    run_training,
)
from fedentropy.model import Batch, ModelParams, loss_and_grad


def toy_batch(seed=0, n=40, dims=4, classes=3):
    rng = np.random.default_rng(seed)
    return Batch(rng.normal(size=(n, dims)), rng.integers(0, classes, size=n))


def small_cfg(**overrides):
    base = {
        "classes": 4,
        "dims": 4,
        "per_class": 30,
        "devices": 8,
        "fraction": 0.5,
        "rounds": 6,
        "epochs": 2,
        "batch_size": 10,
        "seeds": [0],
        "spread": 1.0,
    }
    base.update(overrides)
    return build_config(base)


def params_equal(a: ModelParams, b: ModelParams, atol=0.0):
    for x, y in zip(a.weights + a.biases, b.weights + b.biases):
        if atol == 0.0:
            if not np.array_equal(x, y):
                return False
        elif not np.allclose(x, y, atol=atol):
            return False
    return True


def test_client_update_lr_zero_returns_broadcast_model():
    global_model = ModelParams.init(4, 3, rng=np.random.default_rng(0))
    cfg = ClientConfig(epochs=3, batch_size=8, learning_rate=0.0, momentum=0.5)
    local, summary = client_update(global_model, toy_batch(), cfg, np.random.default_rng(1))
    assert params_equal(local, global_model)
    assert summary.sample_count == 40


def test_client_update_fedprox_mu_zero_matches_fedavg():
    global_model = ModelParams.init(4, 3, rng=np.random.default_rng(2))
    data = toy_batch(seed=3)
    avg = ClientConfig(epochs=2, batch_size=8, optimizer="fedavg")
    prox = ClientConfig(epochs=2, batch_size=8, optimizer="fedprox", mu=0.0)
    local_a, _ = client_update(global_model, data, avg, np.random.default_rng(7))
    local_p, _ = client_update(global_model, data, prox, np.random.default_rng(7))
    assert params_equal(local_a, local_p)


def test_client_update_fedprox_pulls_toward_anchor():
    global_model = ModelParams.init(4, 3, rng=np.random.default_rng(4))
    data = toy_batch(seed=5)
    free = ClientConfig(epochs=5, batch_size=8, optimizer="fedavg")
    tight = ClientConfig(epochs=5, batch_size=8, optimizer="fedprox", mu=10.0)
    local_f, _ = client_update(global_model, data, free, np.random.default_rng(8))
    local_t, _ = client_update(global_model, data, tight, np.random.default_rng(8))

    def dist(m):
        return sum(
            float(np.sum((a - b) ** 2))
            for a, b in zip(m.weights + m.biases, global_model.weights + global_model.biases)
        )

    assert dist(local_t) < dist(local_f)


def test_client_update_loss_decreases_over_epochs():
    # one device holding the full dataset: plain optimization must make progress
    cfg = small_cfg()
    state = init_training(cfg, seed=0, mode="fedavg_random")
    merged = Batch(
        np.concatenate([b.inputs for b in state.device_data]),
        np.concatenate([b.labels for b in state.device_data]),
    )
    client = ClientConfig(epochs=1, batch_size=20, learning_rate=0.05, momentum=0.5)
    model = state.model
    losses = [loss_and_grad(model, merged)[0]]
    for step in range(3):
        model, _ = client_update(model, merged, client, np.random.default_rng(step))
        losses.append(loss_and_grad(model, merged)[0])
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_client_update_rejects_empty_data():
    model = ModelParams.init(2, 2)
    with pytest.raises(ValueError):
        client_update(
            model,
            Batch(np.zeros((0, 2)), np.zeros(0, dtype=int)),
            ClientConfig(),
            np.random.default_rng(0),
        )


def test_aggregate_identical_models():
    model = ModelParams.init(3, 3, rng=np.random.default_rng(1))
    models = {k: model.clone() for k in range(3)}
    merged = aggregate_models(models, {k: 5 for k in range(3)}, {0, 1, 2})
    assert params_equal(merged, model)
    for v in merged.vel_weights + merged.vel_biases:
        assert not v.any()


def test_aggregate_equal_counts_is_midpoint():
    rng = np.random.default_rng(2)
    a = ModelParams.init(3, 3, rng=rng, scale=1.0)
    b = ModelParams.init(3, 3, rng=rng, scale=1.0)
    merged = aggregate_models({0: a, 1: b}, {0: 4, 1: 4}, {0, 1})
    for m, x, y in zip(merged.weights, a.weights, b.weights):
        assert np.allclose(m, (x + y) / 2, atol=1e-15)


def test_aggregate_weighted_matches_independent_sum():
    rng = np.random.default_rng(3)
    models = {k: ModelParams.init(3, 4, rng=rng, scale=1.0) for k in range(3)}
    counts = {0: 1, 1: 2, 2: 3}
    merged = aggregate_models(models, counts, {0, 1, 2})
    # independent recomputation with a different accumulation order
    for layer in range(len(merged.weights)):
        expected = sum(counts[k] * models[k].weights[layer] for k in (2, 1, 0)) / 6.0
        assert np.allclose(merged.weights[layer], expected, atol=1e-15)
        expected_b = sum(counts[k] * models[k].biases[layer] for k in (2, 1, 0)) / 6.0
        assert np.allclose(merged.biases[layer], expected_b, atol=1e-15)


def test_aggregate_singleton_returns_model_exactly():
    model = ModelParams.init(2, 3, rng=np.random.default_rng(4))
    merged = aggregate_models({7: model}, {7: 9}, {7})
    assert params_equal(merged, model)


def test_aggregate_is_linear_in_scaling():
    rng = np.random.default_rng(5)
    models = {k: ModelParams.init(2, 3, rng=rng, scale=1.0) for k in range(3)}
    counts = {0: 2, 1: 3, 2: 5}
    merged = aggregate_models(models, counts, {0, 1, 2})
    alpha = 3.7
    scaled = {
        k: ModelParams.from_arrays(
            [alpha * w for w in m.weights], [alpha * b for b in m.biases]
        )
        for k, m in models.items()
    }
    merged_scaled = aggregate_models(scaled, counts, {0, 1, 2})
    for a, b in zip(merged_scaled.weights + merged_scaled.biases, merged.weights + merged.biases):
        assert np.allclose(a, alpha * b, atol=1e-12)


def test_aggregate_rejects_empty_and_mismatched():
    model = ModelParams.init(2, 2)
    with pytest.raises(ValueError):
        aggregate_models({0: model}, {0: 1}, set())
    with pytest.raises(ValueError):
        aggregate_models({0: model, 1: ModelParams.init(3, 2)}, {0: 1, 1: 1}, {0, 1})


def test_evaluate_uniform_model_on_balanced_test():
    cfg = small_cfg()
    state = init_training(cfg, seed=0, mode="fedavg_random")
    uniform = ModelParams.init(cfg.dims, cfg.classes)  # zero weights
    # argmax ties break to class 0; the test split is balanced
    assert evaluate(uniform, state.test_data) == pytest.approx(1.0 / cfg.classes)


def test_evaluate_perfect_model_and_bounds():
    # strongly separated blobs + the Bayes-optimal linear rule: score with
    # x.mu_k - |mu_k|^2/2, which recovers every label
    cfg = small_cfg(spread=0.3)
    state = init_training(cfg, seed=1, mode="fedavg_random")
    train = np.concatenate([b.inputs for b in state.device_data])
    labels = np.concatenate([b.labels for b in state.device_data])
    centroids = np.stack([train[labels == k].mean(axis=0) for k in range(cfg.classes)])
    bayes = ModelParams.from_arrays(
        [centroids.T], [-0.5 * (centroids**2).sum(axis=1)]
    )
    assert evaluate(bayes, state.test_data) == 1.0

    rng = np.random.default_rng(0)
    for _ in range(5):
        random_model = ModelParams.init(cfg.dims, cfg.classes, rng=rng, scale=2.0)
        assert 0.0 <= evaluate(random_model, state.test_data) <= 1.0


def test_evaluate_rejects_empty():
    from fedentropy.datagen import Dataset

    model = ModelParams.init(2, 2)
    empty = Dataset.__new__(Dataset)
    empty.inputs = np.zeros((0, 2))
    empty.labels = np.zeros(0, dtype=np.int64)
    empty.class_count = 2
    with pytest.raises(ValueError):
        evaluate(model, empty)


def test_round_accounting_without_judgment():
    cfg = small_cfg()
    state = init_training(cfg, seed=0, mode="fedavg_random")
    m = state.selection.round_size
    for _ in range(4):
        report = run_round(state)
        assert report.rejected == ()
        assert report.bytes_models == m * state.model.size_bytes
        assert report.bytes_labels == m * cfg.classes * 8
    # judgment disabled: every device returns to the positive pool
    assert state.pools.positive == set(range(cfg.devices))
    assert state.pools.negative == set()


def test_round_accounting_with_judgment():
    cfg = small_cfg(rounds=10, classes=6, devices=12, per_class=40)
    state = init_training(cfg, seed=3, mode="fedentropy")
    m = state.selection.round_size
    size = state.model.size_bytes
    saw_rejection = False
    for _ in range(cfg.rounds):
        report = run_round(state)
        assert len(report.accepted) + len(report.rejected) == len(report.selected)
        assert report.bytes_models == len(report.accepted) * size
        assert report.bytes_models <= m * size
        assert report.entropy_final >= report.entropy_initial
        if report.rejected:
            saw_rejection = True
            assert report.bytes_models < m * size
    assert saw_rejection


def test_round_with_lr_zero_keeps_global_model():
    cfg = small_cfg()
    state = init_training(cfg, seed=0, mode="fedentropy")
    state.client = ClientConfig(
        epochs=2, batch_size=10, learning_rate=0.0, momentum=0.5
    )
    before = state.model.clone()
    report = run_round(state)
    assert params_equal(state.model, before, atol=1e-15)
    assert report.accuracy == evaluate(before, state.test_data)


def test_round_identical_device_data_rejects_nothing():
    # every device holds the same samples and lr=0 keeps models identical,
    # so all summaries coincide and no removal can strictly raise entropy
    cfg = small_cfg()
    state = init_training(cfg, seed=2, mode="fedentropy")
    shared = state.device_data[0]
    state.device_data = [shared for _ in range(cfg.devices)]
    state.client = ClientConfig(epochs=2, batch_size=10, learning_rate=0.0, momentum=0.5)
    for _ in range(3):
        report = run_round(state)
        assert report.rejected == ()
        assert report.accepted == report.selected


def test_first_round_selection_matches_across_modes():
    cfg = small_cfg()
    state_fe = init_training(cfg, seed=5, mode="fedentropy")
    state_fa = init_training(cfg, seed=5, mode="fedavg_random")
    report_fe = run_round(state_fe)
    report_fa = run_round(state_fa)
    assert report_fe.selected == report_fa.selected


def test_run_training_zero_rounds():
    cfg = small_cfg(rounds=0)
    reports, model = run_training(cfg, seed=0, mode="fedentropy")
    assert reports == []
    assert params_equal(model, init_training(cfg, 0, "fedentropy").model)


def test_run_training_deterministic():
    cfg = small_cfg(rounds=5)
    a, model_a = run_training(cfg, seed=9, mode="fedentropy")
    b, model_b = run_training(cfg, seed=9, mode="fedentropy")
    assert params_equal(model_a, model_b)
    for ra, rb in zip(a, b):
        assert ra.selected == rb.selected
        assert ra.accepted == rb.accepted
        assert ra.rejected == rb.rejected
        assert ra.accuracy == rb.accuracy
        assert ra.entropy_final == rb.entropy_final
        assert ra.bytes_models == rb.bytes_models


def test_run_training_rejects_unknown_mode():
    with pytest.raises(ValueError):
        run_training(small_cfg(), seed=0, mode="whatever")


def test_fedprox_modes_use_proximal_optimizer():
    cfg = small_cfg()
    state = init_training(cfg, seed=0, mode="fedprox_fedentropy")
    assert state.client.optimizer == "fedprox"
    assert state.judging
    state2 = init_training(cfg, seed=0, mode="fedprox_random")
    assert state2.client.optimizer == "fedprox"
    assert not state2.judging


def test_baseline_wrapper_guards_mode():
    from fedentropy.federation import baseline_random_round

    cfg = small_cfg()
    state = init_training(cfg, seed=0, mode="fedentropy")
    with pytest.raises(ValueError):
        baseline_random_round(state)
    state_fa = init_training(cfg, seed=0, mode="fedavg_random")
    report = baseline_random_round(state_fa)
    assert report.rejected == ()
