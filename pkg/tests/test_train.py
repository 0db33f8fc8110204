import csv
import json

import numpy as np
import pytest

from groupbal import balancer, metrics
from groupbal.data_synth import Dataset, SyntheticSpec, generate
from groupbal.models import Batch, ModelSpec, group_losses_and_grads, init, loss_and_grad, predict
from groupbal.train import (
    DivergenceError,
    TrainConfig,
    fit,
    sweep_control,
    write_report_json,
    write_trajectory_csv,
)

LINEAR8 = ModelSpec(kind="linear_softmax", feature_dim=8, classes=2)
SMALL_SPEC = SyntheticSpec(n_train=400, n_val=80, n_test=80)


@pytest.fixture(scope="module")
def small_data():
    return generate(SMALL_SPEC, 0)


def mirror_dataset(n_per_group=40, seed=0):
    """Two groups holding identical samples: perfectly symmetric problem."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_per_group, 3))
    y = rng.integers(0, 2, n_per_group)
    batch = Batch(
        np.vstack([x, x]),
        np.concatenate([y, y]),
        np.concatenate([np.zeros(n_per_group, int), np.ones(n_per_group, int)]),
        num_groups=2,
    )
    return Dataset(train=batch, val=batch, test=batch, spec=None, seed=seed)


def test_average_on_symmetric_groups_keeps_losses_equal():
    data = mirror_dataset()
    spec = ModelSpec(kind="linear_softmax", feature_dim=3, classes=2)
    cfg = TrainConfig(strategy="average", learning_rate=0.2, epochs=30, seed=1)
    report = fit(spec, data, cfg)
    for point in report.trajectory:
        assert abs(point.train_losses[0] - point.train_losses[1]) <= 1e-9


def test_zero_learning_rate_is_a_null_run(small_data):
    cfg = TrainConfig(strategy="cpt", learning_rate=0.0, epochs=5, seed=3)
    report = fit(LINEAR8, small_data, cfg)
    assert np.array_equal(report.final_params, init(LINEAR8, 3))
    assert report.best_epoch == 1  # earliest epoch wins the tie
    first = report.trajectory[0]
    for point in report.trajectory[1:]:
        assert np.array_equal(point.train_losses, first.train_losses)
        assert point.val_worst == first.val_worst


def test_determinism(small_data):
    cfg = TrainConfig(strategy="cpt", epochs=10, seed=5)
    a = fit(LINEAR8, small_data, cfg)
    b = fit(LINEAR8, small_data, cfg)
    assert np.array_equal(a.final_params, b.final_params)
    assert np.array_equal(a.best_params, b.best_params)
    assert a.best_epoch == b.best_epoch
    for pa, pb in zip(a.trajectory, b.trajectory):
        assert np.array_equal(pa.train_losses, pb.train_losses)
        assert pa.val_worst == pb.val_worst


def test_groupdro_single_step_exact(small_data):
    eta = 0.3
    cfg = TrainConfig(strategy="groupdro", learning_rate=eta, epochs=1, seed=2)
    report = fit(LINEAR8, small_data, cfg)
    params0 = init(LINEAR8, 2)
    losses, grads, _ = group_losses_and_grads(LINEAR8, params0, small_data.train)
    worst = int(np.argmax(losses))
    expected = params0 - eta * grads[worst]
    assert np.array_equal(report.final_params, expected)


def test_groupdro_50_epoch_replay_exact(small_data):
    eta = 0.3
    cfg = TrainConfig(strategy="groupdro", learning_rate=eta, epochs=50, seed=2)
    report = fit(LINEAR8, small_data, cfg)
    params = init(LINEAR8, 2)
    for _ in range(50):
        losses, grads, _ = group_losses_and_grads(LINEAR8, params, small_data.train)
        worst = int(np.argmax(losses))
        # the step direction is exactly the worst group's gradient
        params = params - eta * grads[worst]
    assert np.array_equal(report.final_params, params)


def test_erm_pooled_matches_plain_gradient_descent(small_data):
    eta = 0.3
    params_grouped = init(LINEAR8, 4)
    params_pooled = params_grouped.copy()
    x, y = small_data.train.inputs, small_data.train.labels
    for _ in range(50):
        losses, grads, counts = group_losses_and_grads(LINEAR8, params_grouped, small_data.train)
        decision = balancer.step(losses, grads, None, "erm", group_sizes=counts)
        _, pooled_grad = loss_and_grad(LINEAR8, params_pooled, x, y)
        assert np.allclose(decision.direction, pooled_grad, atol=1e-10)
        params_grouped = params_grouped - eta * decision.direction
        params_pooled = params_pooled - eta * pooled_grad
    # and fit applies exactly the grouped updates
    cfg = TrainConfig(strategy="erm", learning_rate=eta, epochs=50, seed=4)
    report = fit(LINEAR8, small_data, cfg)
    replay = init(LINEAR8, 4)
    for _ in range(50):
        losses, grads, counts = group_losses_and_grads(LINEAR8, replay, small_data.train)
        decision = balancer.step(losses, grads, None, "erm", group_sizes=counts)
        replay = replay - eta * decision.direction
    assert np.array_equal(report.final_params, replay)


def test_early_stopping_restores_best_epoch(small_data):
    cfg = TrainConfig(strategy="groupdro", learning_rate=0.5, epochs=40, seed=0)
    report = fit(LINEAR8, small_data, cfg)
    worsts = [p.val_worst for p in report.trajectory]
    best_idx = int(np.argmax(worsts))
    assert report.best_epoch == report.trajectory[best_idx].epoch
    # earliest epoch on ties
    for p in report.trajectory[:best_idx]:
        assert p.val_worst < worsts[best_idx]
    # reported test metrics come from the best params, not the final ones
    pred, _ = predict(LINEAR8, report.best_params, small_data.test.inputs)
    expected = metrics.group_accuracy(
        pred,
        small_data.test.labels,
        small_data.test.group_ids,
        np.asarray(report.train_weights),
    )
    assert np.array_equal(expected.per_group_accuracy, report.test.per_group_accuracy)
    assert expected.worst == report.test.worst


def test_divergence_guard(small_data):
    cfg = TrainConfig(strategy="erm", learning_rate=1e9, epochs=30, seed=0)
    with pytest.raises(DivergenceError, match="group"):
        fit(LINEAR8, small_data, cfg)


def test_eval_every_and_final_epoch(small_data):
    cfg = TrainConfig(strategy="average", epochs=10, eval_every=4, seed=0)
    report = fit(LINEAR8, small_data, cfg)
    assert [p.epoch for p in report.trajectory] == [4, 8, 10]


def test_group_minibatch_mode(small_data):
    cfg = TrainConfig(
        strategy="cpt", epochs=3, batch_mode="group_minibatch", group_batch_size=2, seed=0
    )
    report = fit(LINEAR8, small_data, cfg)
    counts = np.bincount(small_data.train.group_ids, minlength=4)
    steps_per_epoch = int(counts.min()) // 2
    assert len(report.steps) == 3 * steps_per_epoch
    again = fit(LINEAR8, small_data, cfg)
    assert np.array_equal(report.final_params, again.final_params)


def test_group_minibatch_too_large(small_data):
    cfg = TrainConfig(
        strategy="cpt", epochs=1, batch_mode="group_minibatch", group_batch_size=10_000, seed=0
    )
    with pytest.raises(ValueError, match="smallest group"):
        fit(LINEAR8, small_data, cfg)


def test_sweep_singleton_equals_fit(small_data):
    base = TrainConfig(strategy="cpt", epochs=8, seed=1)
    [swept] = sweep_control(LINEAR8, small_data, base, [(1.0, 1.0, 1.0, 1.0)])
    direct = fit(LINEAR8, small_data, TrainConfig(strategy="cpt", epochs=8, seed=1, control=(1.0,) * 4))
    assert np.array_equal(swept.final_params, direct.final_params)
    assert swept.test.worst == direct.test.worst


def test_sweep_parallel_matches_serial(small_data):
    base = TrainConfig(strategy="cpt", epochs=6, seed=1)
    cs = [(1.0, 1.0, 1.0, 1.0), (1.0, 1.0, 1.0, 2.0)]
    serial = sweep_control(LINEAR8, small_data, base, cs, max_workers=1)
    parallel = sweep_control(LINEAR8, small_data, base, cs, max_workers=2)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.final_params, b.final_params)


def test_permutation_symmetry():
    # relabeling groups (and permuting c accordingly) permutes the metrics
    rng = np.random.default_rng(8)
    n = 80
    x = rng.standard_normal((n, 4))
    y = rng.integers(0, 2, n)
    gid = rng.integers(0, 4, n)
    gid[:4] = np.arange(4)
    perm = np.array([2, 0, 3, 1])  # new id of each old group
    spec = ModelSpec(kind="linear_softmax", feature_dim=4, classes=2)
    base_batch = Batch(x, y, gid, 4)
    perm_batch = Batch(x, y, perm[gid], 4)
    data_a = Dataset(train=base_batch, val=base_batch, test=base_batch, spec=None, seed=0)
    data_b = Dataset(train=perm_batch, val=perm_batch, test=perm_batch, spec=None, seed=0)
    c = np.array([1.0, 2.0, 0.5, 1.5])
    c_perm = np.empty(4)
    c_perm[perm] = c
    cfg_a = TrainConfig(strategy="cpt", learning_rate=0.2, epochs=5, seed=0, control=tuple(c))
    cfg_b = TrainConfig(strategy="cpt", learning_rate=0.2, epochs=5, seed=0, control=tuple(c_perm))
    ra = fit(spec, data_a, cfg_a)
    rb = fit(spec, data_b, cfg_b)
    assert np.allclose(
        np.asarray(rb.final_train_losses)[perm], np.asarray(ra.final_train_losses), atol=1e-9
    )
    assert np.allclose(
        np.asarray(rb.test.per_group_accuracy)[perm],
        np.asarray(ra.test.per_group_accuracy),
        atol=1e-12,
    )


def test_report_serialization(tmp_path, small_data):
    cfg = TrainConfig(strategy="cpt", epochs=5, seed=0)
    report = fit(LINEAR8, small_data, cfg)

    json_path = tmp_path / "report.json"
    write_report_json(report, json_path)
    doc = json.loads(json_path.read_text())
    assert doc["strategy"] == "cpt"
    assert doc["best_epoch"] == report.best_epoch
    assert len(doc["trajectory"]) == len(report.trajectory)
    assert doc["test"]["worst"] == report.test.worst
    assert len(doc["steps"]) == len(report.steps)
    assert doc["final_train_loss_gap"] == pytest.approx(
        float(np.ptp(report.final_train_losses)), abs=1e-15
    )

    csv_path = tmp_path / "trajectory.csv"
    write_trajectory_csv(report, csv_path)
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == (
        ["epoch"]
        + [f"loss_g{i}" for i in range(4)]
        + [f"acc_g{i}" for i in range(4)]
        + ["worst", "avg", "mean", "branch"]
    )
    assert len(rows) == 1 + len(report.trajectory)
    first = rows[1]
    assert int(first[0]) == report.trajectory[0].epoch
    assert float(first[1]) == report.trajectory[0].train_losses[0]
    assert first[-1] == report.trajectory[0].branch
    # LF line endings, '.' decimals
    raw = csv_path.read_bytes()
    assert b"\r" not in raw

    # identical runs serialize to identical bytes
    report2 = fit(LINEAR8, small_data, cfg)
    json_path2 = tmp_path / "report2.json"
    write_report_json(report2, json_path2)
    assert json_path.read_bytes() == json_path2.read_bytes()


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-0.1)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_mode="stochastic")
    with pytest.raises(ValueError):
        TrainConfig(control=(1.0, 0.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        TrainConfig(strategy="adamw")


def test_control_length_checked(small_data):
    cfg = TrainConfig(strategy="cpt", epochs=1, control=(1.0, 1.0))
    with pytest.raises(ValueError, match="control"):
        fit(LINEAR8, small_data, cfg)
