"""Training loop with worst-group early stopping and trajectory logging.

Plain gradient descent on the combined direction from the balancer: each
step computes per-group losses and gradients, asks the strategy for
weights, and applies theta <- theta - eta * direction.  Validation
metrics are recorded every `eval_every` epochs; the parameters of the
epoch with the highest worst-group validation accuracy (earliest on
ties) are restored for the final test evaluation.

Full-batch mode takes one step per epoch.  Group-minibatch mode draws
equal-size per-group batches without replacement within each epoch and
takes one step per draw.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import balancer, metrics, models
from .balancer import BalancerConfig, Strategy
from .data_synth import Dataset
from .models import Batch, ModelSpec

__all__ = [
    "DivergenceError",
    "TrainConfig",
    "TrajectoryPoint",
    "StepRecord",
    "TrainReport",
    "fit",
    "sweep_control",
    "report_to_json_dict",
    "write_report_json",
    "write_trajectory_csv",
]

DIVERGENCE_LIMIT = 1e6
_BATCH_MODES = ("full", "group_minibatch")


class DivergenceError(RuntimeError):
    """A group loss left the finite, bounded regime; training aborted."""


@dataclass(frozen=True)
class TrainConfig:
    strategy: Strategy = Strategy.CPT
    learning_rate: float = 0.5
    epochs: int = 300
    batch_mode: str = "full"
    group_batch_size: int = 32
    balancer: BalancerConfig = field(default_factory=BalancerConfig)
    control: tuple | None = None  # None means all ones
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        if not (np.isfinite(self.learning_rate) and self.learning_rate >= 0.0):
            raise ValueError("learning_rate must be finite and >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_mode not in _BATCH_MODES:
            raise ValueError(f"batch_mode must be one of {_BATCH_MODES}")
        if self.group_batch_size < 1:
            raise ValueError("group_batch_size must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.control is not None:
            c = tuple(float(x) for x in self.control)
            if any(not np.isfinite(x) or x <= 0 for x in c):
                raise ValueError("control entries must be strictly positive and finite")
            object.__setattr__(self, "control", c)


@dataclass(frozen=True)
class TrajectoryPoint:
    epoch: int
    train_losses: np.ndarray
    val_per_group_accuracy: np.ndarray
    val_worst: float
    val_weighted_average: float
    val_mean: float
    branch: str  # branch of the last step before this evaluation
    branch_counts: dict


@dataclass(frozen=True)
class StepRecord:
    epoch: int
    branch: str
    weights: np.ndarray
    dent_norm: float
    worst_set: tuple
    dir_dot_g: np.ndarray
    dent_dot_g: np.ndarray


@dataclass(frozen=True)
class TrainReport:
    strategy: str
    config: TrainConfig
    num_groups: int
    train_group_sizes: tuple
    train_weights: np.ndarray
    trajectory: tuple
    steps: tuple
    best_epoch: int
    best_params: np.ndarray
    final_params: np.ndarray
    final_train_losses: np.ndarray
    test: metrics.GroupMetrics


def _check_losses(losses: np.ndarray, epoch: int) -> None:
    if not np.all(np.isfinite(losses)):
        bad = int(np.nonzero(~np.isfinite(losses))[0][0])
        raise DivergenceError(f"group {bad} loss became non-finite at epoch {epoch}")
    if np.max(losses) > DIVERGENCE_LIMIT:
        bad = int(np.argmax(losses))
        raise DivergenceError(
            f"group {bad} loss {losses[bad]:.3e} exceeded {DIVERGENCE_LIMIT:.0e} at epoch {epoch}"
        )


def _epoch_batches(train: Batch, cfg: TrainConfig, rng: np.random.Generator):
    if cfg.batch_mode == "full":
        yield train
        return
    k = train.num_groups
    by_group = [np.nonzero(train.group_ids == gid)[0] for gid in range(k)]
    size = cfg.group_batch_size
    n_steps = min(rows.size // size for rows in by_group)
    if n_steps < 1:
        smallest = min(rows.size for rows in by_group)
        raise ValueError(
            f"group_batch_size {size} exceeds the smallest group ({smallest} samples)"
        )
    perms = [rng.permutation(rows) for rows in by_group]
    for t in range(n_steps):
        rows = np.concatenate([perm[t * size : (t + 1) * size] for perm in perms])
        yield train.take(rows)


def fit(model_spec: ModelSpec, data: Dataset, cfg: TrainConfig) -> TrainReport:
    """Train, early-stop on worst-group validation accuracy, evaluate test."""
    k = data.train.num_groups
    if model_spec.feature_dim != data.train.inputs.shape[1]:
        raise ValueError(
            f"model expects {model_spec.feature_dim} features, data has {data.train.inputs.shape[1]}"
        )
    control = np.ones(k) if cfg.control is None else np.asarray(cfg.control, dtype=np.float64)
    if control.shape != (k,):
        raise ValueError(f"control must have one entry per group ({k})")

    train_sizes = np.bincount(data.train.group_ids, minlength=k)
    if np.any(train_sizes == 0):
        raise ValueError("every group must appear in the training split")
    train_weights = train_sizes / train_sizes.sum()

    params = models.init(model_spec, cfg.seed)
    sampler = np.random.default_rng([cfg.seed, 1])

    trajectory: list[TrajectoryPoint] = []
    steps: list[StepRecord] = []
    best_epoch = -1
    best_worst = -np.inf
    best_params = params.copy()
    last_branch = "none"
    period_branches: Counter = Counter()

    for epoch in range(1, cfg.epochs + 1):
        for batch in _epoch_batches(data.train, cfg, sampler):
            losses, grads, counts = models.group_losses_and_grads(model_spec, params, batch)
            _check_losses(losses, epoch)
            decision = balancer.step(
                losses, grads, control, cfg.strategy, cfg.balancer, group_sizes=counts
            )
            params = params - cfg.learning_rate * decision.direction
            last_branch = decision.branch
            period_branches[decision.branch] += 1
            steps.append(
                StepRecord(
                    epoch=epoch,
                    branch=decision.branch,
                    weights=decision.weights,
                    dent_norm=decision.diagnostics.dent_norm,
                    worst_set=decision.diagnostics.worst_set,
                    dir_dot_g=decision.diagnostics.dir_dot_g,
                    dent_dot_g=decision.diagnostics.dent_dot_g,
                )
            )

        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            train_losses = models.group_losses(model_spec, params, data.train)
            _check_losses(train_losses, epoch)
            val_pred, _ = models.predict(model_spec, params, data.val.inputs)
            vm = metrics.group_accuracy(
                val_pred, data.val.labels, data.val.group_ids, train_weights
            )
            trajectory.append(
                TrajectoryPoint(
                    epoch=epoch,
                    train_losses=train_losses,
                    val_per_group_accuracy=vm.per_group_accuracy,
                    val_worst=vm.worst,
                    val_weighted_average=vm.weighted_average,
                    val_mean=vm.mean,
                    branch=last_branch,
                    branch_counts=dict(period_branches),
                )
            )
            period_branches = Counter()
            if vm.worst > best_worst:
                best_worst = vm.worst
                best_epoch = epoch
                best_params = params.copy()

    test_pred, _ = models.predict(model_spec, best_params, data.test.inputs)
    test_metrics = metrics.group_accuracy(
        test_pred, data.test.labels, data.test.group_ids, train_weights
    )
    return TrainReport(
        strategy=cfg.strategy.value,
        config=cfg,
        num_groups=k,
        train_group_sizes=tuple(int(n) for n in train_sizes),
        train_weights=train_weights,
        trajectory=tuple(trajectory),
        steps=tuple(steps),
        best_epoch=best_epoch,
        best_params=best_params,
        final_params=params,
        final_train_losses=trajectory[-1].train_losses,
        test=test_metrics,
    )


def sweep_control(model_spec, data, base_cfg: TrainConfig, c_list, max_workers: int = 1):
    """One independent fit per controlling vector; same data and seed."""
    configs = [replace(base_cfg, control=tuple(float(x) for x in c)) for c in c_list]
    if max_workers <= 1 or len(configs) <= 1:
        return [fit(model_spec, data, cfg) for cfg in configs]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(fit, model_spec, data, cfg) for cfg in configs]
        return [f.result() for f in futures]


def _config_json(cfg: TrainConfig) -> dict:
    return {
        "strategy": cfg.strategy.value,
        "learning_rate": cfg.learning_rate,
        "epochs": cfg.epochs,
        "batch_mode": cfg.batch_mode,
        "group_batch_size": cfg.group_batch_size,
        "balancer": {
            "eps_balance": cfg.balancer.eps_balance,
            "tie_tol": cfg.balancer.tie_tol,
            "coefficient_variant": cfg.balancer.coefficient_variant,
            "fallback": cfg.balancer.fallback,
        },
        "control": None if cfg.control is None else list(cfg.control),
        "seed": cfg.seed,
        "eval_every": cfg.eval_every,
    }


def report_to_json_dict(report: TrainReport) -> dict:
    return {
        "strategy": report.strategy,
        "config": _config_json(report.config),
        "num_groups": report.num_groups,
        "train_group_sizes": list(report.train_group_sizes),
        "train_weights": [float(x) for x in report.train_weights],
        "best_epoch": report.best_epoch,
        "trajectory": [
            {
                "epoch": p.epoch,
                "train_losses": [float(x) for x in p.train_losses],
                "val_per_group_accuracy": [float(x) for x in p.val_per_group_accuracy],
                "val_worst": p.val_worst,
                "val_weighted_average": p.val_weighted_average,
                "val_mean": p.val_mean,
                "branch": p.branch,
                "branch_counts": p.branch_counts,
            }
            for p in report.trajectory
        ],
        "steps": [
            {
                "epoch": s.epoch,
                "branch": s.branch,
                "weights": [float(x) for x in s.weights],
                "dent_norm": s.dent_norm,
                "worst_set": list(s.worst_set),
                "dir_dot_g": [float(x) for x in s.dir_dot_g],
                "dent_dot_g": [float(x) for x in s.dent_dot_g],
            }
            for s in report.steps
        ],
        "final_train_losses": [float(x) for x in report.final_train_losses],
        "final_train_loss_gap": metrics.loss_gap(report.final_train_losses),
        "test": {
            "per_group_accuracy": [float(x) for x in report.test.per_group_accuracy],
            "worst": report.test.worst,
            "weighted_average": report.test.weighted_average,
            "mean": report.test.mean,
            "weights_used": [float(x) for x in report.test.weights_used],
        },
        "best_params": [float(x) for x in report.best_params],
        "final_params": [float(x) for x in report.final_params],
    }


def write_report_json(report: TrainReport, path) -> None:
    Path(path).write_text(json.dumps(report_to_json_dict(report), indent=2) + "\n")


def write_trajectory_csv(report: TrainReport, path) -> None:
    k = report.num_groups
    header = (
        ["epoch"]
        + [f"loss_g{i}" for i in range(k)]
        + [f"acc_g{i}" for i in range(k)]
        + ["worst", "avg", "mean", "branch"]
    )
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for p in report.trajectory:
            row = (
                [p.epoch]
                + [repr(float(x)) for x in p.train_losses]
                + [repr(float(x)) for x in p.val_per_group_accuracy]
                + [repr(float(p.val_worst)), repr(float(p.val_weighted_average))]
                + [repr(float(p.val_mean)), p.branch]
            )
            writer.writerow(row)
