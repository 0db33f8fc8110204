"""Command-line harness: dataset generation, training, strategy comparison, c-sweeps.

All commands read a single JSON run config (strict: unknown keys are
rejected) and write machine-readable outputs: dataset JSON containers,
report JSON, trajectory/summary/pivot CSV.  Exit codes are a stable
scripting contract: 0 success, 1 I/O failure, 2 invalid config or
arguments, 3 numerical divergence.

GROUPBAL_THREADS caps worker parallelism for compare and sweep-c
(default: the logical CPU count).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import data_synth, train
from .balancer import BalancerConfig, Strategy
from .data_synth import SyntheticSpec
from .metrics import loss_gap
from .models import ModelSpec
from .train import DivergenceError, TrainConfig

__all__ = ["ConfigError", "main"]

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3


class ConfigError(ValueError):
    """Invalid run configuration or command arguments."""


@dataclass(frozen=True)
class RunConfig:
    data_spec: SyntheticSpec | None
    data_seed: int
    dataset_path: str | None
    model_spec: ModelSpec
    train_cfg: TrainConfig
    out_dir: str | None


_TOP_KEYS = {"data", "dataset_path", "model", "train", "out_dir"}
_DATA_KEYS = {
    "n_train",
    "n_val",
    "n_test",
    "proportions",
    "core_gap",
    "spurious_gap",
    "noise_dims",
    "noise_sigma",
    "val_test_balance",
    "seed",
}
_MODEL_KEYS = {"kind", "feature_dim", "classes", "hidden", "activation"}
_TRAIN_KEYS = {
    "strategy",
    "learning_rate",
    "epochs",
    "batch_mode",
    "group_batch_size",
    "balancer",
    "control",
    "seed",
    "eval_every",
}
_BALANCER_KEYS = {"eps_balance", "tie_tol", "coefficient_variant", "fallback"}


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def _require_dict(obj, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    return obj


def load_run_config(path) -> RunConfig:
    try:
        raw = Path(path).read_text()
    except OSError:
        raise
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    doc = _require_dict(doc, "config")
    _reject_unknown(doc, _TOP_KEYS, "config")

    if ("data" in doc) == ("dataset_path" in doc):
        raise ConfigError("config needs exactly one of 'data' or 'dataset_path'")

    data_spec = None
    data_seed = 0
    dataset_path = None
    if "dataset_path" in doc:
        if not isinstance(doc["dataset_path"], str):
            raise ConfigError("'dataset_path' must be a string")
        dataset_path = doc["dataset_path"]
    else:
        section = _require_dict(doc["data"], "'data'")
        _reject_unknown(section, _DATA_KEYS, "'data'")
        data_seed = int(section.get("seed", 0))
        fields = {k: v for k, v in section.items() if k != "seed"}
        if "proportions" in fields:
            fields["proportions"] = tuple(fields["proportions"])
        try:
            data_spec = SyntheticSpec(**fields)
        except ValueError as exc:
            raise ConfigError(f"invalid 'data' section: {exc}") from None

    model_section = _require_dict(doc.get("model"), "'model'")
    _reject_unknown(model_section, _MODEL_KEYS, "'model'")
    try:
        model_spec = ModelSpec(**model_section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid 'model' section: {exc}") from None

    train_section = _require_dict(doc.get("train"), "'train'")
    _reject_unknown(train_section, _TRAIN_KEYS, "'train'")
    fields = dict(train_section)
    if "balancer" in fields:
        bal = _require_dict(fields["balancer"], "'train.balancer'")
        _reject_unknown(bal, _BALANCER_KEYS, "'train.balancer'")
        try:
            fields["balancer"] = BalancerConfig(**bal)
        except ValueError as exc:
            raise ConfigError(f"invalid 'train.balancer' section: {exc}") from None
    if "control" in fields and fields["control"] is not None:
        fields["control"] = tuple(fields["control"])
    try:
        train_cfg = TrainConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid 'train' section: {exc}") from None

    if data_spec is not None and model_spec.feature_dim != data_spec.feature_dim:
        raise ConfigError(
            f"model.feature_dim {model_spec.feature_dim} != data feature dim "
            f"{data_spec.feature_dim} (2 + noise_dims)"
        )

    out_dir = doc.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("'out_dir' must be a string")
    return RunConfig(
        data_spec=data_spec,
        data_seed=data_seed,
        dataset_path=dataset_path,
        model_spec=model_spec,
        train_cfg=train_cfg,
        out_dir=out_dir,
    )


def _load_or_generate(run: RunConfig, seed: int | None = None) -> data_synth.Dataset:
    if run.dataset_path is not None:
        return data_synth.load_dataset(run.dataset_path)
    return data_synth.generate(run.data_spec, run.data_seed if seed is None else seed)


def worker_count() -> int:
    raw = os.environ.get("GROUPBAL_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"GROUPBAL_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("GROUPBAL_THREADS must be >= 1")
    return n


def _resolve_out(args, run: RunConfig) -> Path:
    out = args.out or run.out_dir
    if not out:
        raise ConfigError("no output location: pass --out or set 'out_dir' in the config")
    return Path(out)


def _print_counts(dataset: data_synth.Dataset) -> None:
    for name, batch in (("train", dataset.train), ("val", dataset.val), ("test", dataset.test)):
        counts = np.bincount(batch.group_ids, minlength=batch.num_groups)
        print(f"{name} group counts: {' '.join(str(int(c)) for c in counts)}")


def cmd_gen_data(args) -> int:
    run = load_run_config(args.config)
    if run.data_spec is None:
        raise ConfigError("gen-data needs a 'data' section, not 'dataset_path'")
    seed = run.data_seed if args.seed is None else args.seed
    dataset = data_synth.generate(run.data_spec, seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data_synth.save_dataset(dataset, out)
    _print_counts(dataset)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    run = load_run_config(args.config)
    cfg = run.train_cfg
    if args.strategy is not None:
        cfg = replace(cfg, strategy=Strategy.parse(args.strategy))
    dataset = _load_or_generate(run)
    report = train.fit(run.model_spec, dataset, cfg)
    out = _resolve_out(args, run)
    out.mkdir(parents=True, exist_ok=True)
    train.write_report_json(report, out / "report.json")
    train.write_trajectory_csv(report, out / "trajectory.csv")
    print(
        f"test worst={report.test.worst:.4f} avg={report.test.weighted_average:.4f} "
        f"mean={report.test.mean:.4f}"
    )
    return EXIT_OK


def _parse_strategies(raw: str) -> list[Strategy]:
    names = [s.strip() for s in raw.split(",") if s.strip()]
    if not names:
        raise ConfigError("--strategies must list at least one strategy")
    return [Strategy.parse(n) for n in names]


def _parse_seeds(raw: str) -> list[int]:
    try:
        seeds = [int(s) for s in raw.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seeds must be comma-separated integers, got {raw!r}") from None
    if not seeds:
        raise ConfigError("--seeds must list at least one seed")
    return seeds


def _parse_c_vector(raw: str) -> tuple:
    try:
        values = tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"c vector must be comma-separated numbers, got {raw!r}") from None
    if not values:
        raise ConfigError("empty c vector")
    if any(not np.isfinite(v) or v <= 0 for v in values):
        raise ConfigError(f"c vector entries must be strictly positive, got {raw!r}")
    return values


def cmd_compare(args) -> int:
    run = load_run_config(args.config)
    strategies = _parse_strategies(args.strategies)
    seeds = _parse_seeds(args.seeds)
    out = _resolve_out(args, run)
    out.mkdir(parents=True, exist_ok=True)

    datasets = {seed: _load_or_generate(run, seed=seed) for seed in seeds}
    jobs = [(s, seed) for s in strategies for seed in seeds]

    def run_one(job):
        strategy, seed = job
        cfg = replace(run.train_cfg, strategy=strategy, seed=seed)
        return train.fit(run.model_spec, datasets[seed], cfg)

    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run_one, jobs))
    else:
        reports = [run_one(job) for job in jobs]

    rows = []
    for (strategy, seed), report in zip(jobs, reports):
        train.write_report_json(report, out / f"{strategy.value}_s{seed}.report.json")
        rows.append(
            {
                "strategy": strategy.value,
                "seed": seed,
                "worst": report.test.worst,
                "avg": report.test.weighted_average,
                "mean": report.test.mean,
                "final_loss_gap": loss_gap(report.final_train_losses),
                "best_epoch": report.best_epoch,
            }
        )

    with open(out / "summary.csv", "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["strategy", "seed", "worst", "avg", "mean", "final_loss_gap", "best_epoch"])
        for r in rows:
            writer.writerow(
                [
                    r["strategy"],
                    r["seed"],
                    repr(float(r["worst"])),
                    repr(float(r["avg"])),
                    repr(float(r["mean"])),
                    repr(float(r["final_loss_gap"])),
                    r["best_epoch"],
                ]
            )
        # aggregate block: mean +/- population std per strategy over seeds
        for strategy in strategies:
            sub = [r for r in rows if r["strategy"] == strategy.value]
            cells = [strategy.value, "aggregate"]
            for key in ("worst", "avg", "mean", "final_loss_gap", "best_epoch"):
                vals = np.array([float(r[key]) for r in sub])
                cells.append(f"{vals.mean():.6f}±{vals.std():.6f}")
            writer.writerow(cells)
    print(f"wrote {out / 'summary.csv'} ({len(rows)} runs)")
    return EXIT_OK


def cmd_sweep_c(args) -> int:
    run = load_run_config(args.config)
    c_list = [_parse_c_vector(raw) for raw in args.c_vectors]
    k = 4  # synthetic datasets carry the four (y, a) groups
    for c in c_list:
        if len(c) != k:
            raise ConfigError(f"c vector must have {k} entries, got {len(c)}")
    out = _resolve_out(args, run)
    out.mkdir(parents=True, exist_ok=True)
    dataset = _load_or_generate(run)

    reports = train.sweep_control(
        run.model_spec, dataset, run.train_cfg, c_list, max_workers=worker_count()
    )
    with open(out / "pivot.csv", "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["c"] + [f"acc_g{i}" for i in range(k)] + ["worst", "avg", "mean"]
        )
        for i, (c, report) in enumerate(zip(c_list, reports)):
            train.write_report_json(report, out / f"report_c{i}.json")
            writer.writerow(
                [";".join(repr(float(x)) for x in c)]
                + [repr(float(a)) for a in report.test.per_group_accuracy]
                + [
                    repr(float(report.test.worst)),
                    repr(float(report.test.weighted_average)),
                    repr(float(report.test.mean)),
                ]
            )
    print(f"wrote {out / 'pivot.csv'} ({len(reports)} runs)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groupbal",
        description="Group-balanced training strategies on synthetic spurious-correlation data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a dataset file from the config's data section")
    p.add_argument("config", help="run config JSON path")
    p.add_argument("--out", required=True, help="dataset JSON output path")
    p.add_argument("--seed", type=int, default=None, help="override the data seed")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one strategy and write report.json / trajectory.csv")
    p.add_argument("config")
    p.add_argument("--strategy", default=None, help="override the config strategy")
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="strategy x seed cross product with a summary table")
    p.add_argument("config")
    p.add_argument("--strategies", required=True, help="comma-separated strategy names")
    p.add_argument("--seeds", required=True, help="comma-separated integer seeds")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep-c", help="train the config strategy once per controlling vector")
    p.add_argument("config")
    p.add_argument("--c-vectors", nargs="+", required=True, help="e.g. 1,1,1,1 1,1,1,2")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep_c)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
