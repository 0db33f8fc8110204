"""Deterministic group-structured datasets with a controllable spurious feature.

Samples carry a binary label y and a binary spurious attribute a; the
group id is 2*y + a.  Feature layout per sample:

    [ (2y-1)*core_gap + e0,  (2a-1)*spurious_gap + e1,  e2 .. e_{1+noise_dims} ]

with every e ~ Normal(0, noise_sigma^2).  Default proportions follow the
usual skew of spurious-correlation benchmarks (73/4/1/22% over the four
(y, a) combinations) while evaluation splits are drawn group-balanced by
default so the rare group's accuracy is estimable.

Datasets serialize to a single self-describing JSON container; the noise
stream is numpy's PCG64 generator so a (spec, seed) pair reproduces the
file bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .models import Batch

__all__ = [
    "SyntheticSpec",
    "Dataset",
    "BayesReference",
    "group_counts",
    "generate",
    "bayes_reference",
    "save_dataset",
    "load_dataset",
]

PRNG_ID = (
    "numpy.random.Generator(PCG64(seed)); standard_normal noise scaled by noise_sigma; "
    "draw order: splits train,val,test, groups ascending, per group one (n_k, 2+noise_dims) block"
)

_BALANCE_MODES = ("as_train", "group_balanced")


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator settings; the defaults are the benchmark fixture."""

    n_train: int = 4000
    n_val: int = 800
    n_test: int = 2000
    proportions: tuple = (0.73, 0.04, 0.01, 0.22)
    core_gap: float = 1.0
    spurious_gap: float = 2.0
    noise_dims: int = 6
    noise_sigma: float = 1.0
    val_test_balance: str = "group_balanced"

    def __post_init__(self):
        p = tuple(float(x) for x in self.proportions)
        if len(p) != 4:
            raise ValueError("proportions must list the 4 (y, a) group fractions")
        if min(p) <= 0.0:
            raise ValueError("proportions must be positive")
        if abs(sum(p) - 1.0) > 1e-9:
            raise ValueError(f"proportions must sum to 1, got {sum(p)}")
        if not self.core_gap > 0.0:
            raise ValueError("core_gap must be > 0")
        if self.noise_dims < 0:
            raise ValueError("noise_dims must be >= 0")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be >= 0")
        if self.val_test_balance not in _BALANCE_MODES:
            raise ValueError(f"val_test_balance must be one of {_BALANCE_MODES}")
        for name in ("n_train", "n_val", "n_test"):
            if getattr(self, name) < 4:
                raise ValueError(f"{name} must be >= 4 so every group appears")
        object.__setattr__(self, "proportions", p)

    @property
    def feature_dim(self) -> int:
        return 2 + self.noise_dims


@dataclass(frozen=True)
class Dataset:
    train: Batch
    val: Batch
    test: Batch
    spec: SyntheticSpec
    seed: int


@dataclass(frozen=True)
class BayesReference:
    core_accuracy: float  # same for every group
    spurious_accuracy: tuple  # per group


def group_counts(n: int, proportions) -> np.ndarray:
    """Largest-remainder rounding of n * proportions with a minimum of 1."""
    p = np.asarray(proportions, dtype=np.float64)
    k = p.size
    if n < k:
        raise ValueError(f"cannot place {k} groups in {n} samples")
    exact = p * n
    counts = np.floor(exact).astype(np.int64)
    remainders = exact - counts
    leftover = n - int(counts.sum())
    for idx in np.argsort(-remainders, kind="stable")[:leftover]:
        counts[idx] += 1
    while np.any(counts == 0):
        counts[int(np.nonzero(counts == 0)[0][0])] += 1
        counts[int(np.argmax(counts))] -= 1
    return counts


def _draw_split(rng: np.random.Generator, spec: SyntheticSpec, counts: np.ndarray) -> Batch:
    n = int(counts.sum())
    f = spec.feature_dim
    feats = np.empty((n, f))
    labels = np.empty(n, dtype=np.int64)
    groups = np.empty(n, dtype=np.int64)
    row = 0
    for gid in range(4):
        y, a = gid // 2, gid % 2
        nk = int(counts[gid])
        eps = rng.standard_normal((nk, f)) * spec.noise_sigma
        feats[row : row + nk] = eps
        feats[row : row + nk, 0] += (2 * y - 1) * spec.core_gap
        feats[row : row + nk, 1] += (2 * a - 1) * spec.spurious_gap
        labels[row : row + nk] = y
        groups[row : row + nk] = gid
        row += nk
    return Batch(feats, labels, groups, num_groups=4)


def generate(spec: SyntheticSpec, seed: int) -> Dataset:
    """Draw train/val/test splits deterministically from (spec, seed)."""
    rng = np.random.default_rng(seed)
    train_counts = group_counts(spec.n_train, spec.proportions)
    if spec.val_test_balance == "group_balanced":
        eval_props = (0.25, 0.25, 0.25, 0.25)
    else:
        eval_props = spec.proportions
    val_counts = group_counts(spec.n_val, eval_props)
    test_counts = group_counts(spec.n_test, eval_props)
    return Dataset(
        train=_draw_split(rng, spec, train_counts),
        val=_draw_split(rng, spec, val_counts),
        test=_draw_split(rng, spec, test_counts),
        spec=spec,
        seed=int(seed),
    )


def _phi(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def bayes_reference(spec: SyntheticSpec) -> BayesReference:
    """Closed-form accuracies of the single-coordinate threshold classifiers.

    Thresholding the core coordinate is correct with probability
    Phi(core_gap / noise_sigma) in every group; thresholding the spurious
    coordinate is right only where the attribute agrees with the label.
    At noise_sigma = 0 the probabilities collapse to exact 0/1.
    """
    if spec.noise_sigma == 0.0:
        core = 1.0
        sp_hit = 1.0
    else:
        core = _phi(spec.core_gap / spec.noise_sigma)
        sp_hit = _phi(spec.spurious_gap / spec.noise_sigma)
    spurious = tuple(sp_hit if (gid // 2) == (gid % 2) else 1.0 - sp_hit for gid in range(4))
    return BayesReference(core_accuracy=core, spurious_accuracy=spurious)


def _split_to_json(batch: Batch) -> dict:
    return {
        "features": [float(v) for v in batch.inputs.ravel()],
        "labels": [int(v) for v in batch.labels],
        "groups": [int(v) for v in batch.group_ids],
        "n": int(batch.n),
        "f": int(batch.inputs.shape[1]),
    }


def _split_from_json(obj: dict, num_groups: int) -> Batch:
    n, f = int(obj["n"]), int(obj["f"])
    feats = np.asarray(obj["features"], dtype=np.float64).reshape(n, f)
    return Batch(feats, obj["labels"], obj["groups"], num_groups=num_groups)


def save_dataset(dataset: Dataset, path) -> None:
    doc = {
        "spec": asdict(dataset.spec),
        "seed": dataset.seed,
        "prng": PRNG_ID,
        "train": _split_to_json(dataset.train),
        "val": _split_to_json(dataset.val),
        "test": _split_to_json(dataset.test),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_dataset(path) -> Dataset:
    doc = json.loads(Path(path).read_text())
    spec_fields = dict(doc["spec"])
    spec_fields["proportions"] = tuple(spec_fields["proportions"])
    spec = SyntheticSpec(**spec_fields)
    return Dataset(
        train=_split_from_json(doc["train"], 4),
        val=_split_from_json(doc["val"], 4),
        test=_split_from_json(doc["test"], 4),
        spec=spec,
        seed=int(doc["seed"]),
    )
