#!/usr/bin/env python3
"""Print the per-seed numbers behind the acceptance fixture.

Runs the same 25 training runs the acceptance suite uses (4 strategies
plus the c=(1,1,1,2) variant, 5 seeds) and tabulates worst/mean test
accuracy, final train loss gap, and the group-3 comparison.  Used to
calibrate and freeze the acceptance thresholds; rerun it after touching
the balancer, models, or generator.
"""

import sys
import time

import numpy as np

from groupbal.data_synth import SyntheticSpec, generate
from groupbal.metrics import loss_gap
from groupbal.models import ModelSpec
from groupbal.train import TrainConfig, fit

STRATEGIES = ("erm", "groupdro", "mgda", "cpt")
SEEDS = (0, 1, 2, 3, 4)


def main() -> int:
    spec = SyntheticSpec()
    model = ModelSpec(kind="linear_softmax", feature_dim=8, classes=2)
    t0 = time.time()
    runs = {}
    for seed in SEEDS:
        data = generate(spec, seed)
        for strategy in STRATEGIES:
            cfg = TrainConfig(strategy=strategy, learning_rate=0.5, epochs=300, seed=seed)
            runs[(strategy, seed)] = fit(model, data, cfg)
        cfg = TrainConfig(
            strategy="cpt", learning_rate=0.5, epochs=300, seed=seed, control=(1, 1, 1, 2)
        )
        runs[("cpt_c3up", seed)] = fit(model, data, cfg)

    print(f"{'seed':>4} {'strategy':>9} {'worst':>7} {'mean':>7} {'loss_gap':>9} {'best_ep':>7}")
    for seed in SEEDS:
        for strategy in STRATEGIES + ("cpt_c3up",):
            r = runs[(strategy, seed)]
            print(
                f"{seed:>4} {strategy:>9} {r.test.worst:7.4f} {r.test.mean:7.4f} "
                f"{loss_gap(r.final_train_losses):9.5f} {r.best_epoch:>7}"
            )
    print()
    for strategy in STRATEGIES + ("cpt_c3up",):
        worst = np.mean([runs[(strategy, s)].test.worst for s in SEEDS])
        mean = np.mean([runs[(strategy, s)].test.mean for s in SEEDS])
        gap = np.mean([loss_gap(runs[(strategy, s)].final_train_losses) for s in SEEDS])
        print(f"aggregate {strategy:>9}: worst {worst:.4f} mean {mean:.4f} loss_gap {gap:.5f}")
    print()
    for seed in SEEDS:
        base, up = runs[("cpt", seed)], runs[("cpt_c3up", seed)]
        print(
            f"seed {seed}: group-3 acc {base.test.per_group_accuracy[3]:.4f} -> "
            f"{up.test.per_group_accuracy[3]:.4f}, "
            f"group-3 loss {base.final_train_losses[3]:.4f} -> {up.final_train_losses[3]:.4f}"
        )
    print(f"\ntotal runtime: {time.time() - t0:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
