#!/usr/bin/env python3
"""Strategy comparison on the default synthetic benchmark.

Writes a run config, then drives the CLI end to end: erm / average /
groupdro / mgda / cpt across seeds, with summary.csv and per-run reports
in the output directory.
"""

import argparse
import json
import sys
from pathlib import Path

from groupbal.cli import main as cli_main


def default_config(epochs: int) -> dict:
    return {
        "data": {
            "n_train": 4000,
            "n_val": 800,
            "n_test": 2000,
            "proportions": [0.73, 0.04, 0.01, 0.22],
            "core_gap": 1.0,
            "spurious_gap": 2.0,
            "noise_dims": 6,
            "noise_sigma": 1.0,
            "val_test_balance": "group_balanced",
            "seed": 0,
        },
        "model": {"kind": "linear_softmax", "feature_dim": 8, "classes": 2},
        "train": {"strategy": "cpt", "learning_rate": 0.5, "epochs": epochs, "seed": 0},
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/compare", help="output directory")
    parser.add_argument("--epochs", type=int, default=300)
    parser.add_argument("--seeds", default="0,1,2,3,4")
    parser.add_argument("--strategies", default="erm,average,groupdro,mgda,cpt")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config_path = out / "config.json"
    config_path.write_text(json.dumps(default_config(args.epochs), indent=2) + "\n")

    code = cli_main(
        [
            "compare",
            str(config_path),
            "--strategies",
            args.strategies,
            "--seeds",
            args.seeds,
            "--out",
            str(out),
        ]
    )
    if code == 0:
        print((out / "summary.csv").read_text())
    return code


if __name__ == "__main__":
    sys.exit(main())
