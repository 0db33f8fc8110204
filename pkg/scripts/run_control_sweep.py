#!/usr/bin/env python3
"""Controlling-vector sweep on the default synthetic benchmark.

Trains the constrained balancer once per c vector and prints the pivot
table (c -> per-group test accuracy).  Raising c_k pushes group k's loss
down, trading a little majority-group accuracy for minority-group gains.
"""

import argparse
import json
import sys
from pathlib import Path

from groupbal.cli import main as cli_main
from run_compare import default_config


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/sweep_c")
    parser.add_argument("--epochs", type=int, default=300)
    parser.add_argument(
        "--c-vectors",
        nargs="+",
        default=["1,1,1,1", "1,1,1,2", "1,1,2,1", "1,1,2,2"],
    )
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config_path = out / "config.json"
    config_path.write_text(json.dumps(default_config(args.epochs), indent=2) + "\n")

    code = cli_main(
        ["sweep-c", str(config_path), "--c-vectors", *args.c_vectors, "--out", str(out)]
    )
    if code == 0:
        print((out / "pivot.csv").read_text())
    return code


if __name__ == "__main__":
    sys.exit(main())
