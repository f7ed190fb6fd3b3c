"""Training reward curves for several actor learning rates at one power level.

Writes one metrics.csv row per logged episode.

Usage: python3 scripts/run_lr_convergence.py [--config C] [--out DIR] [--dbm 40] [--lr 1e-4 1e-3 3e-3]
"""

import argparse
import dataclasses

from semsplit.expcli import load_config, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None)
    parser.add_argument("--out", default="runs/lr_convergence")
    parser.add_argument("--dbm", type=float, default=40.0)
    parser.add_argument("--lr", type=float, nargs="+", default=[1e-4, 1e-3, 3e-3])
    args = parser.parse_args()
    cfg = dataclasses.replace(
        load_config(args.config), power_grid_dbm=(args.dbm,), learning_rate_grid=tuple(args.lr),
    )
    run_experiment(cfg, args.out, evaluate=False)
    print(f"reward curves in {args.out}/metrics.csv")


if __name__ == "__main__":
    main()
