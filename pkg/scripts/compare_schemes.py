"""Train all four schemes over the power grid and print the seed-averaged SES table.

Usage: python3 scripts/compare_schemes.py [--config C] [--out DIR]
"""

import argparse
import dataclasses
from collections import defaultdict

import numpy as np

from semsplit.expcli import ALL_SCHEMES, load_config, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None)
    parser.add_argument("--out", default="runs/compare_schemes")
    args = parser.parse_args()
    cfg = dataclasses.replace(load_config(args.config), schemes=ALL_SCHEMES)
    table = defaultdict(list)
    for row in run_experiment(cfg, args.out):
        table[(row["scheme"], row["p_max_dbm"])].append(row["ses_total_mean"])
    print("scheme      " + " ".join(f"{p:>7g}" for p in cfg.power_grid_dbm))
    for scheme in ALL_SCHEMES:
        print(f"{scheme:<11} " + " ".join(f"{np.mean(table[(scheme, p)]):7.3f}" for p in cfg.power_grid_dbm))


if __name__ == "__main__":
    main()
