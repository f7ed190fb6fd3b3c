"""Train and evaluate the configured schemes over the power grid.

Usage: python3 scripts/run_power_sweep.py [--config C] [--out DIR]
"""

import argparse
import logging

from semsplit.expcli import load_config, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None)
    parser.add_argument("--out", default="runs/power_sweep")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    for row in run_experiment(load_config(args.config), args.out):
        logging.info("%s %g dBm seed %d: SES %.3f", row["scheme"], row["p_max_dbm"], row["seed"], row["ses_total_mean"])


if __name__ == "__main__":
    main()
