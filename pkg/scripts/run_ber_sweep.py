"""SES per user against injected image or text BER with a fixed budget.

Usage: python3 scripts/run_ber_sweep.py [--config C] [--out DIR]
"""

import argparse

from semsplit.expcli import load_config, sweep_ber_vs_ses


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None)
    parser.add_argument("--out", default="runs/ber_sweep")
    args = parser.parse_args()
    for r in sweep_ber_vs_ses(load_config(args.config), out_dir=args.out):
        print(f"{r['stream']:<5} user {r['user']} ber {r['ber']:.1e}  "
              f"SES {r['ses_analytic']:.4f} (MC {r['ses_mc_mean']:.4f} +- {r['ses_mc_std']:.4f})")


if __name__ == "__main__":
    main()
