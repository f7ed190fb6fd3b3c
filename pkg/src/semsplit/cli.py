"""Command line entry point: ``semsplit <command> --config C --out DIR --seed N``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import yaml

from .expcli import (
    ALL_SCHEMES,
    ConfigError,
    config_to_dict,
    evaluate_checkpoints,
    load_config,
    run_experiment,
    sweep_ber_vs_ses,
)

log = logging.getLogger("semsplit")

COMMANDS = {
    "train": "train every grid cell and save checkpoints plus metrics.csv",
    "evaluate": "evaluate saved checkpoints (mean action) into summary.csv",
    "sweep-power": "train and evaluate the configured schemes over the power grid",
    "sweep-ber": "SES against injected image/text BER with a fixed budget",
    "compare-schemes": "train and evaluate all four schemes over the power grid",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semsplit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="YAML experiment config (default: bundled)")
        p.add_argument("--out", default=None, help="output directory (default: out_dir from config)")
        p.add_argument("--seed", type=int, default=None, help="run a single seed instead of the config's list")
    return parser


def _prepare(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    if args.command == "compare-schemes":
        cfg = dataclasses.replace(cfg, schemes=ALL_SCHEMES)
    out = args.out if args.out is not None else cfg.out_dir
    return cfg, out


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg, out = _prepare(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    Path(out).mkdir(parents=True, exist_ok=True)
    (Path(out) / "config.yaml").write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False), "utf-8")
    try:
        if args.command == "train":
            run_experiment(cfg, out, evaluate=False)
        elif args.command == "evaluate":
            rows = evaluate_checkpoints(cfg, out)
            _report(rows)
        elif args.command == "sweep-ber":
            sweep_ber_vs_ses(cfg, seed=cfg.seeds[0], out_dir=out)
        else:
            _report(run_experiment(cfg, out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    log.info("results written to %s", out)
    return 0


def _report(rows):
    for r in rows:
        log.info(
            "%-10s %5.1f dBm seed %d  SES %.3f  BER common %.4g private %.4g",
            r["scheme"], r["p_max_dbm"], r["seed"], r["ses_total_mean"], r["ber_common"], r["ber_private"],
        )


if __name__ == "__main__":
    sys.exit(main())
