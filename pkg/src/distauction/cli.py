"""Command line entry point: ``solve``, ``experiment`` and ``bounds``.

Exit codes: 0 success, 2 a hard check failed, 3 bad input or config.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .auction import AuctionConfig, AuctionError, centralized_auction, distributed_auction, truncated_auction
from .bounds import bound_report, high_snr_gap_constant, low_snr_gap, randomized_greedy
from .channels import snr_db_to_lambda
from .core import AssignmentError, read_reward_csv
from .csma import BackoffFunction, run_csma_auction
from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, run_experiment

EXIT_OK = 0
EXIT_CHECK_FAILED = 2
EXIT_CONFIG = 3

log = logging.getLogger("distauction")


def _solve(args) -> int:
    R = read_reward_csv(args.input)
    cfg = AuctionConfig(eps=args.eps)
    if args.mode == "greedy":
        a = randomized_greedy(R, args.seed)
        out = {"assignment": a.mapping.tolist(), "value": a.value, "iterations": 1,
               "per_user_unassigned_counts": [1] * R.shape[0], "eps": None, "mode": "greedy",
               "seed": args.seed}
    else:
        if args.mode == "central":
            res = centralized_auction(R, cfg)
        elif args.mode == "distributed":
            res = distributed_auction(R, cfg)
        elif args.mode == "truncated":
            res = truncated_auction(R, args.alpha, cfg)
        else:
            res = run_csma_auction(R, cfg, BackoffFunction(args.backoff_form, args.tmax_ms))
            if args.slot_trace:
                res.slot_trace_csv(args.slot_trace)
        if args.trace:
            res.trace.to_csv(args.trace)
        out = res.to_dict()
    text = json.dumps(out, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _experiment(args) -> int:
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        cfg = ExperimentConfig.from_dict(raw, experiment=args.id)
    else:
        cfg = ExperimentConfig.for_experiment(args.id)
    if args.trials is not None:
        cfg.trials = args.trials
    if args.seed is not None:
        cfg.master_seed = args.seed
    cfg.jobs = args.jobs
    result = run_experiment(cfg)
    if args.out:
        result.write(args.out, force=args.force)
    for c in result.checks:
        kind = "hard" if c.hard else "reported"
        print(f"[{'PASS' if c.passed else 'FAIL'}] ({kind}) {c.name}  {c.detail}")
    return EXIT_OK if result.ok else EXIT_CHECK_FAILED


def _bounds(args) -> int:
    if (args.snr_db is None) == (args.lam is None):
        raise ConfigError("give exactly one of --snr-db or --lambda")
    lam = args.lam if args.lam is not None else snr_db_to_lambda(args.snr_db)
    k = args.k if args.k is not None else args.n
    rep = bound_report(args.n, k, lam)
    d = rep.to_dict()
    if args.n == k:
        gap = low_snr_gap(args.n, lam)
        d["low_snr_limit"] = gap.asymptotic_limit
        d["low_snr_finite_bound"] = gap.finite_bound
        if args.n >= 2:
            hs = high_snr_gap_constant(args.n)
            d["high_snr_constant"] = hs.exact_c
            d["high_snr_closed_form"] = hs.closed_form_upper
    text = json.dumps(d, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.csv:
        import csv
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(rep.CSV_FIELDS)
            w.writerow(rep.csv_row())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="distauction", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="assign channels for a reward matrix CSV")
    s.add_argument("--input", required=True, help="N x K CSV, no header")
    s.add_argument("--mode", choices=["central", "distributed", "csma", "truncated", "greedy"],
                   default="distributed")
    s.add_argument("--eps", type=float, default=None, help="default: 0.01 * max(R) / N")
    s.add_argument("--alpha", type=float, default=2.0)
    s.add_argument("--seed", type=int, default=0, help="user order for greedy")
    s.add_argument("--backoff-form", choices=["inverse", "exponential"], default="inverse")
    s.add_argument("--tmax-ms", type=float, default=10.0)
    s.add_argument("--trace", help="write per-bid trace CSV here")
    s.add_argument("--slot-trace", help="csma mode: write per-slot CSV here")
    s.add_argument("--out", help="result JSON (default: stdout)")
    s.set_defaults(func=_solve)

    e = sub.add_parser("experiment", help="run a seeded Monte Carlo experiment")
    e.add_argument("id", choices=sorted(EXPERIMENTS))
    e.add_argument("--config", help="JSON config; missing keys take the experiment defaults")
    e.add_argument("--out", help="output directory")
    e.add_argument("--trials", type=int)
    e.add_argument("--seed", type=int, help="master seed")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--force", action="store_true", help="overwrite results from a different config")
    e.set_defaults(func=_experiment)

    b = sub.add_parser("bounds", help="greedy expectation L and optimal upper bound U")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--k", type=int)
    b.add_argument("--snr-db", type=float)
    b.add_argument("--lambda", dest="lam", type=float)
    b.add_argument("--out", help="report JSON (default: stdout)")
    b.add_argument("--csv", help="also write a one-row CSV")
    b.set_defaults(func=_bounds)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, AssignmentError, ValueError, OSError, json.JSONDecodeError) as exc:
        log.error("error: %s", exc)
        return EXIT_CONFIG
    except AuctionError as exc:
        log.error("error: %s", exc)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
