"""Command-line front end for the replicated benchmarks.

Three subcommands: ``oracle`` runs the crude Monte Carlo reference on a
configured benchmark, ``run`` replays an experiment config trial by trial
into a CSV, and ``stats`` condenses such a CSV into per-estimator summary
tables plus report figures. Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from .experiment import (
    ConfigError,
    load_config,
    mc_oracle,
    read_rows,
    run_experiment,
    trial_statistics,
)
from .rng import RngStream

_ORACLE_STREAM_ID = 2**63  # keep the reference run off the trial streams


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvis-bench",
        description="Replicated rare-event benchmark runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_oracle = sub.add_parser(
        "oracle", help="crude Monte Carlo reference for a configured benchmark"
    )
    p_oracle.add_argument("--config", required=True, help="experiment config file")
    p_oracle.add_argument("--samples", type=int, default=1_000_000)
    p_oracle.add_argument("--seed", type=int, default=None,
                          help="override the config base_seed")
    p_oracle.add_argument("--out", default=None, help="write the result as JSON")

    p_run = sub.add_parser("run", help="run the configured trials into a CSV")
    p_run.add_argument("--config", required=True, help="experiment config file")
    p_run.add_argument("--out", required=True, help="trial CSV path (appended on rerun)")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config base_seed")
    p_run.add_argument("--trials", type=int, default=None,
                       help="override the config n_trials")
    p_run.add_argument("--threads", type=int, default=1,
                       help="worker threads; wall time only, never results")

    p_stats = sub.add_parser("stats", help="summarize a trial CSV per estimator")
    p_stats.add_argument("csv", help="trial CSV produced by run")
    p_stats.add_argument("--truth", type=float, required=True,
                         help="reference failure probability (oracle or known)")
    p_stats.add_argument("--out", default=None,
                         help="summary CSV path (default <input>_summary.csv)")
    p_stats.add_argument("--no-figures", action="store_true",
                         help="skip the PNG report figures")
    return parser


def _cmd_oracle(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    seed = cfg.base_seed if args.seed is None else args.seed
    pair, dist = cfg.make_models()
    res = mc_oracle(pair, dist, args.samples, RngStream(seed, stream_id=_ORACLE_STREAM_ID))
    payload = {
        "benchmark": cfg.benchmark,
        "n": args.samples,
        "seed": seed,
        "pf": res.pf,
        "pfl": res.pfl,
        "p_hl": res.p_hl,
        "rho_hl": res.rho_hl,
        "kappa": res.kappa,
    }
    text = json.dumps(payload, indent=2)
    if args.out is not None:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    if args.trials is not None:
        cfg = replace(cfg, n_trials=args.trials)
    n = 0
    for _ in run_experiment(cfg, args.out, threads=args.threads, echo=print):
        n += 1
    print(f"wrote {cfg.n_trials} trials ({n} new rows) to {args.out}")
    return 0


_SUMMARY_FIELDS = (
    "estimator", "n_rows", "mean_pf", "sample_cov",
    "rmse_vs_truth", "mean_cov_hat", "cov_of_cov_hat",
)


def _cmd_stats(args: argparse.Namespace) -> int:
    from .figures import group_rows, render_report_figures

    rows = read_rows(args.csv)
    if not rows:
        raise ConfigError(f"{args.csv} holds no trial rows")
    grouped = group_rows(rows)
    stats = {name: trial_statistics(g, args.truth) for name, g in grouped.items()}

    out = Path(args.out) if args.out else Path(args.csv).with_name(
        Path(args.csv).stem + "_summary.csv"
    )
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SUMMARY_FIELDS)
        for name, s in stats.items():
            writer.writerow([name, len(grouped[name]), *s])

    header = f"{'estimator':12s} {'n':>4s} {'mean_pf':>10s} {'cov':>7s} {'nrmse':>7s} {'cov_hat':>8s}"
    print(header)
    for name, s in stats.items():
        print(
            f"{name:12s} {len(grouped[name]):4d} {s.mean_pf:10.3e} "
            f"{s.sample_cov:7.3f} {s.rmse_vs_truth:7.3f} {s.mean_cov_hat:8.3f}"
        )
    print(f"summary written to {out}")
    if not args.no_figures:
        for fig in render_report_figures(rows, stats, args.truth, out.parent):
            print(f"figure written to {fig}")
    return 0


_COMMANDS = {"oracle": _cmd_oracle, "run": _cmd_run, "stats": _cmd_stats}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
