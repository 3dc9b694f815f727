"""Command-line front end.

    volterra-sens simulate --config cfg.json --out results/
    volterra-sens greek    --config cfg.json --out results/
    volterra-sens compare  --config cfg.json --out results/
    volterra-sens study    --config cfg.json --out results/

Flags: --threads <k> (0 = auto; falls back to the VOLTERRA_SENS_THREADS
environment variable) and --seed <u64> (overrides the config seed).  Exit
codes: 0 success, 2 configuration problem, 3 runtime failure.  stdout carries
a short human summary; all data goes to files under --out.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ExperimentConfig, validate_config
from .engine import dump_batch
from .studies import (
    run_compare,
    run_greek,
    run_simulate_summary,
    run_study,
    write_csv,
    write_meta,
    write_pairs_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volterra-sens",
        description="Volterra-model Monte Carlo and curve-sensitivity studies",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("simulate", "simulate a path batch and write its dump + summary"),
        ("greek", "run the configured estimator"),
        ("compare", "run several estimators on shared seeds"),
        ("study", "run a parameter study (kind taken from the config)"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=0,
                       help="worker threads (0 = auto / env fallback)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config master seed")
    return parser


def _load_config(path: str):
    try:
        return ExperimentConfig.load(path), None
    except FileNotFoundError:
        return None, f"config file not found: {path}"
    except (json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
        return None, f"config file invalid: {exc}"


def _apply_threads(threads: int) -> None:
    if threads <= 0:
        env = os.environ.get("VOLTERRA_SENS_THREADS", "")
        threads = int(env) if env.isdigit() else 0
    if threads > 0:
        import numba

        # results are bit-identical for any thread count (disjoint writes,
        # fixed-order reductions); clamp to what the machine offers
        numba.set_num_threads(min(max(1, threads), numba.config.NUMBA_NUM_THREADS))


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    cfg, err = _load_config(args.config)
    if err:
        print(err, file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = int(args.seed)
    violations = validate_config(cfg)
    if args.command == "compare" and (not cfg.compare or len(cfg.compare) < 2):
        violations.append("compare: needs at least two estimator entries")
    if args.command == "study" and (not cfg.study or "kind" not in cfg.study):
        violations.append("study: config needs a study kind")
    if args.command == "greek" and not cfg.estimator:
        violations.append("greek: config needs an estimator")
    if violations:
        for v in violations:
            print(f"config violation: {v}", file=sys.stderr)
        return EXIT_CONFIG
    _apply_threads(args.threads)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return _cmd_simulate(cfg, out)
        if args.command == "greek":
            return _cmd_greek(cfg, out)
        if args.command == "compare":
            return _cmd_compare(cfg, out)
        return _cmd_study(cfg, out)
    except Exception as exc:  # runtime failure contract
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    batch, summary = run_simulate_summary(cfg)
    dump_batch(batch, str(out / "paths.bin"))
    with open(out / "summary.json", "w", encoding="utf-8") as fp:
        json.dump(summary, fp, indent=2, sort_keys=True)
        fp.write("\n")
    print(
        f"simulated {summary['n_paths']} paths, n={summary['n_steps']}: "
        f"mean X_T = {summary['mean_X_T']:.6g}, var X_T = {summary['var_X_T']:.6g}"
    )
    return EXIT_OK


def _cmd_greek(cfg: ExperimentConfig, out: Path) -> int:
    result = run_greek(cfg)
    write_csv(result, out / "result.csv")
    write_meta(result, out / "meta.json")
    head = result.rows[0]
    print(f"{head['estimator']}: {head['value']:.6g} +/- {head['std_error']:.3g}")
    return EXIT_OK


def _cmd_compare(cfg: ExperimentConfig, out: Path) -> int:
    result = run_compare(cfg)
    write_csv(result, out / "result.csv")
    write_pairs_csv(result, out / "pairs.csv")
    write_meta(result, out / "meta.json")
    flagged = [r for r in result.pair_rows if r["flag"]]
    for row in result.rows:
        print(f"{row['estimator']:>14}: {row['value']:.6g} +/- {row['std_error']:.3g}")
    if flagged:
        for r in flagged:
            print(f"disagreement: {r['pair']} at {r['ratio']:.2f} combined SEs")
    else:
        print("all pairwise agreements within 3 combined SEs")
    return EXIT_OK


def _cmd_study(cfg: ExperimentConfig, out: Path) -> int:
    result = run_study(cfg)
    write_csv(result, out / "result.csv")
    write_meta(result, out / "meta.json")
    print(f"study {cfg.study['kind']}: {len(result.rows)} rows written")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
