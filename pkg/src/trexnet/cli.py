"""Batch command line for selection runs, simulations, benchmarks, and
path dumps.

Every command is deterministic given --seed: worker processes only change
how the independent pieces are scheduled, never their random streams, and
timing fields stay out of the artifacts unless --emit-timings asks for
them.  Exit codes: 0 success (an empty selection is a success), 2 malformed
input, 3 invalid configuration, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import io
from .augment import PenaltyConfig, en_augment, ien_augment, ridge_cv_lambda2
from .core import Dataset, standardize
from .errors import ConfigError, InputError, NumericalError
from .grouping import correlation_matrix, groups_from_correlation
from .lars import StopRule, lars_path, write_path_csv
from .simulate import DesignSpec, bench_relative_time, monte_carlo, summary_payload
from .trex import TrexConfig, report_payload, trex_select

log = logging.getLogger("trexnet")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trexnet",
        description="FDR-calibrated variable selection by early-terminated "
                    "random experiments, with grouped elastic-net base solvers.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="master seed; all randomness derives from it")
    common.add_argument("--threads", type=positive_int,
                        default=os.cpu_count() or 1,
                        help="worker processes (results do not depend on this)")
    common.add_argument("--log-level", choices=sorted(LOG_LEVELS), default="error")
    common.add_argument("--emit-timings", action="store_true",
                        help="include wall-clock fields in the outputs")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--k", type=positive_int, default=20,
                       help="number of random experiments")
    model.add_argument("--l", type=positive_int, default=None,
                       help="number of dummies (default: one per real variable)")
    model.add_argument("--t-max", type=positive_int, default=None,
                       help="largest dummy budget scanned (default: ceil(L/20))")
    model.add_argument("--lambda2", type=float, default=None,
                       help="ridge weight for en/ien (default: ridge CV)")
    model.add_argument("--rho-cut", type=float, default=None,
                       help="correlation level whose single-linkage cut defines groups")
    model.add_argument("--groups-file", default=None,
                       help="JSON file with an explicit column partition")
    model.add_argument("--dummy-policy", choices=("none", "singleton-groups"),
                       default="none",
                       help="how ien treats appended dummies")
    model.add_argument("--dummy-dist", choices=("normal", "uniform"),
                       default="normal")
    model.add_argument("--fdp-estimator", choices=("expected-count", "binomial"),
                       default="expected-count",
                       help="null-count estimate used for calibration")

    p_select = sub.add_parser(
        "select", parents=[common, model],
        help="run the selector on X/y CSV files",
    )
    p_select.add_argument("--x", required=True, help="design matrix CSV")
    p_select.add_argument("--y", required=True, help="response CSV (one column)")
    p_select.add_argument("--alpha", type=float, required=True,
                          help="target false-discovery level")
    p_select.add_argument("--base", choices=("lasso", "en", "ien"), default="lasso")
    p_select.add_argument("--out", required=True,
                          help="output directory for selection.json and occurrences.csv")
    p_select.set_defaults(func=cmd_select)

    p_sim = sub.add_parser(
        "simulate", parents=[common, model],
        help="Monte-Carlo study on synthetic designs",
    )
    p_sim.add_argument("--design", choices=("gaussian", "snp"), default="gaussian")
    p_sim.add_argument("--p", type=positive_int, required=True)
    p_sim.add_argument("--n", type=positive_int, required=True)
    p_sim.add_argument("--blocks", default="",
                       help="correlated blocks, e.g. '100x10' or '3,3,5@0.9' "
                            "(COUNTxSIZE@RHO; @RHO falls back to --rho)")
    p_sim.add_argument("--rho", type=float, default=0.7,
                       help="within-block correlation for --blocks")
    p_sim.add_argument("--actives", default="",
                       help="'COL:VALUE,...' explicit, or a count placed "
                            "evenly with alternating signs")
    p_sim.add_argument("--snr", type=float, default=1.0)
    p_sim.add_argument("--maf-range", default="0.05,0.5",
                       help="snp design: 'LO,HI' minor-allele range")
    p_sim.add_argument("--case-fraction", type=float, default=5.0 / 7.0,
                       help="snp design: fraction of case samples")
    p_sim.add_argument("--runs", type=positive_int, default=100)
    p_sim.add_argument("--alpha", type=float, required=True)
    p_sim.add_argument("--base", choices=("lasso", "en", "ien"),
                       action="append", default=None,
                       help="base selector; repeat for a paired comparison")
    p_sim.add_argument("--out", required=True,
                       help="output directory for trials.csv and summary.json")
    p_sim.set_defaults(func=cmd_simulate)

    p_bench = sub.add_parser(
        "bench", parents=[common],
        help="relative timing of one terminated experiment per selector",
    )
    p_bench.add_argument("--p-grid", required=True,
                         help="comma-separated problem sizes, e.g. '100,500,1000'")
    p_bench.add_argument("--n", type=positive_int, default=50)
    p_bench.add_argument("--rho-cut", type=float, default=0.5)
    p_bench.add_argument("--reps", type=positive_int, default=50)
    p_bench.add_argument("--lambda2", type=float, default=1.0)
    p_bench.add_argument("--selectors", default="lasso,en,ien")
    p_bench.add_argument("--out", required=True,
                         help="output directory for bench.csv")
    p_bench.set_defaults(func=cmd_bench)

    p_path = sub.add_parser(
        "path", parents=[common],
        help="dump the base selector's full solution path as CSV",
    )
    p_path.add_argument("--x", required=True)
    p_path.add_argument("--y", required=True)
    p_path.add_argument("--base", choices=("lasso", "en", "ien"), default="lasso")
    p_path.add_argument("--lambda2", type=float, default=None)
    p_path.add_argument("--rho-cut", type=float, default=None)
    p_path.add_argument("--groups-file", default=None)
    p_path.add_argument("--steps", type=positive_int, default=None,
                        help="stop after this many path events")
    p_path.add_argument("--out", required=True, help="output CSV file")
    p_path.set_defaults(func=cmd_path)

    return parser


def load_dataset(x_path, y_path) -> Dataset:
    try:
        X, names = io.read_matrix_csv(x_path)
    except InputError as exc:
        raise InputError(f"--x: {exc}") from exc
    try:
        y = io.read_vector_csv(y_path)
    except InputError as exc:
        raise InputError(f"--y: {exc}") from exc
    if y.shape[0] != X.shape[0]:
        raise InputError(
            f"--y has {y.shape[0]} rows but --x has {X.shape[0]} samples"
        )
    return Dataset(X=X, y=y, names=names)


def resolve_grouping_flags(args) -> None:
    if args.rho_cut is not None and args.groups_file is not None:
        raise ConfigError("pass either --rho-cut or --groups-file, not both")
    bases = args.base if isinstance(args.base, list) else [args.base]
    if "ien" in [b for b in bases if b] and args.rho_cut is None \
            and args.groups_file is None:
        raise ConfigError("--base ien requires --rho-cut or --groups-file")


def config_from_args(args, base: str) -> TrexConfig:
    partition = None
    if args.groups_file is not None:
        partition = io.read_groups_json(args.groups_file)
    return TrexConfig(
        alpha=args.alpha,
        seed=args.seed,
        n_experiments=args.k,
        n_dummies=args.l,
        t_max=args.t_max,
        base=base,
        dummy_dist=args.dummy_dist,
        lambda2=args.lambda2,
        rho_cut=args.rho_cut,
        partition=partition,
        dummy_policy=args.dummy_policy,
        fdp_estimator=args.fdp_estimator,
    )


def out_dir(args) -> Path:
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_select(args) -> int:
    resolve_grouping_flags(args)
    data = load_dataset(args.x, args.y)
    cfg = config_from_args(args, args.base)
    report = trex_select(data, cfg, workers=args.threads)
    out = out_dir(args)
    io.write_selection_json(out / "selection.json",
                            report_payload(report, include_timings=args.emit_timings))
    io.write_occurrences_csv(out / "occurrences.csv",
                             report.occurrences.values[report.t_star - 1],
                             data.names)
    log.info("selected %d of %d variables at v*=%.4g, T*=%d, FDP estimate %.4g",
             len(report.selected), data.p, report.v_star, report.t_star,
             report.fdp_estimate)
    return 0


def parse_blocks(text: str, default_rho: float):
    """COUNTxSIZE@RHO segments; COUNT and @RHO optional."""
    blocks = []
    for segment in filter(None, (s.strip() for s in text.split(","))):
        body, _, rho_part = segment.partition("@")
        try:
            rho = float(rho_part) if rho_part else default_rho
            count_part, _, size_part = body.rpartition("x")
            count = int(count_part) if count_part else 1
            size = int(size_part)
        except ValueError as exc:
            raise ConfigError(f"--blocks: cannot parse segment {segment!r}") from exc
        if count < 1 or size < 1:
            raise ConfigError(f"--blocks: segment {segment!r} must be positive")
        blocks.extend([(size, rho)] * count)
    return tuple(blocks)


def parse_actives(text: str, p: int):
    """Either 'COL:VALUE,...' or a bare count auto-placed with signs +1/-1."""
    text = text.strip()
    if not text:
        return ()
    if ":" not in text:
        try:
            count = int(text)
        except ValueError as exc:
            raise ConfigError(f"--actives: expected a count or COL:VALUE list, "
                              f"got {text!r}") from exc
        if not 1 <= count <= p:
            raise ConfigError(f"--actives: count {count} outside 1..{p}")
        stride = p // count
        return tuple((i * stride, 1.0 if i % 2 == 0 else -1.0)
                     for i in range(count))
    actives = []
    for segment in filter(None, (s.strip() for s in text.split(","))):
        col_part, _, value_part = segment.partition(":")
        try:
            actives.append((int(col_part), float(value_part)))
        except ValueError as exc:
            raise ConfigError(f"--actives: cannot parse segment {segment!r}") from exc
    return tuple(actives)


def design_echo(spec: DesignSpec) -> dict:
    echo = {
        "family": spec.family,
        "n": spec.n,
        "p": spec.p,
        "blocks": [[size, rho] for size, rho in spec.blocks],
        "actives": [[j, value] for j, value in spec.actives],
        "snr": spec.snr,
    }
    if spec.family == "snp":
        echo["maf_range"] = list(spec.maf_range)
        echo["case_fraction"] = spec.case_fraction
    return echo


def cmd_simulate(args) -> int:
    bases = args.base if args.base else ["lasso"]
    args.base = bases
    resolve_grouping_flags(args)
    try:
        maf_lo, maf_hi = (float(v) for v in args.maf_range.split(","))
    except ValueError as exc:
        raise ConfigError(f"--maf-range: expected 'LO,HI', got {args.maf_range!r}"
                          ) from exc
    spec = DesignSpec(
        n=args.n,
        p=args.p,
        family=args.design,
        blocks=parse_blocks(args.blocks, args.rho),
        actives=parse_actives(args.actives, args.p),
        snr=args.snr,
        maf_range=(maf_lo, maf_hi),
        case_fraction=args.case_fraction,
    )
    rows = []
    per_base = {}
    for base in bases:
        cfg = config_from_args(args, base)
        summary = monte_carlo(spec, cfg, runs=args.runs, workers=args.threads)
        per_base[base] = summary_payload(summary,
                                         include_timings=args.emit_timings)
        rows.extend(io.trial_rows(base, summary,
                                  include_timings=args.emit_timings))
        log.info("base %s: mean FDP %.4g, mean TPP %.4g over %d runs",
                 base, summary.mean_fdp, summary.mean_tpp, summary.runs)
    out = out_dir(args)
    io.write_trials_csv(out / "trials.csv", rows,
                        include_timings=args.emit_timings)
    io.write_summary_json(out / "summary.json", {
        "schema": io.SUMMARY_SCHEMA,
        "alpha": args.alpha,
        "runs": args.runs,
        "bases": bases,
        "design": design_echo(spec),
        "per_base": per_base,
    })
    return 0


def cmd_bench(args) -> int:
    try:
        p_grid = tuple(int(v) for v in args.p_grid.split(","))
    except ValueError as exc:
        raise ConfigError(f"--p-grid: expected comma-separated integers, "
                          f"got {args.p_grid!r}") from exc
    selectors = tuple(filter(None, (s.strip() for s in args.selectors.split(","))))
    for selector in selectors:
        if selector not in ("lasso", "en", "ien"):
            raise ConfigError(f"--selectors: unknown selector {selector!r}")
    rows = bench_relative_time(
        p_grid, seed=args.seed, n=args.n, rho_cut=args.rho_cut,
        reps=args.reps, lambda2=args.lambda2, selectors=selectors,
    )
    out = out_dir(args)
    io.write_bench_csv(out / "bench.csv", rows)
    for row in rows:
        log.info("p=%d %s: %.4g s (%.3g x lasso)", row["p"], row["selector"],
                 row["mean_seconds"], row["ratio_vs_lasso"])
    return 0


def cmd_path(args) -> int:
    resolve_grouping_flags(args)
    data = load_dataset(args.x, args.y)
    std = standardize(data)
    stop = StopRule(max_steps=args.steps)
    if args.base == "lasso":
        path = lars_path(std.X, std.y, mode="lasso", stop=stop)
    else:
        lambda2 = args.lambda2
        if lambda2 is None:
            lambda2 = ridge_cv_lambda2(std.X, std.y)
            log.info("ridge CV picked lambda2=%.4g", lambda2)
        if args.base == "en":
            aug = en_augment(std.X, std.y, lambda2)
        else:
            if args.groups_file is not None:
                partition = io.read_groups_json(args.groups_file)
            else:
                partition = groups_from_correlation(
                    correlation_matrix(std.X), args.rho_cut)
            aug = ien_augment(std.X, std.y,
                              PenaltyConfig(lambda2=lambda2, partition=partition))
        path = lars_path(aug.X, aug.y, mode="lasso", stop=stop,
                         require_standardized=False)
    with open(args.out, "w", newline="") as fh:
        write_path_csv(path, fh)
    log.info("wrote %d path events to %s", len(path.events), args.out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=LOG_LEVELS[args.log_level],
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
