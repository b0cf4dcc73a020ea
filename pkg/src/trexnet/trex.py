"""Variable selection by early-terminated random experiments.

Computer-generated dummy columns are appended to the design and compete
with the real columns in forward selection.  Each of K experiments redraws
the dummies, runs the path until T dummies have entered, and records which
real columns got in first.  Fusing the K runs gives each column a relative
occurrence in [0, 1]; the selected set is every column whose occurrence
clears a voting threshold.  The threshold and termination count are
calibrated against an estimate of the false discovery proportion so the
largest selected set still satisfies the target level.

Two FDP estimators are available: "binomial", which treats a null's wins
across experiments as independent coin flips with success rate T/L, and
"expected-count" (the default), which bounds the expected number of
voted-in nulls by p*T/((L+1)*v) and stays valid when wins are correlated
across experiments because the data is fixed and only dummies are redrawn.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom as _binom

from .augment import PenaltyConfig, en_augment, ien_augment, ridge_cv_lambda2
from .core import Dataset, RngStream, StandardizedDataset, standardize
from .errors import ConfigError, InputError
from .grouping import GroupPartition, correlation_matrix, groups_from_correlation
from .lars import StopRule, lars_path

BASE_SELECTORS = ("lasso", "en", "ien")
DUMMY_DISTRIBUTIONS = ("normal", "uniform")
FDP_ESTIMATORS = ("binomial", "expected-count")


def default_voting_grid(n_experiments: int) -> tuple[float, ...]:
    """Attainable thresholds {0.5 + i/(2K)} below 1, given 1/K resolution."""
    k = n_experiments
    return tuple(0.5 + i / (2.0 * k) for i in range(k) if 0.5 + i / (2.0 * k) < 1.0)


@dataclass(frozen=True)
class TrexConfig:
    """Settings for a full selection run.

    ``n_dummies`` and ``t_max`` default to p and max(1, ceil(L/20)).  For
    base "ien" either a ready partition or ``rho_cut`` must be given; for
    "en"/"ien" a fixed ``lambda2`` skips the ridge cross-validation.
    """

    alpha: float
    seed: int = 0
    n_experiments: int = 20
    n_dummies: int | None = None
    t_max: int | None = None
    base: str = "lasso"
    voting_grid: tuple[float, ...] | None = None
    dummy_dist: str = "normal"
    lambda2: float | None = None
    rho_cut: float | None = None
    partition: GroupPartition | None = None
    dummy_policy: str = "none"
    fdp_estimator: str = "expected-count"
    lambda2_grid: tuple[float, ...] | None = None
    cv_folds: int = 5

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.n_experiments < 2:
            raise ConfigError("at least 2 experiments are required")
        if self.n_dummies is not None and self.n_dummies < 1:
            raise ConfigError("n_dummies must be at least 1")
        if self.t_max is not None and self.t_max < 1:
            raise ConfigError("t_max must be at least 1")
        if self.base not in BASE_SELECTORS:
            raise ConfigError(f"base must be one of {BASE_SELECTORS}, got {self.base!r}")
        if self.dummy_dist not in DUMMY_DISTRIBUTIONS:
            raise ConfigError(f"unsupported dummy distribution {self.dummy_dist!r}")
        if self.fdp_estimator not in FDP_ESTIMATORS:
            raise ConfigError(f"unknown fdp estimator {self.fdp_estimator!r}")
        if self.voting_grid is not None:
            grid = tuple(self.voting_grid)
            if not grid or any(not 0.5 <= v < 1.0 for v in grid):
                raise ConfigError("voting grid values must lie in [0.5, 1)")
        if self.rho_cut is not None and not 0.0 < self.rho_cut < 1.0:
            raise ConfigError(f"rho_cut must lie in (0, 1), got {self.rho_cut}")
        if self.lambda2 is not None and self.lambda2 <= 0:
            raise ConfigError(f"lambda2 must be positive, got {self.lambda2}")

    def grid(self) -> tuple[float, ...]:
        if self.voting_grid is not None:
            return tuple(sorted(self.voting_grid))
        return default_voting_grid(self.n_experiments)


@dataclass(frozen=True)
class ExperimentRecord:
    """Outcome of one terminated experiment.

    ``entries`` lists first entries in path order as (kind, column) with
    kind "real" or "dummy"; dummy columns are numbered from 0 within the
    dummy block.  ``candidate_sets[t]`` holds the real columns that entered
    strictly before the (t+1)-th distinct dummy.
    """

    index: int
    n_real: int
    entries: tuple[tuple[str, int], ...]
    candidate_sets: tuple[frozenset[int], ...]
    attained: int
    exhausted: bool

    def candidates(self, t: int) -> frozenset[int]:
        """Real columns entered before the t-th dummy (all of them if the
        path ran out of dummies first)."""
        if t < 1:
            raise ConfigError("dummy count starts at 1")
        if t <= self.attained:
            return self.candidate_sets[t - 1]
        return frozenset(c for kind, c in self.entries if kind == "real")


@dataclass(frozen=True)
class OccurrenceTable:
    """Relative occurrences, one row per termination count, one column per
    real variable.  Row t-1 holds the fraction of experiments in which each
    column entered before the t-th dummy."""

    values: np.ndarray
    n_experiments: int

    def __post_init__(self) -> None:
        vals = self.values
        if vals.ndim != 2:
            raise InputError("occurrence table must be 2-d")
        if np.any(vals < -1e-12) or np.any(vals > 1.0 + 1e-12):
            raise InputError("occurrences must lie in [0, 1]")
        scaled = vals * self.n_experiments
        if np.max(np.abs(scaled - np.round(scaled)), initial=0.0) > 1e-9:
            raise InputError("occurrences must be multiples of 1/K")
        if vals.shape[0] > 1 and np.any(np.diff(vals, axis=0) < -1e-12):
            raise InputError("occurrences must be non-decreasing in the dummy count")

    @property
    def t_max(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def selected(self, v: float, t: int) -> np.ndarray:
        if not 1 <= t <= self.t_max:
            raise ConfigError(f"t must lie in 1..{self.t_max}, got {t}")
        return np.flatnonzero(self.values[t - 1] > v)


@dataclass(frozen=True)
class CalibrationResult:
    v_star: float
    t_star: int
    fdp_star: float
    selected: tuple[int, ...]
    grid: tuple[float, ...]
    surface: tuple[tuple[float, ...], ...]
    scanned_t: int
    feasible: bool


@dataclass(frozen=True)
class SelectionReport:
    selected: tuple[int, ...]
    selected_names: tuple[str, ...]
    v_star: float
    t_star: int
    fdp_estimate: float
    occurrences: OccurrenceTable
    calibration: CalibrationResult
    config: dict
    diagnostics: tuple[dict, ...]
    lambda2: float | None = None
    partition: GroupPartition | None = None
    timings: dict = field(default_factory=dict)


def generate_dummies(n: int, count: int, dist: str, rng: np.random.Generator,
                     standardized: bool = True) -> np.ndarray:
    """Draw an n x count block of iid dummy columns.

    With ``standardized`` the columns are centered and scaled to unit norm,
    exactly like the real columns they will compete with.
    """
    if n < 1 or count < 1:
        raise ConfigError("dummy block needs at least one row and column")
    if dist == "normal":
        block = rng.standard_normal((n, count))
    elif dist == "uniform":
        block = rng.uniform(-1.0, 1.0, size=(n, count))
    else:
        raise ConfigError(f"unsupported dummy distribution {dist!r}")
    if not standardized:
        return block
    block = block - block.mean(axis=0)
    norms = np.linalg.norm(block, axis=0)
    safe = norms > 1e-12
    block[:, safe] /= norms[safe]
    return block


def run_experiment(Xs: np.ndarray, ys: np.ndarray, dummies: np.ndarray,
                   base: str = "lasso", penalty: PenaltyConfig | None = None,
                   t_max: int = 1, index: int = 0) -> ExperimentRecord:
    """One terminated forward-selection run on [Xs dummies]."""
    if base not in BASE_SELECTORS:
        raise ConfigError(f"base must be one of {BASE_SELECTORS}, got {base!r}")
    if t_max < 1:
        raise ConfigError("t_max must be at least 1")
    Xs = np.asarray(Xs, dtype=np.float64)
    dummies = np.asarray(dummies, dtype=np.float64)
    if dummies.shape[0] != Xs.shape[0]:
        raise InputError("dummy block row count does not match the design")
    n_real = Xs.shape[1]
    X_full = np.hstack([Xs, dummies])
    if base == "lasso":
        solve_X, solve_y = X_full, np.asarray(ys, dtype=np.float64)
    elif base == "en":
        if penalty is None:
            raise ConfigError("base 'en' requires a penalty configuration")
        prob = en_augment(X_full, ys, penalty.lambda2)
        solve_X, solve_y = prob.X, prob.y
    else:
        if penalty is None or penalty.partition is None:
            raise ConfigError("base 'ien' requires a penalty with a partition")
        if penalty.partition.p != n_real:
            raise ConfigError(
                f"partition covers {penalty.partition.p} columns but the "
                f"design has {n_real} real columns"
            )
        prob = ien_augment(X_full, ys, penalty)
        solve_X, solve_y = prob.X, prob.y
    path = lars_path(
        solve_X,
        solve_y,
        mode="lasso",
        stop=StopRule(dummy_count=t_max, n_real=n_real),
        require_standardized=False,
    )
    entries: list[tuple[str, int]] = []
    reals_so_far: list[int] = []
    snapshots: list[frozenset[int]] = []
    seen: set[int] = set()
    for ev in path.events:
        if ev.kind != "enter" or ev.variable in seen:
            continue
        seen.add(ev.variable)
        if ev.variable < n_real:
            reals_so_far.append(ev.variable)
            entries.append(("real", ev.variable))
        else:
            snapshots.append(frozenset(reals_so_far))
            entries.append(("dummy", ev.variable - n_real))
    return ExperimentRecord(
        index=index,
        n_real=n_real,
        entries=tuple(entries),
        candidate_sets=tuple(snapshots),
        attained=len(snapshots),
        exhausted=len(snapshots) < t_max,
    )


def fuse(records: list[ExperimentRecord], t_max: int) -> OccurrenceTable:
    """Average candidate-set membership over experiments."""
    if not records:
        raise InputError("no experiment records to fuse")
    p = records[0].n_real
    if any(r.n_real != p for r in records):
        raise InputError("experiment records disagree on the column count")
    counts = np.zeros((t_max, p))
    for rec in records:
        for t in range(1, t_max + 1):
            members = list(rec.candidates(t))
            if members:
                counts[t - 1, members] += 1.0
    return OccurrenceTable(values=counts / len(records), n_experiments=len(records))


def _effective_dummies(cfg: TrexConfig, occ: OccurrenceTable) -> int:
    return cfg.n_dummies if cfg.n_dummies is not None else occ.p


def null_count_estimate(v: float, t: int, cfg: TrexConfig, occ: OccurrenceTable,
                        estimator: str | None = None) -> float:
    """Estimated number of nulls with occurrence above v at termination t."""
    kind = estimator if estimator is not None else cfg.fdp_estimator
    if kind not in FDP_ESTIMATORS:
        raise ConfigError(f"unknown fdp estimator {kind!r}")
    if not 0.5 <= v < 1.0:
        raise ConfigError(f"voting threshold must lie in [0.5, 1), got {v}")
    dummies = _effective_dummies(cfg, occ)
    if t > dummies:
        raise ConfigError(f"termination count {t} exceeds the {dummies} dummies")
    if not 1 <= t <= occ.t_max:
        raise ConfigError(f"t must lie in 1..{occ.t_max}, got {t}")
    p = occ.p
    if kind == "binomial":
        k = occ.n_experiments
        return float(p * _binom.sf(v * k, k, t / dummies))
    return float(min(p, p * t / ((dummies + 1) * v)))


def estimate_fdp(v: float, t: int, cfg: TrexConfig, occ: OccurrenceTable,
                 estimator: str | None = None) -> float:
    """Estimated FDP of the vote at (v, t), capped at 1."""
    null_count = null_count_estimate(v, t, cfg, occ, estimator)
    n_selected = occ.selected(v, t).size
    return float(min(1.0, null_count / max(1, n_selected)))


def calibrate(occ: OccurrenceTable, cfg: TrexConfig) -> CalibrationResult:
    """Pick the (v, t) pair with the largest selected set among those whose
    estimated FDP stays within alpha.

    Ties prefer a smaller estimate, then a larger threshold, then a smaller
    termination count.  Scanning stops raising t once the estimate at the
    top of the grid exceeds alpha, and with no feasible pair the selection
    is empty at (max grid, 1).
    """
    grid = cfg.grid()
    surface: list[tuple[float, ...]] = []
    best_key = None
    best = None
    for t in range(1, occ.t_max + 1):
        row = tuple(estimate_fdp(v, t, cfg, occ) for v in grid)
        surface.append(row)
        for v, fdp in zip(grid, row):
            if fdp > cfg.alpha:
                continue
            chosen = occ.selected(v, t)
            key = (chosen.size, -fdp, v, -t)
            if best_key is None or key > best_key:
                best_key = key
                best = (v, t, fdp, tuple(int(j) for j in chosen))
        if row[-1] > cfg.alpha:
            break
    if best is None:
        v_star, t_star = max(grid), 1
        return CalibrationResult(
            v_star=v_star, t_star=t_star,
            fdp_star=float(surface[0][len(grid) - 1]),
            selected=(), grid=grid, surface=tuple(surface),
            scanned_t=len(surface), feasible=False,
        )
    v_star, t_star, fdp_star, selected = best
    return CalibrationResult(
        v_star=float(v_star), t_star=int(t_star), fdp_star=float(fdp_star),
        selected=selected, grid=grid, surface=tuple(surface),
        scanned_t=len(surface), feasible=True,
    )


_WORKER_CTX: dict = {}


def _experiment_worker_init(Xs, ys, base, penalty, t_max, n_dummies, dist, seed):
    _WORKER_CTX.update(Xs=Xs, ys=ys, base=base, penalty=penalty, t_max=t_max,
                       n_dummies=n_dummies, dist=dist, seed=seed)


def _experiment_worker_run(k: int) -> ExperimentRecord:
    ctx = _WORKER_CTX
    rng = RngStream(ctx["seed"], (k,)).generator()
    dummies = generate_dummies(ctx["Xs"].shape[0], ctx["n_dummies"], ctx["dist"], rng)
    return run_experiment(ctx["Xs"], ctx["ys"], dummies, base=ctx["base"],
                          penalty=ctx["penalty"], t_max=ctx["t_max"], index=k)


def resolve_model(std: StandardizedDataset, cfg: TrexConfig
                  ) -> tuple[PenaltyConfig | None, GroupPartition | None, float | None]:
    """Fill in the partition and ridge weight a base selector needs."""
    partition = None
    lambda2 = None
    if cfg.base == "ien":
        partition = cfg.partition
        if partition is None:
            if cfg.rho_cut is None:
                raise ConfigError("base 'ien' needs a partition or rho_cut")
            partition = groups_from_correlation(correlation_matrix(std.X), cfg.rho_cut)
        if partition.p != std.X.shape[1]:
            raise ConfigError("partition does not cover the design columns")
    if cfg.base in ("en", "ien"):
        lambda2 = cfg.lambda2
        if lambda2 is None:
            grid = None if cfg.lambda2_grid is None else np.asarray(cfg.lambda2_grid)
            lambda2 = ridge_cv_lambda2(std.X, std.y, grid=grid, folds=cfg.cv_folds)
    penalty = None
    if cfg.base == "en":
        penalty = PenaltyConfig(lambda2=lambda2)
    elif cfg.base == "ien":
        penalty = PenaltyConfig(lambda2=lambda2, partition=partition,
                                dummy_policy=cfg.dummy_policy)
    return penalty, partition, lambda2


def run_experiments(std: StandardizedDataset, cfg: TrexConfig,
                    penalty: PenaltyConfig | None, workers: int = 1
                    ) -> list[ExperimentRecord]:
    """Run the K dummy experiments, optionally across processes.

    Results are keyed by experiment index, so the outcome does not depend
    on the degree of parallelism.
    """
    n, p = std.X.shape
    n_dummies = cfg.n_dummies if cfg.n_dummies is not None else p
    t_max = effective_t_max(cfg, p)
    init_args = (std.X, std.y, cfg.base, penalty, t_max, n_dummies,
                 cfg.dummy_dist, cfg.seed)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers,
                                 initializer=_experiment_worker_init,
                                 initargs=init_args) as pool:
            records = list(pool.map(_experiment_worker_run, range(cfg.n_experiments)))
    else:
        _experiment_worker_init(*init_args)
        try:
            records = [_experiment_worker_run(k) for k in range(cfg.n_experiments)]
        finally:
            _WORKER_CTX.clear()
    records.sort(key=lambda r: r.index)
    return records


def effective_t_max(cfg: TrexConfig, p: int) -> int:
    n_dummies = cfg.n_dummies if cfg.n_dummies is not None else p
    return cfg.t_max if cfg.t_max is not None else max(1, math.ceil(n_dummies / 20))


def config_echo(cfg: TrexConfig, p: int) -> dict:
    echo = {
        "alpha": cfg.alpha,
        "seed": cfg.seed,
        "n_experiments": cfg.n_experiments,
        "n_dummies": cfg.n_dummies if cfg.n_dummies is not None else p,
        "t_max": effective_t_max(cfg, p),
        "base": cfg.base,
        "voting_grid": list(cfg.grid()),
        "dummy_dist": cfg.dummy_dist,
        "dummy_policy": cfg.dummy_policy,
        "fdp_estimator": cfg.fdp_estimator,
        "rho_cut": cfg.rho_cut,
    }
    return echo


def trex_select(data: Dataset, cfg: TrexConfig, workers: int = 1) -> SelectionReport:
    """End-to-end selection: standardize, group, run, fuse, calibrate."""
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    std = standardize(data)
    penalty, partition, lambda2 = resolve_model(std, cfg)
    timings["prepare_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    records = run_experiments(std, cfg, penalty, workers=workers)
    timings["experiments_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    occ = fuse(records, effective_t_max(cfg, data.p))
    cal = calibrate(occ, cfg)
    timings["calibrate_s"] = time.perf_counter() - t0

    names = data.names if data.names is not None else tuple(
        f"x{j}" for j in range(data.p)
    )
    diagnostics = tuple(
        {"experiment": r.index, "dummies_entered": r.attained,
         "first_entries": len(r.entries), "exhausted": r.exhausted}
        for r in records
    )
    return SelectionReport(
        selected=cal.selected,
        selected_names=tuple(names[j] for j in cal.selected),
        v_star=cal.v_star,
        t_star=cal.t_star,
        fdp_estimate=cal.fdp_star,
        occurrences=occ,
        calibration=cal,
        config=config_echo(cfg, data.p),
        diagnostics=diagnostics,
        lambda2=lambda2,
        partition=partition,
        timings=timings,
    )


def report_payload(report: SelectionReport, include_timings: bool = False) -> dict:
    """JSON-ready dict for a report; timings are opt-in so outputs stay
    reproducible byte for byte."""
    occ_row = report.occurrences.values[report.t_star - 1]
    payload = {
        "schema": "trexnet-selection-v1",
        "selected": [int(j) for j in report.selected],
        "selected_names": list(report.selected_names),
        "v_star": float(report.v_star),
        "t_star": int(report.t_star),
        "fdp_estimate": float(report.fdp_estimate),
        "feasible": bool(report.calibration.feasible),
        "voting_grid": [float(v) for v in report.calibration.grid],
        "fdp_surface": [[float(x) for x in row] for row in report.calibration.surface],
        "occurrences_at_t_star": [float(x) for x in occ_row],
        "config": report.config,
        "lambda2": None if report.lambda2 is None else float(report.lambda2),
        "groups": None if report.partition is None else [
            list(g) for g in report.partition.groups
        ],
        "diagnostics": list(report.diagnostics),
    }
    if include_timings:
        payload["timings"] = {k: float(v) for k, v in report.timings.items()}
    return payload
