"""Synthetic designs, ground-truth metrics, and benchmark drivers.

Two design families are provided: equicorrelated Gaussian blocks, and
SNP-style genotype blocks in {0, 1, 2} built from two thresholded latent
haplotype draws, which gives within-block correlation similar to linkage
patterns while keeping Binomial(2, maf) marginals.  The Monte-Carlo driver
derives one child random stream per trial, so summaries do not depend on
execution order or worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm as _norm

from .core import Dataset, RngStream, snr_noise_variance, standardize
from .errors import ConfigError
from .grouping import correlation_matrix, groups_from_correlation
from .trex import (
    PenaltyConfig,
    TrexConfig,
    generate_dummies,
    run_experiment,
    trex_select,
)

DESIGN_FAMILIES = ("gaussian", "snp")


@dataclass(frozen=True)
class DesignSpec:
    """Layout of a synthetic regression or case/control problem.

    ``blocks`` occupy the leading columns in order; the rest are
    independent.  ``actives`` maps column indices to true coefficients.
    For the snp family the response is binary, obtained by thresholding
    the latent liability so that exactly ``round(case_fraction * n)``
    samples are cases.
    """

    n: int
    p: int
    family: str = "gaussian"
    blocks: tuple[tuple[int, float], ...] = ()
    actives: tuple[tuple[int, float], ...] = ()
    snr: float = 1.0
    maf_range: tuple[float, float] = (0.05, 0.5)
    case_fraction: float = 5.0 / 7.0

    def __post_init__(self) -> None:
        if self.family not in DESIGN_FAMILIES:
            raise ConfigError(f"family must be one of {DESIGN_FAMILIES}")
        if self.n < 2 or self.p < 1:
            raise ConfigError("need n >= 2 samples and p >= 1 columns")
        total = 0
        for size, rho in self.blocks:
            if size < 1:
                raise ConfigError("block sizes must be positive")
            if not -1.0 < rho < 1.0:
                raise ConfigError(f"block correlation must lie in (-1, 1), got {rho}")
            total += size
        if total > self.p:
            raise ConfigError(f"blocks cover {total} columns but p = {self.p}")
        seen = set()
        for j, value in self.actives:
            if not 0 <= j < self.p:
                raise ConfigError(f"active column {j} outside 0..{self.p - 1}")
            if j in seen:
                raise ConfigError(f"active column {j} listed twice")
            if not np.isfinite(value) or value == 0.0:
                raise ConfigError("active coefficients must be finite and nonzero")
            seen.add(j)
        if not np.isfinite(self.snr) or self.snr <= 0:
            raise ConfigError(f"snr must be positive, got {self.snr}")
        lo, hi = self.maf_range
        if not 0.0 < lo <= hi <= 0.5:
            raise ConfigError("maf range must satisfy 0 < lo <= hi <= 0.5")
        if not 0.0 < self.case_fraction < 1.0:
            raise ConfigError("case fraction must lie in (0, 1)")

    @property
    def truth(self) -> tuple[int, ...]:
        return tuple(sorted(j for j, _ in self.actives))

    def coefficients(self) -> np.ndarray:
        beta = np.zeros(self.p)
        for j, value in self.actives:
            beta[j] = value
        return beta


def _equicorr_normal(rng: np.random.Generator, n: int, size: int,
                     rho: float) -> np.ndarray:
    """n x size block of standard normals with common pairwise correlation."""
    if size == 1 or rho == 0.0:
        return rng.standard_normal((n, size))
    if rho <= -1.0 / (size - 1) + 1e-12:
        raise ConfigError(
            f"equicorrelation {rho} infeasible for a block of {size} columns"
        )
    if rho > 0.0:
        shared = rng.standard_normal((n, 1))
        own = rng.standard_normal((n, size))
        return np.sqrt(rho) * shared + np.sqrt(1.0 - rho) * own
    cov = np.full((size, size), rho)
    np.fill_diagonal(cov, 1.0)
    chol = np.linalg.cholesky(cov)
    return rng.standard_normal((n, size)) @ chol.T


def _latent_blocks(spec: DesignSpec, rng: np.random.Generator) -> np.ndarray:
    cols = []
    covered = 0
    for size, rho in spec.blocks:
        cols.append(_equicorr_normal(rng, spec.n, size, rho))
        covered += size
    if covered < spec.p:
        cols.append(rng.standard_normal((spec.n, spec.p - covered)))
    return np.hstack(cols)


def gen_grouped_gaussian(spec: DesignSpec, rng: np.random.Generator
                         ) -> tuple[Dataset, frozenset[int]]:
    """Equicorrelated Gaussian blocks plus independent nulls, linear response."""
    if spec.family != "gaussian":
        raise ConfigError("spec family is not 'gaussian'")
    X = _latent_blocks(spec, rng)
    beta = spec.coefficients()
    if spec.actives:
        sigma2 = snr_noise_variance(X, beta, spec.snr)
        y = X @ beta + np.sqrt(sigma2) * rng.standard_normal(spec.n)
    else:
        y = rng.standard_normal(spec.n)
    return Dataset(X=X, y=y), frozenset(spec.truth)


def gen_snp_blocks(spec: DesignSpec, rng: np.random.Generator
                   ) -> tuple[Dataset, frozenset[int]]:
    """Genotypes in {0,1,2} from two thresholded latent haplotypes, with a
    case/control response cut from the latent liability."""
    if spec.family != "snp":
        raise ConfigError("spec family is not 'snp'")
    lo, hi = spec.maf_range
    maf = rng.uniform(lo, hi, size=spec.p)
    cut = _norm.ppf(maf)
    genotypes = np.zeros((spec.n, spec.p))
    for _ in range(2):
        genotypes += (_latent_blocks(spec, rng) < cut[None, :]).astype(np.float64)
    beta = spec.coefficients()
    if spec.actives:
        sigma2 = snr_noise_variance(genotypes, beta, spec.snr)
        liability = genotypes @ beta + np.sqrt(sigma2) * rng.standard_normal(spec.n)
    else:
        liability = rng.standard_normal(spec.n)
    n_cases = int(round(spec.case_fraction * spec.n))
    n_cases = min(max(n_cases, 1), spec.n - 1)
    order = np.argsort(liability, kind="stable")
    y = np.zeros(spec.n)
    y[order[spec.n - n_cases:]] = 1.0
    names = tuple(f"snp{j}" for j in range(spec.p))
    return Dataset(X=genotypes, y=y, names=names), frozenset(spec.truth)


def generate(spec: DesignSpec, rng: np.random.Generator
             ) -> tuple[Dataset, frozenset[int]]:
    if spec.family == "gaussian":
        return gen_grouped_gaussian(spec, rng)
    return gen_snp_blocks(spec, rng)


def fdp_tpp(selected, truth) -> tuple[float, float]:
    """False-discovery and true-positive proportions of a selection."""
    sel = set(int(j) for j in selected)
    tru = set(int(j) for j in truth)
    fdp = len(sel - tru) / max(1, len(sel))
    tpp = len(sel & tru) / max(1, len(tru))
    return float(fdp), float(tpp)


@dataclass(frozen=True)
class TrialOutcome:
    trial: int
    seed: int
    selected: tuple[int, ...]
    truth: tuple[int, ...]
    fdp: float
    tpp: float
    n_selected: int
    timings: dict = field(default_factory=dict)


@dataclass(frozen=True)
class McSummary:
    runs: int
    mean_fdp: float
    median_fdp: float
    mean_tpp: float
    median_tpp: float
    mean_selected: float
    outcomes: tuple[TrialOutcome, ...]


def _trial_seed(master_seed: int, trial: int) -> int:
    gen = RngStream(master_seed, (trial, 1)).generator()
    return int(gen.integers(0, 2**62))


def run_trial(spec: DesignSpec, cfg: TrexConfig, trial: int) -> TrialOutcome:
    """One seeded draw-and-select round; fully determined by (cfg.seed, trial)."""
    data_rng = RngStream(cfg.seed, (trial, 0)).generator()
    data, truth = generate(spec, data_rng)
    trial_cfg = replace(cfg, seed=_trial_seed(cfg.seed, trial))
    t0 = time.perf_counter()
    report = trex_select(data, trial_cfg)
    elapsed = time.perf_counter() - t0
    fdp, tpp = fdp_tpp(report.selected, truth)
    return TrialOutcome(
        trial=trial,
        seed=trial_cfg.seed,
        selected=report.selected,
        truth=tuple(sorted(truth)),
        fdp=fdp,
        tpp=tpp,
        n_selected=len(report.selected),
        timings={"select_s": elapsed},
    )


def _mc_task(args) -> TrialOutcome:
    spec, cfg, trial = args
    return run_trial(spec, cfg, trial)


def monte_carlo(spec: DesignSpec, cfg: TrexConfig, runs: int,
                workers: int = 1) -> McSummary:
    """Aggregate seeded independent trials into FDP/TPP summaries."""
    if runs < 1:
        raise ConfigError("runs must be at least 1")
    tasks = [(spec, cfg, t) for t in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_mc_task, tasks))
    else:
        outcomes = [_mc_task(t) for t in tasks]
    outcomes.sort(key=lambda o: o.trial)
    fdp = np.array([o.fdp for o in outcomes])
    tpp = np.array([o.tpp for o in outcomes])
    counts = np.array([o.n_selected for o in outcomes], dtype=np.float64)
    return McSummary(
        runs=runs,
        mean_fdp=float(fdp.mean()),
        median_fdp=float(np.median(fdp)),
        mean_tpp=float(tpp.mean()),
        median_tpp=float(np.median(tpp)),
        mean_selected=float(counts.mean()),
        outcomes=tuple(outcomes),
    )


def bench_template(p: int, n: int = 50, block_size: int = 10,
                   rho: float = 0.7, snr: float = 3.0) -> DesignSpec:
    """All-blocked design used by the timing benchmark; every column sits in
    a block so the group count stays at p/block_size after clustering."""
    n_blocks = p // block_size
    if n_blocks * block_size != p:
        raise ConfigError(f"p = {p} is not a multiple of the block size {block_size}")
    blocks = tuple((block_size, rho) for _ in range(n_blocks))
    actives = tuple((j, 1.0) for j in range(3)) + tuple(
        (block_size + j, -1.0) for j in range(3)
    )
    return DesignSpec(n=n, p=p, family="gaussian", blocks=blocks,
                      actives=actives, snr=snr)


def bench_relative_time(p_grid, seed: int = 0, n: int = 50, rho_cut: float = 0.5,
                        reps: int = 50, lambda2: float = 1.0,
                        selectors=("lasso", "en", "ien")) -> list[dict]:
    """Mean wall-clock of one terminated experiment per selector and p.

    Only the path solve (including building its penalty rows) is timed;
    dummy generation and clustering are excluded.  Rows report seconds and
    the ratio against the plain lasso baseline at the same p.
    """
    rows: list[dict] = []
    for gi, p in enumerate(p_grid):
        spec = bench_template(int(p), n=n)
        data_rng = RngStream(seed, (gi, 0)).generator()
        data, _ = gen_grouped_gaussian(spec, data_rng)
        std = standardize(data)
        partition = groups_from_correlation(correlation_matrix(std.X), rho_cut)
        means: dict[str, float] = {}
        for si, selector in enumerate(selectors):
            if selector == "en":
                penalty = PenaltyConfig(lambda2=lambda2)
            elif selector == "ien":
                penalty = PenaltyConfig(lambda2=lambda2, partition=partition)
            else:
                penalty = None
            total = 0.0
            for rep in range(reps):
                rng = RngStream(seed, (gi, si, rep)).generator()
                dummies = generate_dummies(std.X.shape[0], int(p), "normal", rng)
                t0 = time.perf_counter()
                run_experiment(std.X, std.y, dummies, base=selector,
                               penalty=penalty, t_max=1)
                total += time.perf_counter() - t0
            means[selector] = total / reps
        baseline = means.get("lasso")
        for selector in selectors:
            ratio = means[selector] / baseline if baseline else float("nan")
            rows.append({
                "p": int(p),
                "selector": selector,
                "mean_seconds": means[selector],
                "ratio_vs_lasso": ratio,
            })
    return rows


def summary_payload(summary: McSummary, include_timings: bool = False) -> dict:
    payload = {
        "schema": "trexnet-summary-v1",
        "runs": summary.runs,
        "mean_fdp": summary.mean_fdp,
        "median_fdp": summary.median_fdp,
        "mean_tpp": summary.mean_tpp,
        "median_tpp": summary.median_tpp,
        "mean_selected": summary.mean_selected,
    }
    if include_timings:
        payload["mean_select_s"] = float(
            np.mean([o.timings.get("select_s", 0.0) for o in summary.outcomes])
        )
    return payload
