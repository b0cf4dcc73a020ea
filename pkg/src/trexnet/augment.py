"""Row augmentations that turn ridge-style penalties into plain lasso fits.

Both penalties below are handled by appending scaled rows to the design and
zeros to the response, after which the whole problem is an ordinary lasso:

* elastic net: ``||y - X b||^2 + lam1*||b||_1 + lam2*||b||^2`` gains one row
  ``sqrt(lam2) * e_j`` per penalized column;
* grouped variant: ``||y - X b||^2 + lam1*||b||_1 +
  lam2 * sum_m (sum_{j in m} b_j)^2 / size_m`` gains a single row
  ``sqrt(lam2 / size_m) * 1_m`` per group, so the augmented design has only
  one extra row per group instead of one per column.

Columns are expected to be standardized before augmentation; the augmented
rows themselves are deliberately left unscaled since rescaling them would
change the objective being minimized.

Convention: ``lambda1`` throughout this module is the weight on ``||b||_1``
in the objectives above, which have no 1/2 factor on the residual.  The
path engine minimizes ``0.5*||y - X b||^2 + penalty*||b||_1``, so a fit at
``lambda1`` is the path point at ``penalty = lambda1 / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError
from .grouping import GroupPartition
from .lars import SolutionPath, StopRule, lars_path

DUMMY_POLICIES = ("none", "singleton-groups")


@dataclass(frozen=True)
class PenaltyConfig:
    """Quadratic-penalty settings shared by the augmentation helpers.

    ``partition`` groups the leading columns; any trailing columns (appended
    dummies) are penalized according to ``dummy_policy``: "none" leaves them
    without a quadratic penalty, "singleton-groups" gives each its own
    ridge row.
    """

    lambda2: float
    partition: GroupPartition | None = None
    dummy_policy: str = "none"

    def __post_init__(self) -> None:
        if not np.isfinite(self.lambda2) or self.lambda2 <= 0:
            raise ConfigError(f"lambda2 must be positive, got {self.lambda2}")
        if self.dummy_policy not in DUMMY_POLICIES:
            raise ConfigError(
                f"dummy_policy must be one of {DUMMY_POLICIES}, got "
                f"{self.dummy_policy!r}"
            )


@dataclass(frozen=True)
class AugmentedProblem:
    """A design/response pair extended with penalty rows.

    The first ``n_samples`` rows of ``X`` are the original matrix; the rest
    encode the quadratic penalty.  Columns are unchanged, so coefficient
    indices refer to the original columns throughout.
    """

    X: np.ndarray
    y: np.ndarray
    n_samples: int

    def __post_init__(self) -> None:
        if self.X.ndim != 2 or self.y.ndim != 1:
            raise InputError("augmented problem needs a matrix and a vector")
        if self.X.shape[0] != self.y.size:
            raise InputError("augmented X and y disagree on row count")
        if not 0 <= self.n_samples <= self.X.shape[0]:
            raise InputError("n_samples outside the augmented row range")
        if np.any(self.y[self.n_samples:] != 0.0):
            raise InputError("augmented response rows must be exactly zero")

    @property
    def extra_rows(self) -> int:
        return self.X.shape[0] - self.n_samples


def en_augment(Xs: np.ndarray, ys: np.ndarray, lambda2: float) -> AugmentedProblem:
    """Ridge rows for every column: bottom block sqrt(lambda2) * I."""
    Xs = np.asarray(Xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if not np.isfinite(lambda2) or lambda2 <= 0:
        raise ConfigError(f"lambda2 must be positive, got {lambda2}")
    n, q = Xs.shape
    bottom = np.zeros((q, q))
    np.fill_diagonal(bottom, np.sqrt(lambda2))
    X_aug = np.vstack([Xs, bottom])
    y_aug = np.concatenate([ys, np.zeros(q)])
    return AugmentedProblem(X=X_aug, y=y_aug, n_samples=n)


def ien_augment(Xs: np.ndarray, ys: np.ndarray, cfg: PenaltyConfig) -> AugmentedProblem:
    """One shared ridge row per group; trailing columns follow the dummy policy."""
    Xs = np.asarray(Xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if cfg.partition is None:
        raise ConfigError("grouped augmentation requires a partition")
    part = cfg.partition
    n, q = Xs.shape
    if part.p > q:
        raise InputError(
            f"partition covers {part.p} columns but the matrix has {q}"
        )
    n_dummies = q - part.p
    rows = part.group_count
    if n_dummies and cfg.dummy_policy == "singleton-groups":
        rows += n_dummies
    bottom = np.zeros((rows, q))
    root = np.sqrt(cfg.lambda2)
    for m, members in enumerate(part.groups):
        bottom[m, list(members)] = root / np.sqrt(len(members))
    if n_dummies and cfg.dummy_policy == "singleton-groups":
        for i in range(n_dummies):
            bottom[part.group_count + i, part.p + i] = root
    X_aug = np.vstack([Xs, bottom])
    y_aug = np.concatenate([ys, np.zeros(rows)])
    return AugmentedProblem(X=X_aug, y=y_aug, n_samples=n)


def en_lagrangian(beta: np.ndarray, Xs: np.ndarray, ys: np.ndarray,
                  lambda1: float, lambda2: float) -> float:
    beta = np.asarray(beta, dtype=np.float64)
    r = ys - Xs @ beta
    return float(r @ r + lambda1 * np.abs(beta).sum() + lambda2 * (beta @ beta))


def ien_lagrangian(beta: np.ndarray, Xs: np.ndarray, ys: np.ndarray,
                   lambda1: float, cfg: PenaltyConfig) -> float:
    if cfg.partition is None:
        raise ConfigError("grouped objective requires a partition")
    beta = np.asarray(beta, dtype=np.float64)
    part = cfg.partition
    if beta.size < part.p:
        raise InputError("coefficient vector shorter than the partition")
    r = ys - Xs @ beta
    group_term = 0.0
    for members in part.groups:
        s = float(beta[list(members)].sum())
        group_term += s * s / len(members)
    tail = beta[part.p:]
    if tail.size and cfg.dummy_policy == "singleton-groups":
        group_term += float(tail @ tail)
    return float(r @ r + lambda1 * np.abs(beta).sum() + cfg.lambda2 * group_term)


def augmented_objective(prob: AugmentedProblem, beta: np.ndarray,
                        lambda1: float) -> float:
    """Plain lasso objective ||y' - X'b||^2 + lambda1*||b||_1 on the augmentation."""
    beta = np.asarray(beta, dtype=np.float64)
    r = prob.y - prob.X @ beta
    return float(r @ r + lambda1 * np.abs(beta).sum())


def augmented_gram(prob: AugmentedProblem) -> np.ndarray:
    return prob.X.T @ prob.X


def _solve_at(prob: AugmentedProblem, lambda1: float,
              mode: str) -> tuple[np.ndarray, SolutionPath]:
    if not np.isfinite(lambda1) or lambda1 <= 0:
        raise ConfigError(f"lambda1 must be positive, got {lambda1}")
    path = lars_path(
        prob.X,
        prob.y,
        mode=mode,
        stop=StopRule(penalty_floor=lambda1 / 2.0),
        require_standardized=False,
    )
    return path.coef_at(lambda1 / 2.0), path


def solve_en(Xs: np.ndarray, ys: np.ndarray, lambda1: float, lambda2: float,
             mode: str = "lasso") -> tuple[np.ndarray, SolutionPath]:
    """Elastic-net coefficients at lambda1 via the augmented lasso path."""
    return _solve_at(en_augment(Xs, ys, lambda2), lambda1, mode)


def solve_ien(Xs: np.ndarray, ys: np.ndarray, lambda1: float,
              cfg: PenaltyConfig, mode: str = "lasso") -> tuple[np.ndarray, SolutionPath]:
    """Grouped-penalty coefficients at lambda1 via the augmented lasso path."""
    return _solve_at(ien_augment(Xs, ys, cfg), lambda1, mode)


def ien_stationarity_residual(beta: np.ndarray, Xs: np.ndarray, ys: np.ndarray,
                              lambda1: float, cfg: PenaltyConfig,
                              active_tol: float = 1e-9) -> float:
    """Largest violation of the zero-gradient condition on active coordinates.

    At a minimizer, every active coordinate j in group m satisfies
    ``-2*x_j.T r + lambda1*sign(b_j) + 2*lambda2*(group sum)/size_m = 0``.
    """
    if cfg.partition is None:
        raise ConfigError("stationarity check requires a partition")
    beta = np.asarray(beta, dtype=np.float64)
    part = cfg.partition
    r = ys - Xs @ beta
    corr = Xs.T @ r
    worst = 0.0
    group_sum = {m: float(beta[list(g)].sum()) for m, g in enumerate(part.groups)}
    labels = part.membership()
    for j in range(beta.size):
        if abs(beta[j]) <= active_tol:
            continue
        if j < part.p:
            m = int(labels[j])
            quad = 2.0 * cfg.lambda2 * group_sum[m] / len(part.groups[m])
        elif cfg.dummy_policy == "singleton-groups":
            quad = 2.0 * cfg.lambda2 * float(beta[j])
        else:
            quad = 0.0
        resid = -2.0 * float(corr[j]) + lambda1 * np.sign(beta[j]) + quad
        worst = max(worst, abs(resid))
    return worst


def grouping_gap_and_bound(beta: np.ndarray, group_a, group_b, lambda2: float,
                           Xs: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    """Normalized gap of group-averaged coefficients and its theoretical cap.

    Requires some pair (j in group_a, j' in group_b) with coefficients of
    the same sign; the cap shrinks like sqrt(1 - max inter-group correlation)
    and is exactly zero when the groups share a perfectly correlated pair.
    """
    beta = np.asarray(beta, dtype=np.float64)
    a = np.asarray(list(group_a), dtype=np.intp)
    b = np.asarray(list(group_b), dtype=np.intp)
    if a.size == 0 or b.size == 0:
        raise InputError("both groups must be non-empty")
    if np.intersect1d(a, b).size:
        raise InputError("groups must be disjoint")
    if not np.isfinite(lambda2) or lambda2 <= 0:
        raise ConfigError(f"lambda2 must be positive, got {lambda2}")
    signs = np.sign(beta)
    if not np.any(np.outer(signs[a], signs[b]) > 0):
        raise ConfigError(
            "bound inapplicable: no pair across the two groups has "
            "same-sign nonzero coefficients"
        )
    y_norm = float(np.linalg.norm(ys))
    if y_norm == 0.0:
        raise InputError("response vector must be nonzero")
    lhs = abs(float(beta[a].mean()) - float(beta[b].mean())) / y_norm
    cross = Xs[:, a].T @ Xs[:, b]
    max_rho = float(cross.max())
    rhs = np.sqrt(2.0 * max(0.0, 1.0 - max_rho)) / lambda2
    return lhs, rhs


def ridge_cv_lambda2(Xs: np.ndarray, ys: np.ndarray,
                     grid: np.ndarray | None = None,
                     folds: int = 5) -> float:
    """Pick the ridge weight minimizing mean out-of-fold squared error.

    Folds are deterministic strides (row i goes to fold i % folds), so the
    result depends only on the data and the grid.  Ties take the smallest
    grid value.
    """
    Xs = np.asarray(Xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if grid is None:
        grid = np.logspace(-4, 4, 10)
    grid = np.sort(np.asarray(grid, dtype=np.float64))
    if grid.size == 0:
        raise ConfigError("lambda2 grid must be non-empty")
    if np.any(grid <= 0) or not np.all(np.isfinite(grid)):
        raise ConfigError("lambda2 grid values must be positive and finite")
    if folds < 2:
        raise ConfigError(f"folds must be at least 2, got {folds}")
    n = Xs.shape[0]
    if n < folds:
        raise ConfigError(f"cannot split {n} rows into {folds} folds")
    sse = np.zeros(grid.size)
    rows = np.arange(n)
    for f in range(folds):
        held = rows % folds == f
        X_tr, y_tr = Xs[~held], ys[~held]
        X_te, y_te = Xs[held], ys[held]
        u, s, vt = np.linalg.svd(X_tr, full_matrices=False)
        uy = u.T @ y_tr
        for i, lam in enumerate(grid):
            shrink = s / (s * s + lam)
            beta = vt.T @ (shrink * uy)
            r = y_te - X_te @ beta
            sse[i] += float(r @ r)
    return float(grid[int(np.argmin(sse))])
