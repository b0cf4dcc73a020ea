"""Least-angle path solver with lasso sign handling and pluggable stopping.

For a fixed design the solver tracks the piecewise-linear coefficient path
of ``min_b 0.5*||y - X b||^2 + penalty*||b||_1`` as the penalty decreases
from ``max_j |x_j' y|`` toward zero.  The recorded ``penalty`` at any point
of the path equals the maximum absolute inner product between a column and
the current residual; objectives written as ``||y - X b||^2 + lam*||b||_1``
(no 1/2) correspond to ``lam = 2 * penalty``.

Breakpoints are the moments a variable enters the active set or, in lasso
mode, is dropped when its coefficient crosses zero.  The active Gram matrix
is factored incrementally: entries append a row to a Cholesky factor,
drops retriangularize it with Givens rotations.  Candidate columns whose
addition would make the factor numerically singular are skipped and never
reconsidered.

Stopping is controlled by a :class:`StopRule`; in particular the path can
be cut the moment the T-th distinct decoy column (index >= ``n_real``)
enters, which is how the random-experiment driver uses it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConfigError, InputError, NumericalError

# Steps smaller than this (relative to the starting penalty) are treated as
# simultaneous events.
EPS_STEP = 1e-12

# Reciprocal-condition threshold below which an entering column is declared
# collinear with the active set and permanently excluded.
RCOND_SKIP = 1e-12


@dataclass(frozen=True)
class PathEvent:
    """One breakpoint of the path.

    ``step`` counts events from 0, ``kind`` is "enter" or "drop",
    ``variable`` is the column index, and ``penalty`` is the value of
    max |x' r| at the moment of the event.
    """

    step: int
    kind: str
    variable: int
    penalty: float


@dataclass(frozen=True)
class StopRule:
    """Termination control for :func:`lars_path`.

    max_steps
        Stop after this many events.
    dummy_count, n_real
        Stop when ``dummy_count`` distinct columns with index >= ``n_real``
        have entered.  ``n_real`` marks the first decoy column.
    penalty_floor
        Stop once the penalty reaches this level.
    """

    max_steps: int | None = None
    dummy_count: int | None = None
    n_real: int | None = None
    penalty_floor: float = 0.0

    def check(self, p: int) -> None:
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.dummy_count is not None:
            if self.n_real is None:
                raise ConfigError("dummy_count requires n_real")
            if self.dummy_count < 1:
                raise ConfigError(
                    f"dummy_count must be >= 1, got {self.dummy_count}"
                )
        if self.n_real is not None and not 0 < self.n_real <= p:
            raise ConfigError(
                f"n_real must be in [1, {p}], got {self.n_real}"
            )
        if self.penalty_floor < 0:
            raise ConfigError(
                f"penalty_floor must be >= 0, got {self.penalty_floor}"
            )


class SolutionPath:
    """Piecewise-linear solution path between recorded knots.

    ``knots`` is a non-increasing array of penalties with one entry per
    event plus, when the path ends between events (penalty floor reached or
    correlations exhausted), a final event-less knot.  ``betas[i]`` is the
    full coefficient vector at ``knots[i]``.  Coefficients are linear in
    the penalty between consecutive knots.
    """

    def __init__(
        self,
        events: list[PathEvent],
        knots: np.ndarray,
        betas: np.ndarray,
        p: int,
        mode: str,
        stop_reason: str,
        n_real: int | None,
        excluded: tuple[int, ...],
    ):
        self.events = events
        self.knots = knots
        self.betas = betas
        self.p = p
        self.mode = mode
        self.stop_reason = stop_reason
        self.n_real = n_real
        self.excluded = excluded

    @property
    def n_events(self) -> int:
        return len(self.events)

    def coef_at(self, penalty: float) -> np.ndarray:
        """Coefficients at an arbitrary penalty covered by the path."""
        if penalty < 0:
            raise ConfigError(f"penalty must be >= 0, got {penalty}")
        if self.knots.size == 0:
            return np.zeros(self.p)
        if penalty >= self.knots[0]:
            return np.zeros(self.p)
        last = self.knots[-1]
        if penalty < last - EPS_STEP * max(1.0, self.knots[0]):
            raise ConfigError(
                f"path solved down to penalty {last:.6g}, requested {penalty:.6g}"
            )
        penalty = max(penalty, last)
        # knots are non-increasing; locate the segment containing penalty
        idx = int(np.searchsorted(-self.knots, -penalty, side="left"))
        if idx == 0:
            return self.betas[0].copy()
        lo, hi = self.knots[idx - 1], self.knots[idx]
        if lo - hi <= 0:
            return self.betas[idx].copy()
        t = (lo - penalty) / (lo - hi)
        return (1.0 - t) * self.betas[idx - 1] + t * self.betas[idx]

    def support_at(self, penalty: float, tol: float = 1e-10) -> np.ndarray:
        """Indices with coefficient magnitude above tol at the penalty."""
        return np.flatnonzero(np.abs(self.coef_at(penalty)) > tol)

    def final_coef(self) -> np.ndarray:
        if self.knots.size == 0:
            return np.zeros(self.p)
        return self.betas[-1].copy()

    def final_penalty(self) -> float:
        if self.knots.size == 0:
            return 0.0
        return float(self.knots[-1])


def _chol_append(L: np.ndarray, k: int, g: np.ndarray, gjj: float) -> float:
    """Append one row to the lower Cholesky factor of the active Gram.

    ``g`` holds the inner products of the new column with the k active
    ones, ``gjj`` its squared norm.  Returns the reciprocal-condition
    estimate of the grown factor; the caller rejects the column when it is
    below RCOND_SKIP.  On acceptance the factor lives in L[:k+1, :k+1].
    """
    if k == 0:
        d2 = gjj
    else:
        z = solve_triangular(L[:k, :k], g, lower=True, check_finite=False)
        d2 = gjj - float(z @ z)
        L[k, :k] = z
    if d2 <= 0 or not np.isfinite(d2):
        return 0.0
    d = np.sqrt(d2)
    L[k, k] = d
    diag = np.diagonal(L)[: k + 1]
    lo, hi = float(diag.min()), float(diag.max())
    if hi <= 0:
        return 0.0
    return (lo / hi) ** 2


def _chol_delete(L: np.ndarray, k: int, i: int) -> None:
    """Remove active position i from the k x k lower Cholesky factor.

    Rows below i shift up, then Givens rotations restore triangularity.
    Afterwards the factor occupies L[:k-1, :k-1].
    """
    L[i : k - 1, : k] = L[i + 1 : k, : k]
    for m in range(i, k - 1):
        a, b = L[m, m], L[m, m + 1]
        r = np.hypot(a, b)
        if r <= 0:
            continue
        c, s = a / r, b / r
        col_a = L[m : k - 1, m].copy()
        col_b = L[m : k - 1, m + 1].copy()
        L[m : k - 1, m] = c * col_a + s * col_b
        L[m : k - 1, m + 1] = -s * col_a + c * col_b
        L[m, m] = r
        L[m, m + 1] = 0.0
    L[: k - 1, k - 1] = 0.0
    L[k - 1, :k] = 0.0


def _validate_inputs(X: np.ndarray, y: np.ndarray, require_standardized: bool):
    if X.ndim != 2:
        raise InputError(f"X must be 2-dimensional, got shape {X.shape}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise InputError(
            f"y must have shape ({X.shape[0]},), got {y.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise InputError("X contains non-finite values")
    if not np.all(np.isfinite(y)):
        raise InputError("y contains non-finite values")
    if require_standardized:
        norms = np.linalg.norm(X, axis=0)
        nonzero = norms > 1e-12
        if np.any(np.abs(norms[nonzero] - 1.0) > 1e-6):
            raise InputError(
                "columns of X must have unit Euclidean norm; standardize first"
            )
        means = X.mean(axis=0)
        if np.any(np.abs(means[nonzero]) > 1e-6):
            raise InputError(
                "columns of X must be centered; standardize first"
            )
        ym = abs(float(y.mean()))
        if ym > 1e-6 * max(1.0, float(np.linalg.norm(y))):
            raise InputError("y must be centered; standardize first")


def lars_path(
    X: np.ndarray,
    y: np.ndarray,
    mode: str = "lasso",
    stop: StopRule | None = None,
    require_standardized: bool = True,
) -> SolutionPath:
    """Run the least-angle path on (X, y).

    mode "lar" never removes variables; mode "lasso" drops a variable the
    moment its coefficient would cross zero, which makes every point of the
    path an L1-penalized least-squares solution.  ``require_standardized``
    may be disabled for callers that legitimately feed non-normalized
    designs (penalty-augmented matrices); the algorithm itself only relies
    on inner products.
    """
    if mode not in ("lar", "lasso"):
        raise ConfigError(f"mode must be 'lar' or 'lasso', got {mode!r}")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    _validate_inputs(X, y, require_standardized)
    if stop is None:
        stop = StopRule()
    P = X.shape[1]
    stop.check(P)

    c = X.T @ y  # current correlation of every column with the residual
    sq_norms = np.einsum("ij,ij->j", X, X)
    usable = sq_norms > 1e-24

    beta = np.zeros(P)
    active: list[int] = []
    signs: list[float] = []
    excluded = np.zeros(P, dtype=bool)
    is_active = np.zeros(P, dtype=bool)
    reentry_block: dict[int, float] = {}

    cap = 16
    L = np.zeros((cap, cap))
    XA = np.empty((X.shape[0], cap))

    events: list[PathEvent] = []
    knot_pen: list[float] = []
    knot_beta: list[np.ndarray] = []
    dummies_in: set[int] = set()
    stop_reason = "exhausted"

    C0 = float(np.max(np.abs(c[usable]))) if usable.any() else 0.0
    scale = max(C0, 1.0)

    def grow():
        nonlocal cap, L, XA
        new_cap = cap * 2
        L2 = np.zeros((new_cap, new_cap))
        L2[:cap, :cap] = L
        XA2 = np.empty((X.shape[0], new_cap))
        XA2[:, :cap] = XA
        L, XA, cap = L2, XA2, new_cap

    def try_enter(j: int) -> bool:
        """Attempt to add column j; returns False if collinear (excluded)."""
        k = len(active)
        if k == cap:
            grow()
        xj = X[:, j]
        g = XA[:, :k].T @ xj if k else np.empty(0)
        rcond = _chol_append(L, k, g, float(sq_norms[j]))
        if rcond < RCOND_SKIP:
            excluded[j] = True
            L[k, : k + 1] = 0.0
            return False
        XA[:, k] = xj
        active.append(j)
        signs.append(1.0 if c[j] > 0 else -1.0)
        is_active[j] = True
        return True

    def emit(kind: str, j: int, pen: float):
        events.append(PathEvent(len(events), kind, j, pen))
        knot_pen.append(pen)
        knot_beta.append(beta.copy())

    def finish(reason: str) -> SolutionPath:
        return SolutionPath(
            events=events,
            knots=np.array(knot_pen),
            betas=(
                np.array(knot_beta) if knot_beta else np.zeros((0, P))
            ),
            p=P,
            mode=mode,
            stop_reason=reason,
            n_real=stop.n_real,
            excluded=tuple(np.flatnonzero(excluded)),
        )

    def seed_entrant() -> bool:
        """Bring in the best eligible column at the current correlations."""
        nonlocal stop_reason
        while True:
            elig = usable & ~excluded & ~is_active
            if not elig.any():
                return False
            cabs = np.where(elig, np.abs(c), -np.inf)
            Cmax = float(cabs.max())
            if Cmax <= EPS_STEP * scale:
                return False
            if Cmax <= stop.penalty_floor:
                return False
            # lowest index among ties
            j = int(np.flatnonzero(cabs >= Cmax * (1.0 - EPS_STEP))[0])
            if try_enter(j):
                emit("enter", j, Cmax)
                return True
            # collinear: excluded inside try_enter, look for the next one

    if C0 <= EPS_STEP or C0 <= stop.penalty_floor:
        knot_pen.append(C0)
        knot_beta.append(beta.copy())
        return finish("penalty_floor" if C0 > EPS_STEP else "exhausted")

    if not seed_entrant():
        knot_pen.append(C0)
        knot_beta.append(beta.copy())
        return finish("exhausted")

    max_iter = 50 * P + 1000
    for _ in range(max_iter):
        # stop checks tied to the most recent event
        last = events[-1]
        if last.kind == "enter" and stop.n_real is not None:
            if last.variable >= stop.n_real:
                dummies_in.add(last.variable)
                if (
                    stop.dummy_count is not None
                    and len(dummies_in) >= stop.dummy_count
                ):
                    return finish("dummy_count")
        if stop.max_steps is not None and len(events) >= stop.max_steps:
            return finish("max_steps")

        k = len(active)
        C = float(np.max(np.abs(c[active])))
        if C <= EPS_STEP * scale:
            knot_pen.append(max(C, 0.0))
            knot_beta.append(beta.copy())
            return finish("exhausted")

        s = np.array(signs)
        ws = solve_triangular(L[:k, :k], s, lower=True, check_finite=False)
        ws = solve_triangular(
            L[:k, :k].T, ws, lower=False, check_finite=False
        )
        ssw = float(s @ ws)
        if ssw <= 0 or not np.isfinite(ssw):
            raise NumericalError(
                "active Gram matrix lost positive definiteness"
            )
        A = 1.0 / np.sqrt(ssw)
        w = A * ws  # coefficient velocities of active variables
        u = XA[:, :k] @ w
        a = X.T @ u  # correlation decay rates, all columns

        # --- candidate step sizes ---------------------------------------
        elig = usable & ~excluded & ~is_active
        gamma_entry = np.inf
        entrant = -1
        if elig.any():
            idx = np.flatnonzero(elig)
            cj, aj = c[idx], a[idx]
            with np.errstate(divide="ignore", invalid="ignore"):
                g1 = (C - cj) / (A - aj)
                g2 = (C + cj) / (A + aj)
            # a variable dropped at penalty pen may not re-enter until the
            # penalty has strictly decreased, which suppresses zero-length
            # drop/enter cycles; the floor applies per catch branch so the
            # later sign-flip catch of a just-dropped variable survives
            gmins = np.zeros(idx.size)
            if reentry_block:
                for jj, pen in reentry_block.items():
                    pos = np.searchsorted(idx, jj)
                    if pos < idx.size and idx[pos] == jj:
                        gmins[pos] = (C - (1.0 - 1e-10) * pen) / A
            cand = np.full(idx.size, np.inf)
            for g in (g1, g2):
                ok = np.isfinite(g) & (g > -EPS_STEP * scale)
                gc = np.where(ok, np.maximum(g, 0.0), np.inf)
                gc = np.where(gc >= gmins, gc, np.inf)
                cand = np.minimum(cand, gc)
            best = float(cand.min())
            if np.isfinite(best):
                ties = np.flatnonzero(cand <= best + EPS_STEP * scale)
                entrant = int(idx[ties[0]])
                gamma_entry = best

        gamma_drop = np.inf
        droppers: list[int] = []
        if mode == "lasso" and k:
            bj = beta[active]
            with np.errstate(divide="ignore", invalid="ignore"):
                gd = -bj / w
            gd = np.where(np.isfinite(gd) & (gd > EPS_STEP * scale), gd, np.inf)
            gmin = float(gd.min())
            if np.isfinite(gmin):
                gamma_drop = gmin
                droppers = [
                    active[i]
                    for i in np.flatnonzero(gd <= gmin + EPS_STEP * scale)
                ]

        gamma_end = C / A
        gamma_floor = (
            (C - stop.penalty_floor) / A
            if stop.penalty_floor > 0
            else np.inf
        )

        gamma_term = min(gamma_end, gamma_floor)
        gamma = min(gamma_entry, gamma_drop, gamma_term)
        if not np.isfinite(gamma) or gamma < 0:
            raise NumericalError("no finite step available on the path")

        # --- advance ------------------------------------------------------
        beta[active] += gamma * w
        c -= gamma * a
        Cn = C - gamma * A

        tol = EPS_STEP * scale
        if gamma_drop <= gamma + tol:
            # drops take precedence over simultaneous entries
            for j in sorted(droppers):
                beta[j] = 0.0
                emit("drop", j, Cn)
                pos = active.index(j)
                _chol_delete(L, len(active), pos)
                XA[:, pos : len(active) - 1] = XA[:, pos + 1 : len(active)]
                active.pop(pos)
                signs.pop(pos)
                is_active[j] = False
                reentry_block[j] = Cn
                if stop.max_steps is not None and len(events) >= stop.max_steps:
                    return finish("max_steps")
            if not active:
                if not seed_entrant():
                    knot_pen.append(Cn)
                    knot_beta.append(beta.copy())
                    return finish("exhausted")
            continue
        if gamma_entry <= gamma + tol and entrant >= 0:
            if try_enter(entrant):
                emit("enter", entrant, Cn)
            # if the entrant was collinear it is now excluded; recompute
            continue
        # terminal segment
        knot_pen.append(max(Cn, stop.penalty_floor if gamma_floor <= gamma_end else 0.0))
        knot_beta.append(beta.copy())
        return finish(
            "penalty_floor" if gamma_floor <= gamma_end else "exhausted"
        )

    raise NumericalError(
        f"path did not terminate within {max_iter} iterations"
    )


def entries_until(path: SolutionPath, T: int) -> list[list[int]]:
    """Real-variable candidate sets before each of the first T decoy entries.

    Element t-1 lists, in first-entry order, the real columns that entered
    strictly before the t-th distinct decoy column.  Raises when the path
    has fewer than T decoy entries.
    """
    if path.n_real is None:
        raise ConfigError("path has no real/dummy boundary (n_real unset)")
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    n_real = path.n_real
    seen_real: list[int] = []
    seen_real_set: set[int] = set()
    seen_dummy: set[int] = set()
    out: list[list[int]] = []
    for ev in path.events:
        if ev.kind != "enter":
            continue
        if ev.variable >= n_real:
            if ev.variable not in seen_dummy:
                seen_dummy.add(ev.variable)
                out.append(list(seen_real))
                if len(out) == T:
                    return out
        elif ev.variable not in seen_real_set:
            seen_real_set.add(ev.variable)
            seen_real.append(ev.variable)
    raise InputError(
        f"path contains {len(out)} decoy entries, {T} requested"
    )


def write_path_csv(path: SolutionPath, fileobj) -> None:
    """Write events as CSV rows (step, event, variable, penalty, coefficient).

    The coefficient column reports the event variable's coefficient at the
    next knot, i.e. after the segment following the event.
    """
    writer = csv.writer(fileobj, lineterminator="\n")
    writer.writerow(["step", "event", "variable", "penalty", "coefficient"])
    n_knots = path.knots.size
    for ev in path.events:
        nxt = min(ev.step + 1, n_knots - 1)
        coef = float(path.betas[nxt][ev.variable]) if n_knots else 0.0
        writer.writerow(
            [
                ev.step,
                ev.kind,
                ev.variable,
                repr(float(ev.penalty)),
                repr(coef),
            ]
        )
