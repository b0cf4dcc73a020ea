"""Path-solver tests: frozen small cases, KKT checks, and the
coordinate-descent cross-validation of supports, signs, and coefficients."""

import io

import numpy as np
import pytest

from trexnet import (
    ConfigError,
    Dataset,
    InputError,
    StopRule,
    entries_until,
    lars_path,
    standardize,
)
from trexnet.lars import PathEvent, SolutionPath, write_path_csv

from oracles import cd_lasso

RT2 = np.sqrt(2.0)


def std_instance(seed, n, p, corr_pairs=0, beta=None, noise=0.3):
    """A standardized random regression instance.

    corr_pairs pairs of adjacent columns are made strongly correlated so
    that lasso sign events actually happen.
    """
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    for q in range(corr_pairs):
        a, b = 2 * q, 2 * q + 1
        X[:, b] = 0.95 * X[:, a] + 0.1 * rng.normal(size=n)
    if beta is None:
        beta = np.zeros(p)
        beta[: max(2, p // 3)] = rng.choice([-1.0, 1.0], size=max(2, p // 3)) * rng.uniform(
            0.5, 2.0, size=max(2, p // 3)
        )
    y = X @ beta + noise * rng.normal(size=n)
    return standardize(Dataset(X, y))


def orthonormal_instance(seed, n, t):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, len(t)))
    M -= M.mean(axis=0)
    Q, _ = np.linalg.qr(M)
    y = Q @ np.asarray(t, dtype=float)
    return Q, y


def test_canonical_two_column_path():
    # x0 standardizes to (-1,0,1)/sqrt(2), which is exactly proportional to
    # the centered response, so the path is one entry at penalty sqrt(2)
    # followed by an exact fit
    sd = standardize(
        Dataset(np.array([[1.0, 2.0], [2.0, 1.0], [3.0, 3.0]]), np.array([1.0, 2.0, 3.0]))
    )
    path = lars_path(sd.X, sd.y, mode="lasso")
    first = path.events[0]
    assert first.kind == "enter"
    assert first.variable == 0
    assert abs(first.penalty - RT2) <= 1e-12
    final = path.final_coef()
    assert abs(final[0] - RT2) <= 1e-9
    assert abs(final[1]) <= 1e-9
    assert path.final_penalty() <= 1e-9


def test_orthonormal_design_entry_order_and_soft_threshold():
    t = [3.0, -2.0, 1.0]
    Q, y = orthonormal_instance(21, 12, t)
    for mode in ("lar", "lasso"):
        path = lars_path(Q, y, mode=mode)
        entered = [e.variable for e in path.events if e.kind == "enter"]
        assert entered == [0, 1, 2]
        assert not any(e.kind == "drop" for e in path.events)
        assert np.all(np.abs(path.final_coef() - t) <= 1e-10)
        # orthonormal columns make the path exact soft thresholding
        for lam in (2.5, 1.5, 0.4):
            expect = np.sign(t) * np.maximum(np.abs(t) - lam, 0.0)
            assert np.all(np.abs(path.coef_at(lam) - expect) <= 1e-10)


def test_single_column_path():
    rng = np.random.default_rng(3)
    x = rng.normal(size=20)
    x = (x - x.mean())
    x /= np.linalg.norm(x)
    y = 2.0 * x + 0.01 * rng.normal(size=20)
    y -= y.mean()
    path = lars_path(x[:, None], y)
    c0 = abs(float(x @ y))
    assert path.events[0].variable == 0
    assert abs(path.events[0].penalty - c0) <= 1e-12
    assert abs(path.final_coef()[0] - float(x @ y)) <= 1e-10


def recompute_kkt(X, y, path, tol=1e-8):
    """At every knot: active |corr| agrees with the recorded penalty and no
    inactive column exceeds it."""
    for pen, b in zip(path.knots, path.betas):
        corr = X.T @ (y - X @ b)
        cmax = float(np.max(np.abs(corr)))
        assert cmax <= pen + tol
        nz = np.abs(b) > 1e-12
        if nz.any():
            assert np.all(np.abs(np.abs(corr[nz]) - pen) <= tol)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
@pytest.mark.parametrize("corr_pairs", [0, 2])
def test_kkt_and_monotone_penalties(seed, corr_pairs):
    sd = std_instance(seed, 30, 10, corr_pairs=corr_pairs)
    path = lars_path(sd.X, sd.y, mode="lasso")
    assert abs(path.events[0].penalty - np.max(np.abs(sd.X.T @ sd.y))) <= 1e-12
    pens = np.array([e.penalty for e in path.events])
    assert np.all(np.diff(pens) <= 1e-10)
    assert np.all(np.diff(path.knots) <= 1e-10)
    recompute_kkt(sd.X, sd.y, path)


@pytest.mark.parametrize("seed", [0, 5, 6])
@pytest.mark.parametrize("corr_pairs", [0, 2])
def test_lasso_path_matches_coordinate_descent(seed, corr_pairs):
    """Supports and signs at breakpoints and segment midpoints must agree
    with an independently coded solver run to a certified duality gap."""
    sd = std_instance(seed, 30, 10, corr_pairs=corr_pairs)
    path = lars_path(sd.X, sd.y, mode="lasso")
    scale = path.knots[0]
    checked = 0
    for i in range(len(path.knots)):
        pens = [path.knots[i]]
        if i + 1 < len(path.knots):
            pens.append(0.5 * (path.knots[i] + path.knots[i + 1]))
        for pen in pens:
            if pen <= 1e-6 * scale:
                continue
            ours = path.coef_at(pen)
            ref = cd_lasso(sd.X, sd.y, pen, gap_tol=1e-12)
            ours_sup = set(np.flatnonzero(np.abs(ours) > 1e-7))
            ref_sup = set(np.flatnonzero(np.abs(ref) > 1e-7))
            assert ours_sup == ref_sup, f"support mismatch at penalty {pen}"
            for j in ours_sup:
                assert np.sign(ours[j]) == np.sign(ref[j])
            assert np.all(np.abs(ours - ref) <= 1e-5)
            checked += 1
    assert checked >= 8


def find_drop_instance():
    for seed in range(400):
        sd = std_instance(seed, 25, 6, corr_pairs=2, noise=1.0)
        path = lars_path(sd.X, sd.y, mode="lasso")
        if any(e.kind == "drop" for e in path.events):
            return sd, path
    raise AssertionError("no drop instance found in seed scan")


def test_drop_events_exist_and_cd_still_agrees():
    sd, path = find_drop_instance()
    recompute_kkt(sd.X, sd.y, path)
    drop_step = next(e.step for e in path.events if e.kind == "drop")
    # past the first drop the lar and lasso paths diverge; up to it they agree
    lar = lars_path(sd.X, sd.y, mode="lar")
    for ev, ev_lar in zip(path.events[:drop_step], lar.events[:drop_step]):
        assert (ev.kind, ev.variable) == (ev_lar.kind, ev_lar.variable)
        assert abs(ev.penalty - ev_lar.penalty) <= 1e-10
    assert not any(e.kind == "drop" for e in lar.events)
    # coordinate descent still matches after sign events
    for i in range(drop_step, min(drop_step + 3, len(path.knots) - 1)):
        pen = 0.5 * (path.knots[i] + path.knots[i + 1])
        if pen <= 1e-6 * path.knots[0]:
            continue
        ref = cd_lasso(sd.X, sd.y, pen, gap_tol=1e-12)
        ours = path.coef_at(pen)
        assert set(np.flatnonzero(np.abs(ours) > 1e-7)) == set(
            np.flatnonzero(np.abs(ref) > 1e-7)
        )
        assert np.all(np.abs(ours - ref) <= 1e-5)


def test_lar_equals_lasso_without_sign_changes():
    t = [2.0, -1.5, 0.8, 0.3]
    Q, y = orthonormal_instance(33, 15, t)
    a = lars_path(Q, y, mode="lar")
    b = lars_path(Q, y, mode="lasso")
    assert [(e.kind, e.variable) for e in a.events] == [
        (e.kind, e.variable) for e in b.events
    ]
    assert np.all(np.abs(a.knots - b.knots) <= 1e-12)


def test_full_path_reaches_least_squares():
    sd = std_instance(12, 40, 8)
    path = lars_path(sd.X, sd.y, mode="lasso")
    ols, *_ = np.linalg.lstsq(sd.X, sd.y, rcond=None)
    assert path.final_penalty() <= 1e-8
    assert np.all(np.abs(path.final_coef() - ols) <= 1e-8)


def test_dummy_count_stop_and_entries_until():
    rng = np.random.default_rng(44)
    sd = std_instance(44, 40, 6, beta=np.array([2.0, -1.5, 1.0, 0.0, 0.0, 0.0]))
    D = rng.normal(size=(40, 12))
    D -= D.mean(axis=0)
    D /= np.linalg.norm(D, axis=0)
    Xt = np.hstack([sd.X, D])
    stop = StopRule(dummy_count=2, n_real=6)
    path = lars_path(Xt, sd.y, mode="lasso", stop=stop)
    assert path.stop_reason == "dummy_count"
    dummy_enters = [
        e.variable for e in path.events if e.kind == "enter" and e.variable >= 6
    ]
    assert len(set(dummy_enters)) == 2
    last = path.events[-1]
    assert last.kind == "enter" and last.variable >= 6
    sets = entries_until(path, 2)
    assert len(sets) == 2
    assert set(sets[0]) <= set(sets[1])
    assert all(v < 6 for s in sets for v in s)
    with pytest.raises(InputError, match="2"):
        entries_until(path, 3)


def test_entries_until_deduplicates_reentries():
    events = [
        PathEvent(0, "enter", 0, 5.0),
        PathEvent(1, "enter", 4, 4.0),  # dummy 1
        PathEvent(2, "enter", 1, 3.5),
        PathEvent(3, "drop", 0, 3.0),
        PathEvent(4, "enter", 0, 2.5),  # re-entry, counted once
        PathEvent(5, "enter", 5, 2.0),  # dummy 2
    ]
    path = SolutionPath(
        events=events,
        knots=np.array([5.0, 4.0, 3.5, 3.0, 2.5, 2.0]),
        betas=np.zeros((6, 6)),
        p=6,
        mode="lasso",
        stop_reason="dummy_count",
        n_real=4,
        excluded=(),
    )
    sets = entries_until(path, 2)
    assert sets[0] == [0]
    assert sets[1] == [0, 1]


def test_max_steps_stop():
    sd = std_instance(15, 30, 8)
    path = lars_path(sd.X, sd.y, stop=StopRule(max_steps=3))
    assert path.n_events == 3
    assert path.stop_reason == "max_steps"


def test_penalty_floor_stop():
    sd = std_instance(16, 30, 8)
    full = lars_path(sd.X, sd.y)
    floor = 0.4 * full.knots[0]
    path = lars_path(sd.X, sd.y, stop=StopRule(penalty_floor=floor))
    assert path.stop_reason == "penalty_floor"
    assert abs(path.final_penalty() - floor) <= 1e-10 * full.knots[0]
    assert np.all(np.abs(path.final_coef() - full.coef_at(floor)) <= 1e-9)
    # floor above the first correlation: nothing happens
    high = lars_path(sd.X, sd.y, stop=StopRule(penalty_floor=2 * full.knots[0]))
    assert high.n_events == 0


def test_duplicate_column_excluded():
    rng = np.random.default_rng(17)
    X = rng.normal(size=(25, 5))
    X[:, 3] = X[:, 1]
    y = X[:, 1] * 2.0 + 0.1 * rng.normal(size=25)
    sd = standardize(Dataset(X, y))
    path = lars_path(sd.X, sd.y, mode="lasso")
    assert len(path.excluded) == 1
    assert set(path.excluded) <= {1, 3}
    entered = {e.variable for e in path.events if e.kind == "enter"}
    assert not (set(path.excluded) & entered)
    assert path.final_penalty() <= 1e-8


def test_zero_column_never_enters():
    rng = np.random.default_rng(18)
    X = rng.normal(size=(20, 4))
    X[:, 2] = 7.7  # constant -> zero after standardization
    sd = standardize(Dataset(X, rng.normal(size=20)))
    path = lars_path(sd.X, sd.y, mode="lasso")
    assert 2 not in {e.variable for e in path.events}


def test_deterministic_repeat():
    sd = std_instance(19, 35, 9, corr_pairs=2)
    p1 = lars_path(sd.X, sd.y, mode="lasso")
    p2 = lars_path(sd.X, sd.y, mode="lasso")
    assert [(e.kind, e.variable, e.penalty) for e in p1.events] == [
        (e.kind, e.variable, e.penalty) for e in p2.events
    ]
    assert np.array_equal(p1.knots, p2.knots)
    assert np.array_equal(p1.betas, p2.betas)


def test_standardization_validation():
    rng = np.random.default_rng(20)
    X = rng.normal(size=(15, 3)) + 5.0
    y = rng.normal(size=15)
    with pytest.raises(InputError):
        lars_path(X, y)
    lars_path(X, y - y.mean(), require_standardized=False)  # no raise
    with pytest.raises(ConfigError):
        lars_path(X, y, mode="stagewise")
    with pytest.raises(InputError):
        lars_path(np.full((4, 2), np.nan), np.zeros(4), require_standardized=False)


def test_coef_at_semantics():
    sd = std_instance(22, 30, 6)
    path = lars_path(sd.X, sd.y)
    assert np.all(path.coef_at(path.knots[0] * 2) == 0.0)
    i = min(2, len(path.knots) - 2)
    mid = 0.5 * (path.knots[i] + path.knots[i + 1])
    expect = 0.5 * (path.betas[i] + path.betas[i + 1])
    assert np.all(np.abs(path.coef_at(mid) - expect) <= 1e-12)
    with pytest.raises(ConfigError):
        path.coef_at(-1.0)
    short = lars_path(sd.X, sd.y, stop=StopRule(penalty_floor=0.5 * path.knots[0]))
    with pytest.raises(ConfigError):
        short.coef_at(0.1 * path.knots[0])


def test_path_csv_export():
    sd = std_instance(23, 30, 6)
    path = lars_path(sd.X, sd.y)
    buf = io.StringIO()
    write_path_csv(path, buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "step,event,variable,penalty,coefficient"
    assert len(lines) == path.n_events + 1
    pens = [float(line.split(",")[3]) for line in lines[1:]]
    assert all(a >= b - 1e-12 for a, b in zip(pens, pens[1:]))
