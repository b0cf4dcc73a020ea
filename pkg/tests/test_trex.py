import json

import numpy as np
import pytest
from scipy.stats import mannwhitneyu

from trexnet import Dataset, RngStream, standardize
from trexnet.augment import PenaltyConfig
from trexnet.errors import ConfigError, InputError
from trexnet.grouping import GroupPartition
from trexnet.simulate import DesignSpec, gen_grouped_gaussian
from trexnet.trex import (
    ExperimentRecord,
    OccurrenceTable,
    TrexConfig,
    calibrate,
    default_voting_grid,
    estimate_fdp,
    fuse,
    generate_dummies,
    null_count_estimate,
    report_payload,
    resolve_model,
    run_experiment,
    run_experiments,
    trex_select,
)

from oracles import binomial_tail_gt


def correlated_groups_spec(snr=3.0):
    """Two active triples at within correlation 0.75 among 94 nulls."""
    return DesignSpec(
        n=150, p=100, family="gaussian",
        blocks=((3, 0.75), (3, 0.75)),
        actives=tuple((j, 1.0) for j in range(3)) + tuple(
            (j, -1.0) for j in range(3, 6)),
        snr=snr,
    )


def null_dataset(seed, n=40, p=20):
    rng = np.random.default_rng(seed)
    return Dataset(X=rng.standard_normal((n, p)), y=rng.standard_normal(n))


def make_record(index, n_real, sets, exhausted=False, entries=()):
    return ExperimentRecord(
        index=index, n_real=n_real, entries=tuple(entries),
        candidate_sets=tuple(frozenset(s) for s in sets),
        attained=len(sets), exhausted=exhausted,
    )


def test_default_voting_grid_covers_attainable_thresholds():
    grid = default_voting_grid(20)
    assert len(grid) == 20
    assert grid[0] == 0.5
    assert grid[-1] == pytest.approx(0.975)
    assert all(0.5 <= v < 1.0 for v in grid)
    assert default_voting_grid(2) == (0.5, 0.75)


def test_generate_dummies_raw_moments():
    rng = RngStream(42, (0,)).generator()
    block = generate_dummies(1000, 1, "normal", rng, standardized=False)
    assert abs(block.mean()) <= 0.1
    assert abs(block.var(ddof=1) - 1.0) <= 0.15


def test_generate_dummies_standardized_columns():
    rng = RngStream(7, (1,)).generator()
    block = generate_dummies(50, 8, "normal", rng)
    assert np.max(np.abs(block.mean(axis=0))) <= 1e-12
    assert np.max(np.abs(np.linalg.norm(block, axis=0) - 1.0)) <= 1e-12


def test_generate_dummies_deterministic_per_stream():
    a = generate_dummies(30, 5, "normal", RngStream(9, (3,)).generator())
    b = generate_dummies(30, 5, "normal", RngStream(9, (3,)).generator())
    assert np.array_equal(a, b)
    c = generate_dummies(30, 5, "normal", RngStream(9, (4,)).generator())
    assert not np.array_equal(a, c)


def test_generate_dummies_uniform_and_rejects_unknown():
    rng = RngStream(1).generator()
    block = generate_dummies(200, 3, "uniform", rng, standardized=False)
    assert np.all(np.abs(block) <= 1.0)
    with pytest.raises(ConfigError):
        generate_dummies(10, 2, "cauchy", RngStream(0).generator())


def test_run_experiment_single_dummy_forces_termination():
    std = standardize(null_dataset(0))
    dummies = generate_dummies(std.X.shape[0], 1, "normal", RngStream(5).generator())
    rec = run_experiment(std.X, std.y, dummies, base="lasso", t_max=1)
    assert rec.attained == 1
    assert not rec.exhausted
    assert rec.entries[-1][0] == "dummy"
    assert all(kind == "real" for kind, _ in rec.entries[:-1])


def test_run_experiment_null_candidate_sets_stay_small():
    sizes = []
    for seed in range(100):
        std = standardize(null_dataset(seed, n=40, p=20))
        rng = RngStream(1000 + seed).generator()
        dummies = generate_dummies(40, 20, "normal", rng)
        rec = run_experiment(std.X, std.y, dummies, base="lasso", t_max=1)
        sizes.append(len(rec.candidates(1)))
    assert np.mean(sizes) < 2.0


def test_run_experiment_actives_lead_on_grouped_signal():
    spec = correlated_groups_spec()
    hits = 0
    runs = 40
    for seed in range(runs):
        data, truth = gen_grouped_gaussian(spec, RngStream(200 + seed).generator())
        std = standardize(data)
        rng = RngStream(900 + seed).generator()
        dummies = generate_dummies(std.X.shape[0], 100, "normal", rng)
        rec = run_experiment(std.X, std.y, dummies, base="lasso", t_max=1)
        if truth <= rec.candidates(1):
            hits += 1
    assert hits > runs / 2


def test_run_experiment_validation():
    std = standardize(null_dataset(3, n=20, p=5))
    dummies = generate_dummies(20, 5, "normal", RngStream(2).generator())
    with pytest.raises(ConfigError):
        run_experiment(std.X, std.y, dummies, base="en", t_max=1)
    with pytest.raises(ConfigError):
        run_experiment(std.X, std.y, dummies, base="ien",
                       penalty=PenaltyConfig(lambda2=1.0), t_max=1)
    part = GroupPartition(groups=((0, 1), (2,)), p=3)
    with pytest.raises(ConfigError):
        run_experiment(std.X, std.y, dummies, base="ien",
                       penalty=PenaltyConfig(lambda2=1.0, partition=part), t_max=1)
    with pytest.raises(InputError):
        run_experiment(std.X, std.y, dummies[:10], base="lasso", t_max=1)


def test_fuse_counts_votes():
    recs = [
        make_record(0, 3, [{0}]),
        make_record(1, 3, [{0, 2}]),
    ]
    occ = fuse(recs, t_max=1)
    assert occ.values.shape == (1, 3)
    assert occ.values[0].tolist() == [1.0, 0.0, 0.5]


def test_fuse_exhausted_record_counts_all_entered_reals():
    rec = make_record(0, 3, [], exhausted=True,
                      entries=[("real", 1), ("real", 2)])
    full = make_record(1, 3, [{1}])
    occ = fuse([rec, full], t_max=1)
    assert occ.values[0].tolist() == [0.0, 1.0, 0.5]


def test_fuse_rejects_inconsistent_columns():
    with pytest.raises(InputError):
        fuse([make_record(0, 3, [{0}]), make_record(1, 4, [{0}])], t_max=1)


def test_occurrence_table_invariants():
    with pytest.raises(InputError):
        OccurrenceTable(values=np.array([[0.5], [0.0]]), n_experiments=2)
    with pytest.raises(InputError):
        OccurrenceTable(values=np.array([[0.3]]), n_experiments=2)
    occ = OccurrenceTable(values=np.array([[0.5, 1.0], [1.0, 1.0]]), n_experiments=2)
    assert occ.selected(0.75, 1).tolist() == [1]
    assert occ.selected(0.75, 2).tolist() == [0, 1]


def binom_occ(p=100, k=20):
    values = np.zeros((1, p))
    values[0, :12] = 1.0
    return OccurrenceTable(values=values, n_experiments=k)


def test_estimate_fdp_matches_binomial_tail_oracle():
    occ = binom_occ()
    cfg = TrexConfig(alpha=0.2, n_experiments=20, n_dummies=100,
                     fdp_estimator="binomial")
    want_null = 100 * binomial_tail_gt(0.5 * 20, 20, 1 / 100)
    got_null = null_count_estimate(0.5, 1, cfg, occ)
    assert got_null == pytest.approx(want_null, rel=1e-12)
    got = estimate_fdp(0.5, 1, cfg, occ)
    assert got == pytest.approx(min(1.0, want_null / 12), rel=1e-12)


def test_estimate_fdp_degenerate_limits():
    occ = binom_occ()
    tiny = TrexConfig(alpha=0.2, n_experiments=20, n_dummies=10**6,
                      fdp_estimator="binomial")
    assert estimate_fdp(0.5, 1, tiny, occ) <= 1e-12

    values = np.zeros((3, 100))
    values[:, :12] = 1.0
    occ3 = OccurrenceTable(values=values, n_experiments=20)
    certain = TrexConfig(alpha=0.2, n_experiments=20, n_dummies=3,
                         fdp_estimator="binomial")
    assert null_count_estimate(0.5, 3, certain, occ3) == pytest.approx(100.0)
    assert estimate_fdp(0.5, 3, certain, occ3) == 1.0


def test_estimate_fdp_rejects_t_above_dummy_count():
    occ = binom_occ()
    cfg = TrexConfig(alpha=0.2, n_dummies=100)
    with pytest.raises(ConfigError):
        estimate_fdp(0.5, 2, cfg, occ)
    values = np.zeros((5, 10))
    occ5 = OccurrenceTable(values=values, n_experiments=20)
    small = TrexConfig(alpha=0.2, n_dummies=2)
    with pytest.raises(ConfigError):
        estimate_fdp(0.5, 3, small, occ5)


@pytest.mark.parametrize("estimator", ["binomial", "expected-count"])
def test_null_count_monotone_in_v_and_t(estimator):
    values = np.zeros((4, 50))
    values[:, :5] = 1.0
    occ = OccurrenceTable(values=values, n_experiments=20)
    cfg = TrexConfig(alpha=0.2, n_dummies=50, fdp_estimator=estimator)
    grid = default_voting_grid(20)
    for t in range(1, 5):
        counts = [null_count_estimate(v, t, cfg, occ) for v in grid]
        assert all(a >= b - 1e-12 for a, b in zip(counts, counts[1:]))
    for v in (0.5, 0.725, 0.975):
        counts = [null_count_estimate(v, t, cfg, occ) for t in range(1, 5)]
        assert all(a <= b + 1e-12 for a, b in zip(counts, counts[1:]))


def test_calibrate_alpha_zero_returns_empty():
    occ = binom_occ()
    for estimator in ("binomial", "expected-count"):
        cfg = TrexConfig(alpha=0.0, n_experiments=20, n_dummies=100,
                         fdp_estimator=estimator)
        cal = calibrate(occ, cfg)
        assert cal.selected == ()
        assert not cal.feasible
        assert cal.v_star == max(cfg.grid())
        assert cal.t_star == 1


def test_calibrate_alpha_one_maximizes_selection():
    values = np.zeros((2, 30))
    values[0, :4] = 1.0
    values[0, 4:8] = 0.6
    values[1, :10] = 1.0
    occ = OccurrenceTable(values=values, n_experiments=10)
    cfg = TrexConfig(alpha=1.0, n_experiments=10, n_dummies=30,
                     fdp_estimator="binomial")
    cal = calibrate(occ, cfg)
    assert cal.feasible
    assert len(cal.selected) == 10
    assert cal.t_star == 2


def test_calibrate_stops_raising_t_once_top_threshold_fails():
    values = np.zeros((5, 10))
    values[:, :2] = 1.0
    occ = OccurrenceTable(values=values, n_experiments=20)
    cfg = TrexConfig(alpha=0.2, n_experiments=20, n_dummies=10,
                     fdp_estimator="expected-count")
    cal = calibrate(occ, cfg)
    # at t=1 and the top threshold the estimate is already 10/(11*0.975*2)>0.2
    assert cal.scanned_t == 1
    assert len(cal.surface) == 1


def test_trex_select_controls_fdr_on_null_data():
    fdps = []
    spec = DesignSpec(n=50, p=30, family="gaussian")
    cfg = TrexConfig(alpha=0.1, seed=0, n_experiments=10)
    for trial in range(100):
        rng = RngStream(31, (trial,)).generator()
        data, _ = gen_grouped_gaussian(spec, rng)
        report = trex_select(data, TrexConfig(alpha=0.1, seed=trial,
                                              n_experiments=10))
        fdps.append(1.0 if report.selected else 0.0)
    assert np.mean(fdps) <= 0.15


def test_trex_select_groups_all_or_none():
    spec = correlated_groups_spec()
    detected = 0
    all_or_none = 0
    for seed in range(50):
        data, _ = gen_grouped_gaussian(spec, RngStream(500 + seed).generator())
        cfg = TrexConfig(alpha=0.2, seed=seed, base="ien", lambda2=1.0,
                         rho_cut=0.2)
        report = trex_select(data, cfg)
        sel = set(report.selected)
        for group in ({0, 1, 2}, {3, 4, 5}):
            if sel & group:
                detected += 1
                if group <= sel:
                    all_or_none += 1
    assert detected >= 25
    assert all_or_none >= 0.8 * detected


def test_trex_select_deterministic_and_worker_independent():
    spec = correlated_groups_spec()
    data, _ = gen_grouped_gaussian(spec, RngStream(77).generator())
    cfg = TrexConfig(alpha=0.2, seed=13, base="en", lambda2=1.0,
                     n_experiments=6)
    r1 = trex_select(data, cfg)
    r2 = trex_select(data, cfg)
    s1 = json.dumps(report_payload(r1), sort_keys=True)
    s2 = json.dumps(report_payload(r2), sort_keys=True)
    assert s1 == s2

    std = standardize(data)
    penalty, _, _ = resolve_model(std, cfg)
    serial = run_experiments(std, cfg, penalty, workers=1)
    parallel = run_experiments(std, cfg, penalty, workers=2)
    assert [r.entries for r in serial] == [r.entries for r in parallel]
    assert [r.candidate_sets for r in serial] == [r.candidate_sets for r in parallel]


def test_selection_size_monotone_in_v_and_t():
    spec = correlated_groups_spec(snr=1.0)
    data, _ = gen_grouped_gaussian(spec, RngStream(21).generator())
    cfg = TrexConfig(alpha=1.0, seed=3, t_max=3)
    std = standardize(data)
    penalty, _, _ = resolve_model(std, cfg)
    occ = fuse(run_experiments(std, cfg, penalty), t_max=3)
    grid = cfg.grid()
    for t in range(1, 4):
        sizes = [occ.selected(v, t).size for v in grid]
        assert all(a >= b for a, b in zip(sizes, sizes[1:]))
    for v in grid:
        sizes = [occ.selected(v, t).size for t in range(1, 4)]
        assert all(a <= b for a, b in zip(sizes, sizes[1:]))


def test_first_entry_ranks_of_dummies_and_reals_are_exchangeable():
    real_ranks = []
    dummy_ranks = []
    for seed in range(200):
        std = standardize(null_dataset(3000 + seed, n=30, p=15))
        rng = RngStream(4000 + seed).generator()
        dummies = generate_dummies(30, 15, "normal", rng)
        rec = run_experiment(std.X, std.y, dummies, base="lasso", t_max=15)
        first_real = next((i for i, (k, _) in enumerate(rec.entries) if k == "real"), None)
        first_dummy = next((i for i, (k, _) in enumerate(rec.entries) if k == "dummy"), None)
        if first_real is None or first_dummy is None:
            continue
        real_ranks.append(first_real + 1)
        dummy_ranks.append(first_dummy + 1)
    assert len(real_ranks) >= 190
    result = mannwhitneyu(real_ranks, dummy_ranks, alternative="two-sided")
    assert result.pvalue > 0.01


def test_trex_config_validation():
    with pytest.raises(ConfigError):
        TrexConfig(alpha=1.5)
    with pytest.raises(ConfigError):
        TrexConfig(alpha=0.1, n_experiments=1)
    with pytest.raises(ConfigError):
        TrexConfig(alpha=0.1, base="ridge")
    with pytest.raises(ConfigError):
        TrexConfig(alpha=0.1, voting_grid=(0.4, 0.6))
    with pytest.raises(ConfigError):
        TrexConfig(alpha=0.1, fdp_estimator="oracle")
    with pytest.raises(ConfigError):
        TrexConfig(alpha=0.1, rho_cut=1.2)
    with pytest.raises(ConfigError):
        TrexConfig(alpha=0.1, lambda2=-3.0)
    with pytest.raises(ConfigError):
        TrexConfig(alpha=0.1, dummy_dist="poisson")


def test_resolve_model_requirements():
    data = null_dataset(9, n=30, p=8)
    std = standardize(data)
    with pytest.raises(ConfigError):
        resolve_model(std, TrexConfig(alpha=0.1, base="ien"))
    penalty, partition, lam2 = resolve_model(
        std, TrexConfig(alpha=0.1, base="ien", rho_cut=0.5, lambda2=2.0))
    assert penalty is not None and penalty.partition is partition
    assert lam2 == 2.0
    _, _, cv_lam2 = resolve_model(std, TrexConfig(alpha=0.1, base="en"))
    assert cv_lam2 > 0
    _, _, again = resolve_model(std, TrexConfig(alpha=0.1, base="en"))
    assert cv_lam2 == again
