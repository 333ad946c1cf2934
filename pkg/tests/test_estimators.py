"""Point estimates, the sparse regression adjustment, and stopping rules."""
import math

import numpy as np
import pytest

from overtake_eval.estimators import (
    EmptyGroup,
    EmptyInput,
    Estimate,
    GroupedRegression,
    ZeroEstimate,
    atscv_adjusted,
    build_group,
    control_row,
    convergence_series,
    estimate_atscv,
    estimate_nade,
    estimate_nde,
    fit_atscv,
    mlr_fit,
    rhw,
)
from overtake_eval.estimators import tests_to_threshold as time_to_threshold
from overtake_eval.sampling import TestRecord

from conftest import make_moment, make_nade_record, random_nade_records, random_nde_records

Z90 = 1.6448536269514722  # two-sided 90% normal quantile


def nde_rec(i, acc):
    return TestRecord(index=i, seed=i, env="nde", accident=acc, weight=1.0)


# ---------------------------------------------------------------------------
# design matrix construction
# ---------------------------------------------------------------------------

def test_control_row_is_kron_of_density_ratios():
    m1 = make_moment(p=0.2, q_alpha=0.5, q=(0.4, 0.5, 0.6))
    m2 = make_moment(p=0.1, q_alpha=0.25, q=(0.1, 0.25, 0.4))
    r = make_nade_record(0, 1, [m1, m2])
    got = control_row(r)
    # one factor per controlled moment, last panel member dropped, first
    # moment as the slow index
    want = np.kron([0.4 / 0.5, 0.5 / 0.5], [0.1 / 0.25, 0.25 / 0.25])
    assert got.shape == (4,)
    np.testing.assert_allclose(got, want, rtol=0, atol=0)


def test_control_row_empty_log():
    r = nde_rec(0, 1)
    row = control_row(TestRecord(index=0, seed=0, env="nade", accident=1,
                                 weight=1.0))
    assert row.shape == (1,)
    assert row[0] == 1.0


def test_build_group_selects_and_centers():
    rng = np.random.default_rng(6174)
    recs = random_nade_records(rng, 120, max_l=3)
    for l in (1, 2, 3):
        g = build_group(recs, l)
        members = [r for r in recs if r.control_steps == l]
        assert g.count == len(members)
        assert g.exposures == l
        assert g.Z.shape == (len(members), 2 ** l)
        # columns are centered and the removed means are kept
        np.testing.assert_allclose(g.Z.mean(axis=0), 0.0, atol=1e-10)
        raw = np.vstack([control_row(r) for r in members])
        np.testing.assert_allclose(g.column_means, raw.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(g.Z, raw - raw.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(g.Y, [r.weight * r.accident for r in members],
                                   atol=0, rtol=0)


def test_build_group_zero_exposures_has_no_regressors():
    g = build_group([nde_rec(0, 1), nde_rec(1, 0)], 0)
    assert g.Z.shape == (2, 0)
    assert g.column_means.shape == (0,)


def test_group_column_count_is_polynomial_not_exponential_in_panel():
    # 3 models, 4 controlled moments: (3-1)^4 = 16 columns.
    rng = np.random.default_rng(1)
    recs = random_nade_records(rng, 40, max_l=4)
    four = [r for r in recs if r.control_steps == 4]
    assert len(four) >= 2
    g = build_group(recs, 4)
    assert g.Z.shape == (len(four), 16)


# ---------------------------------------------------------------------------
# per-group regression
# ---------------------------------------------------------------------------

def test_mlr_fit_noiseless_affine_recovery():
    # Y depends affinely on the first density ratio only; the second ratio
    # is constant so its centered column vanishes and the minimum-norm
    # solution must leave it at zero.
    recs = []
    a, b = 0.004, 0.002
    qa = 0.6
    rng = np.random.default_rng(55)
    for i in range(40):
        q1 = rng.uniform(0.4, 0.9)
        q = (q1, 0.5, 3 * qa - 0.5 - q1)  # constant mean, so the second
        r1 = q1 / qa                      # ratio column is constant too
        p = qa * (a + b * r1)  # makes w*acc = a + b*r1 exactly
        recs.append(make_nade_record(i, 1, [make_moment(p, qa, q)]))
    g = build_group(recs, 1)
    beta, eta = mlr_fit(g)
    y = np.array([r.weight for r in recs])
    assert eta == pytest.approx(float(np.mean(y)), abs=1e-15)
    assert beta[0] == pytest.approx(b, abs=1e-10)
    assert beta[1] == pytest.approx(0.0, abs=1e-10)
    # in-sample residuals vanish up to float noise
    np.testing.assert_allclose(g.Y - eta - g.Z @ beta, 0.0, atol=1e-12)


def test_mlr_fit_constant_response_gives_zero_slope():
    m = make_moment(0.3, 0.6, (0.5, 0.6, 0.7))
    recs = [make_nade_record(i, 1, [m]) for i in range(12)]
    beta, eta = mlr_fit(build_group(recs, 1))
    assert eta == recs[0].weight
    np.testing.assert_allclose(beta, 0.0, atol=0)


def test_mlr_fit_underdetermined_group_falls_back_to_mean():
    rng = np.random.default_rng(9)
    # width 2 regressors need at least 4 rows to fit; 3 rows must not
    recs = random_nade_records(rng, 200, max_l=1)
    ones = [r for r in recs if r.control_steps == 1]
    small = ones[:3]
    beta, eta = mlr_fit(build_group(small, 1))
    np.testing.assert_allclose(beta, 0.0, atol=0)
    assert eta == pytest.approx(np.mean([r.weight * r.accident for r in small]),
                                abs=1e-15)
    larger = ones[:4]
    beta4, _ = mlr_fit(build_group(larger, 1))
    assert beta4.shape == (2,)


def test_mlr_fit_rejects_empty_group():
    with pytest.raises(EmptyGroup):
        mlr_fit(build_group([], 1))


def test_fit_atscv_group_layout():
    rng = np.random.default_rng(21)
    recs = random_nade_records(rng, 150, max_l=6)
    groups = fit_atscv(recs, max_control_steps=4)
    labels = [g.exposures for g in groups]
    assert labels == sorted(labels)
    assert max(labels) == 5  # overflow bucket
    overflow = groups[-1]
    assert overflow.Z.shape[1] == 0  # mean-only, no regressors
    assert overflow.count == sum(r.control_steps > 4 for r in recs)


# ---------------------------------------------------------------------------
# point estimates
# ---------------------------------------------------------------------------

def test_estimate_nde_hand_value():
    e = estimate_nde([nde_rec(0, 1), nde_rec(1, 0), nde_rec(2, 0), nde_rec(3, 0)])
    assert e.method == "nde"
    assert e.mu == 0.25
    assert e.variance == 0.0625  # s^2 = 1/4, variance of the mean = s^2/4
    assert e.n == 4
    assert e.per_group == ((0, 0.25),)


def test_estimate_nade_hand_value():
    m = make_moment(0.25, 0.5, (0.4, 0.5, 0.6))
    recs = [make_nade_record(0, 1, [m]),        # weight 0.5, hit
            make_nade_record(1, 0, [m, m])]     # weight 0.25, miss
    e = estimate_nade(recs)
    assert e.mu == 0.25  # mean of (0.5, 0.0)
    assert e.n == 2


def test_estimate_nade_with_unit_weights_matches_nde_mean():
    rng = np.random.default_rng(17)
    flags = rng.integers(0, 2, size=50)
    nade = [TestRecord(index=i, seed=i, env="nade", accident=int(f), weight=1.0)
            for i, f in enumerate(flags)]
    assert estimate_nade(nade).mu == float(np.mean(flags))


def test_estimators_reject_wrong_environment():
    with pytest.raises(ValueError, match="nade"):
        estimate_nade([nde_rec(0, 1)])
    with pytest.raises(ValueError, match="nde"):
        estimate_nde([TestRecord(index=0, seed=0, env="nade", accident=1,
                                 weight=1.0)])


def test_estimators_reject_empty_input():
    for fn in (estimate_nde, estimate_nade, estimate_atscv):
        with pytest.raises(EmptyInput):
            fn([])


def test_atscv_point_identical_to_nade_point():
    # The regression columns are centered, so the grouped adjustment moves
    # variance only: the point estimate must match exactly, both with the
    # fitted slopes and with slopes forced to zero.
    rng = np.random.default_rng(404)
    for trial in range(20):
        recs = random_nade_records(rng, 200, max_l=5)
        nade = estimate_nade(recs)
        forced = estimate_atscv(recs, force_zero_beta=True)
        fitted = estimate_atscv(recs)
        assert forced.mu == nade.mu  # bit-for-bit
        assert fitted.mu == nade.mu  # bit-for-bit
        assert fitted.n == nade.n == len(recs)


def test_atscv_group_contributions_sum_to_point():
    rng = np.random.default_rng(808)
    recs = random_nade_records(rng, 300, max_l=5)
    e = estimate_atscv(recs)
    assert sum(c for _, c in e.per_group) == pytest.approx(e.mu, abs=1e-12)


def test_atscv_overflow_bucket_mean_only():
    m = make_moment(0.3, 0.6, (0.5, 0.6, 0.7))
    deep = [make_nade_record(i, int(i < 2), [m] * (3 + i)) for i in range(5)]
    shallow = [make_nade_record(10 + i, 1, [m]) for i in range(4)]
    e = estimate_atscv(deep + shallow, max_control_steps=2)
    labels = dict(e.per_group)
    assert set(labels) == {1, 3}  # shallow group and one overflow bucket
    y_deep = [r.weight * r.accident for r in deep]
    assert labels[3] == pytest.approx(len(deep) * np.mean(y_deep) / 9.0,
                                      abs=1e-15)


def test_atscv_variance_never_exceeds_nade_within_groups():
    rng = np.random.default_rng(112)
    for trial in range(10):
        recs = random_nade_records(rng, 250, max_l=4)
        groups = fit_atscv(recs)
        for g in groups:
            if g.count < 2:
                continue
            var_y = float(np.var(g.Y))
            var_adj = float(np.var(g.adjusted()))
            assert var_adj <= var_y + 1e-12


def test_atscv_adjusted_points_mean_matches_estimate():
    rng = np.random.default_rng(33)
    recs = random_nade_records(rng, 200, max_l=4)
    groups = fit_atscv(recs)
    adj = atscv_adjusted(recs, groups)
    assert adj.shape == (len(recs),)
    e = estimate_atscv(recs)
    assert float(np.mean(adj)) == pytest.approx(e.mu, abs=1e-12)


def test_atscv_beats_nade_variance_on_structured_data(scen):
    # On real sampled records the adjustment should actually help, not
    # just never hurt.
    from overtake_eval.criticality import CriticalityEvaluator
    from overtake_eval.sampling import sample_nade_batch
    recs = sample_nade_batch(321, scen, 3000,
                             evaluator=CriticalityEvaluator(scen))
    assert estimate_atscv(recs).variance < 0.5 * estimate_nade(recs).variance


# ---------------------------------------------------------------------------
# interval half-width and stopping rule
# ---------------------------------------------------------------------------

def test_rhw_hand_values():
    e = Estimate(method="nde", mu=0.01, variance=1e-6, n=100, per_group=())
    assert rhw(e, gamma=0.1) == pytest.approx(Z90 * 0.1, rel=1e-12)
    assert rhw(Estimate(method="nde", mu=0.5, variance=0.0, n=9, per_group=()),
               gamma=0.1) == 0.0


def test_rhw_rejects_nonpositive_mean():
    with pytest.raises(ZeroEstimate):
        rhw(Estimate(method="nde", mu=0.0, variance=1e-6, n=9, per_group=()))
    with pytest.raises(ZeroEstimate):
        rhw(Estimate(method="nade", mu=-0.1, variance=1e-6, n=9, per_group=()))


def test_convergence_series_shapes_and_tail():
    rng = np.random.default_rng(2020)
    nde = random_nde_records(rng, 400)
    s = convergence_series(nde, 0.1, "nde")
    assert s.shape == (400, 3)
    np.testing.assert_array_equal(s[:, 0], np.arange(1, 401))
    e = estimate_nde(nde)
    assert s[-1, 1] == e.mu
    assert s[-1, 2] == pytest.approx(rhw(e, 0.1), rel=1e-9)
    assert convergence_series([], 0.1, "nde").shape == (0, 3)


def test_convergence_series_tail_matches_estimates_all_methods():
    rng = np.random.default_rng(2021)
    recs = random_nade_records(rng, 300, max_l=3)
    for method, estimator in [("nade", estimate_nade), ("atscv", estimate_atscv)]:
        s = convergence_series(recs, 0.1, method)
        e = estimator(recs)
        assert s[-1, 1] == pytest.approx(e.mu, rel=1e-12)
        assert s[-1, 2] == pytest.approx(rhw(e, 0.1), rel=1e-9)


def test_convergence_series_infinite_rhw_while_mean_nonpositive():
    recs = [nde_rec(0, 0), nde_rec(1, 0), nde_rec(2, 1), nde_rec(3, 1)]
    s = convergence_series(recs, 0.1, "nde")
    assert math.isinf(s[0, 2]) and math.isinf(s[1, 2])
    assert math.isfinite(s[3, 2])


def test_tests_to_threshold_agrees_with_published_series():
    # The early-stopping scanner must land exactly where a rolling window
    # over the emitted convergence table lands, for every method.
    def reference(series, threshold, window):
        run = 0
        for i in range(series.shape[0]):
            run = run + 1 if series[i, 2] <= threshold else 0
            if run == window:
                return int(series[i - window + 1, 0])
        return None

    rng = np.random.default_rng(777)
    recs = random_nade_records(rng, 600, max_l=3, p_accident=0.5)
    nde = random_nde_records(rng, 600, p_accident=0.5)
    for method, data in [("nde", nde), ("nade", recs), ("atscv", recs)]:
        series = convergence_series(data, 0.1, method)
        for threshold in (0.05, 0.12, 0.3, 1e-9):
            for window in (1, 5, 50):
                got = time_to_threshold(data, threshold, 0.1, method,
                                         confirm_window=window)
                assert got == reference(series, threshold, window), \
                    (method, threshold, window)


def test_tests_to_threshold_degenerate_stream():
    # A constant positive response never has sampling error: one test is
    # already enough at any threshold.
    recs = [nde_rec(i, 1) for i in range(60)]
    assert time_to_threshold(recs, 0.1, method="nde") == 1


def test_tests_to_threshold_not_reached_and_validation():
    recs = [nde_rec(i, i % 2) for i in range(80)]
    assert time_to_threshold(recs, 1e-9, method="nde") is None
    assert time_to_threshold([], 0.1, method="nde") is None
    with pytest.raises(ValueError):
        time_to_threshold(recs, 0.0, method="nde")
