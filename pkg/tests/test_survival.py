import numpy as np
import pandas as pd
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from sklearn.linear_model import Lasso
from statsmodels.duration.hazard_regression import PHReg
from statsmodels.regression.linear_model import OLS
from statsmodels.stats.multitest import multipletests

from deltarad.errors import (
    ConfigError,
    ConstantColumnError,
    EmptySampleError,
    NegativeTimeError,
    NoComparablePairsError,
    NoEventsError,
    NonBinaryEventError,
    NoValidCutpointError,
    OutOfRangeError,
    RankDeficientError,
    SingularError,
    TooFewSamplesError,
)
from deltarad.survival import (
    ancova,
    bh_adjust,
    concordance_index,
    cox_fit,
    cutpoint_search,
    km_estimate,
    lasso_cd,
    logrank_groups,
    logrank_test,
    multivariate_cox_with_rfe,
    partial_loglik,
    rfe_lasso_rank,
    split_groups,
    univariate_screen,
)

import oracles


def cohort(seed, n=80, p=2, beta=(0.7, -0.4), ties=False):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    t = rng.exponential(1 / np.exp(X @ np.asarray(beta[:p])))
    c = rng.exponential(3.0, n)
    time = np.minimum(t, c)
    if ties:
        time = np.ceil(time * 4) / 4
    return X, time, (t <= c).astype(int)


# ---------------------------------------------------------------- KM / log-rank


def test_km_hand_case():
    km = km_estimate([1, 2, 2, 3], [1, 0, 1, 1])
    np.testing.assert_allclose(km.at([0.5, 1, 2, 3]), [1.0, 0.75, 0.5, 0.0])


def test_km_small_hand_case():
    km = km_estimate([1, 2, 3], [1, 1, 1])
    np.testing.assert_allclose(km.survival, [1, 2 / 3, 1 / 3, 0])
    assert km.median() == 2.0


def test_km_no_events_is_flat():
    km = km_estimate([4, 5], [0, 0])
    assert km.survival.tolist() == [1.0] and km.median() == float("inf")


def test_km_input_errors():
    with pytest.raises(EmptySampleError):
        km_estimate([], [])
    with pytest.raises(NegativeTimeError):
        km_estimate([-1], [1])
    with pytest.raises(NonBinaryEventError):
        km_estimate([1], [2])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_km_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    t = rng.integers(1, 10, 25).astype(float)
    e = rng.integers(0, 2, 25)
    km = km_estimate(t, e)
    ref = oracles.km_oracle(t.tolist(), e.tolist())
    assert km.time[1:].tolist() == sorted(ref)
    np.testing.assert_allclose(km.survival[1:], [ref[u] for u in sorted(ref)], atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_logrank_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 30
    t = rng.integers(1, 12, n).astype(float)
    e = rng.integers(0, 2, n)
    g = rng.random(n) < 0.5
    assume(e.sum() > 0)
    O, E, V = oracles.logrank_oracle(t.tolist(), e.tolist(), g.tolist())
    r = logrank_groups(t, e, g)
    assert r.observed_a == O
    assert abs(r.expected_a - E) <= 1e-10 and abs(r.variance - V) <= 1e-10


def test_logrank_two_sample_form():
    r = logrank_test([1, 2, 3], [1, 1, 1], [4, 5, 6], [1, 1, 0])
    assert r.observed_a == 3 and r.z > 0 and 0 < r.p_value < 0.1
    with pytest.raises(NoEventsError):
        logrank_test([1], [0], [2], [0])


def test_logrank_identical_groups():
    t = [1, 2, 3, 4]
    r = logrank_test(t, [1, 1, 1, 1], t, [1, 1, 1, 1])
    assert r.chi2 == pytest.approx(0.0) and r.p_value == pytest.approx(1.0)


# ---------------------------------------------------------------- Cox


@pytest.mark.parametrize("ties", [False, True])
def test_cox_matches_statsmodels(ties):
    X, t, e = cohort(11, n=150, ties=ties)
    fit = cox_fit(X, t, e)
    ref = PHReg(t, X, status=e, ties="efron").fit()
    np.testing.assert_allclose(fit.beta, ref.params, atol=1e-6)
    np.testing.assert_allclose(fit.se, ref.bse, rtol=1e-5)
    assert fit.loglik == pytest.approx(ref.llf, abs=1e-8)
    assert fit.converged and not fit.separation


def test_partial_loglik_matches_statsmodels():
    X, t, e = cohort(5, n=60, ties=True)
    b = np.array([0.3, -0.2])
    ref = PHReg(t, X, status=e, ties="efron").loglike(b)
    assert partial_loglik(b, X, t, e) == pytest.approx(ref, abs=1e-9)


def test_cox_separation_flagged():
    x = np.arange(20.0)
    t = 21.0 - x  # higher x always fails first
    fit = cox_fit(x, t, np.ones(20))
    assert fit.separation and not fit.converged
    assert fit.notes


def test_cox_constant_covariate():
    X, t, e = cohort(2, n=50)
    X = np.column_stack([X[:, 0], np.full(50, 3.0)])
    fit = cox_fit(X, t, e, names=["a", "flat"])
    assert fit.beta[1] == 0 and np.isinf(fit.se[1]) and fit.p[1] == 1.0
    assert fit.beta[0] == pytest.approx(cox_fit(X[:, :1], t, e).beta[0])


def test_cox_errors():
    X, t, e = cohort(2, n=30)
    with pytest.raises(NoEventsError):
        cox_fit(X, t, np.zeros(30))
    with pytest.raises(SingularError):
        cox_fit(np.column_stack([X[:, 0], 2 * X[:, 0]]), t, e)


def test_cox_table_and_hr():
    X, t, e = cohort(3)
    tab = cox_fit(pd.DataFrame(X, columns=["a", "b"]), t, e).table()
    assert list(tab.index) == ["a", "b"]
    np.testing.assert_allclose(tab["hr"], np.exp(tab["beta"]))
    assert (tab["ci_low"] < tab["hr"]).all() and (tab["hr"] < tab["ci_high"]).all()


def test_concordance_hand():
    # pairs (0,1) (0,2) (1,2) all comparable; risks rank 2 of 3 correctly
    assert concordance_index([3, 1, 2], [1, 2, 3], [1, 1, 1]) == pytest.approx(2 / 3)
    assert concordance_index([1, 1, 1], [1, 2, 3], [1, 1, 1]) == 0.5
    with pytest.raises(NoComparablePairsError):
        concordance_index([1, 2], [1, 2], [0, 0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_concordance_negation_sums_to_one(seed):
    rng = np.random.default_rng(seed)
    t = rng.permutation(20).astype(float) + 1
    e = rng.integers(0, 2, 20)
    assume(e[t < t.max()].sum() > 0)
    r = rng.normal(size=20)
    assert concordance_index(r, t, e) + concordance_index(-r, t, e) == pytest.approx(1.0)


# ---------------------------------------------------------------- BH / ANCOVA


def test_bh_hand():
    np.testing.assert_allclose(bh_adjust([0.01, 0.04, 0.03, 0.5]), [0.04, 0.04 * 4 / 3, 0.04 * 4 / 3, 0.5])
    assert bh_adjust([]).size == 0
    with pytest.raises(OutOfRangeError):
        bh_adjust([0.1, 1.2])
    with pytest.raises(OutOfRangeError):
        bh_adjust([np.nan])


@settings(max_examples=200)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=40))
def test_bh_matches_definition_and_statsmodels(p):
    got = bh_adjust(p)
    np.testing.assert_allclose(got, oracles.bh_oracle(p), atol=1e-12)
    np.testing.assert_allclose(got, multipletests(p, method="fdr_bh")[1], atol=1e-12)
    assert (got >= np.asarray(p)).all()
    order = np.argsort(p, kind="stable")
    assert (np.diff(got[order]) >= 0).all()


def test_bh_largest_p_not_rounded_below_itself():
    # p * 23 / 23 is one ulp below p for this value
    p = np.linspace(0.01, 0.4, 23)
    p[-1] = 0.42268722119765845
    q = bh_adjust(p)
    assert q[-1] == p[-1]
    assert (q >= p).all()


def test_ancova_matches_ols():
    rng = np.random.default_rng(0)
    n = 40
    g = (np.arange(n) % 2).astype(float)
    c = rng.normal(size=(n, 2))
    y = 1 + 0.8 * g + c @ [0.5, -0.3] + rng.normal(size=n)
    res = ancova(y, g, c)
    full = OLS(y, np.column_stack([np.ones(n), g, c])).fit()
    red = OLS(y, np.column_stack([np.ones(n), c])).fit()
    F, p, _ = full.compare_f_test(red)
    assert res.F == pytest.approx(F, rel=1e-10) and res.p_value == pytest.approx(p, rel=1e-8)
    assert res.group_effect == pytest.approx(full.params[1])
    assert (res.df_num, res.df_den) == (1, n - 4)


def test_ancova_errors():
    with pytest.raises(TooFewSamplesError):
        ancova([1, 2, 3], [1, 1, 1])
    with pytest.raises(RankDeficientError):
        ancova([1, 2, 3, 4], [0, 0, 1, 1], [0, 0, 1, 1])
    with pytest.raises(RankDeficientError):
        ancova([1, 2], [0, 1])


# ---------------------------------------------------------------- lasso / RFE


def test_lasso_matches_sklearn():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 6))
    y = X @ [1.5, 0, -0.8, 0, 0, 0.3] + rng.normal(size=60)
    X = X - X.mean(0)
    y = y - y.mean()
    for lam in (0.01, 0.1, 0.5):
        ref = Lasso(alpha=lam, fit_intercept=False, tol=1e-12, max_iter=100000).fit(X, y).coef_
        np.testing.assert_allclose(lasso_cd(X, y, lam), ref, atol=1e-7)


def test_rfe_ranks_signal_first():
    rng = np.random.default_rng(2)
    X = pd.DataFrame(rng.normal(size=(80, 4)), columns=["noise1", "strong", "weak", "noise2"])
    y = 2 * X["strong"] + 0.7 * X["weak"] + 0.3 * rng.normal(size=80)
    r = rfe_lasso_rank(X, y)
    assert r["strong"] == 1 and r["weak"] == 2
    assert sorted(r) == [1, 2, 3, 4]


def test_rfe_errors():
    X = pd.DataFrame({"a": np.arange(10.0), "b": np.ones(10)})
    with pytest.raises(ConstantColumnError):
        rfe_lasso_rank(X, np.arange(10.0))
    with pytest.raises(TooFewSamplesError):
        rfe_lasso_rank(X[["a"]], np.arange(10.0))


def test_multivariate_with_rfe():
    X, t, e = cohort(4, n=100, p=2)
    rng = np.random.default_rng(4)
    df = pd.DataFrame(np.column_stack([X, rng.normal(size=(100, 3))]), columns=list("abcde"))
    res = multivariate_cox_with_rfe(df, t, e, top_k=3)
    assert len(res.selected) == 3 and res.fit.names == res.selected
    tab = res.table4()
    assert list(tab.columns) == ["covariate", "p_value", "hr_ci95", "importance", "concordance"]
    with pytest.raises(ConfigError):
        multivariate_cox_with_rfe(df, t, e, response="hazard")
    res_t = multivariate_cox_with_rfe(df, t, e, top_k=2, response="time")
    assert len(res_t.selected) == 2


def test_univariate_screen_drops_nonfinite_rows():
    X, t, e = cohort(6, n=60)
    df = pd.DataFrame(X, columns=["a", "b"])
    df.loc[0, "b"] = np.nan
    out = univariate_screen(df, {"OS": (t, e), "NONE": (t, np.zeros(60))})
    assert list(out.columns) == ["feature", "p_OS", "p_bh_OS"]
    p_b = cox_fit(df.loc[1:, ["b"]], t[1:], e[1:]).p[0]
    assert out.loc[1, "p_OS"] == pytest.approx(p_b)
    np.testing.assert_allclose(out["p_bh_OS"], bh_adjust(out["p_OS"]))


# ---------------------------------------------------------------- cutpoint


def threshold_cohort(seed, n=120, cut=0.95, hr=5.0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.8, 1.1, n)
    lam = np.where(x > cut, hr, 1.0) * 0.1
    t = rng.exponential(1 / lam)
    c = rng.exponential(1 / 0.025, n)
    return x, np.minimum(t, c), (t <= c).astype(int)


def test_cutpoint_recovers_threshold():
    x, t, e = threshold_cohort(0)
    r = cutpoint_search(x, t, e, n_perm=500, seed=1)
    assert abs(r.cutoff - 0.95) <= 0.02
    assert r.significant and r.p_value < 0.01
    assert r.z < 0  # low group has fewer events than expected
    assert sum(r.group_sizes) == 120
    assert r.group_sizes[0] == int(np.sum(x <= r.cutoff))


def test_cutpoint_deterministic_and_p_floor():
    x, t, e = threshold_cohort(1)
    a = cutpoint_search(x, t, e, n_perm=200, seed=5)
    assert a == cutpoint_search(x, t, e, n_perm=200, seed=5)
    assert a.p_value >= 1 / 201


def test_cutpoint_null_not_significant_usually():
    hits = 0
    for s in range(20):
        rng = np.random.default_rng(100 + s)
        x = rng.normal(size=60)
        t = rng.exponential(1.0, 60)
        hits += cutpoint_search(x, t, np.ones(60), n_perm=200, seed=s).significant
    assert hits <= 4


def test_cutpoint_statistic_matches_logrank():
    x, t, e = threshold_cohort(2, n=40)
    r = cutpoint_search(x, t, e, n_perm=10)
    lr = logrank_groups(t, e, ~split_groups(x, r.cutoff))
    assert r.statistic == pytest.approx(np.sqrt(lr.chi2), rel=1e-9)
    # no other admissible cutoff beats it
    xs = np.sort(x)
    for k in range(7, 40 - 7):
        if xs[k - 1] < xs[k]:
            c = (xs[k - 1] + xs[k]) / 2
            assert np.sqrt(logrank_groups(t, e, x <= c).chi2) <= r.statistic + 1e-9


def test_cutpoint_errors():
    x, t, e = threshold_cohort(3, n=20)
    with pytest.raises(TooFewSamplesError):
        cutpoint_search(x[:10], t[:10], e[:10])
    with pytest.raises(NoEventsError):
        cutpoint_search(x, t, np.zeros(20))
    with pytest.raises(NoValidCutpointError):
        cutpoint_search(np.ones(20), t, e)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([3.7, 1e-3, 250.0]))
def test_rfe_ranking_ignores_feature_scale(seed, k):
    rng = np.random.default_rng(seed)
    X = pd.DataFrame(rng.uniform(0.5, 1.5, size=(20, 5)), columns=list("abcde"))
    y = (rng.random(20) < 0.5).astype(float)
    assume(0 < y.sum() < 20)
    pd.testing.assert_series_equal(rfe_lasso_rank(X, y), rfe_lasso_rank(X * k, y))
