import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
import statsmodels.api as sm
from hypothesis import given, settings
from hypothesis import strategies as st

from hfl.errors import (
    ColumnMismatch,
    ConstantColumn,
    EmptyInput,
    NonPositiveBase,
    NonPositiveTarget,
    SingularDesign,
    UnknownVariable,
)
from hfl.stats import (
    FeatureFrame,
    TargetVector,
    VariableSpec,
    betainc_reg,
    build_frame,
    ccdf,
    correlation_matrix,
    effect_size_pct,
    ols_fit,
    paired_t_test,
    percent_reduction,
    predict,
    t_two_sided_p,
    vif,
    zstandardize,
)


def _random_fit(rng, n=40, p=4):
    X = rng.normal(size=(n, p))
    y = X @ rng.normal(size=p) + rng.normal(size=n)
    frame = FeatureFrame([f"x{j}" for j in range(p)], X, ["continuous"] * p)
    return frame, TargetVector(y, "raw", "y"), X, y


# --- special functions -------------------------------------------------------

@given(st.floats(0.5, 40), st.floats(0.5, 40), st.floats(0.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_regularized_incomplete_beta_matches_scipy(a, b, x):
    ours = betainc_reg(a, b, x)
    ref = scipy.special.betainc(a, b, x)
    assert ours == pytest.approx(ref, abs=1e-12, rel=1e-10)


@given(st.floats(-30, 30), st.integers(1, 200))
@settings(max_examples=200, deadline=None)
def test_t_two_sided_p_matches_scipy(t, df):
    ours = t_two_sided_p(t, df)
    ref = 2.0 * scipy.stats.t.sf(abs(t), df)
    assert ours == pytest.approx(ref, abs=1e-8, rel=1e-8)


# --- OLS ---------------------------------------------------------------------

def test_ols_matches_statsmodels(rng):
    for _ in range(20):
        frame, target, X, y = _random_fit(rng)
        fit = ols_fit(frame, target)
        ref = sm.OLS(y, sm.add_constant(X)).fit()
        np.testing.assert_allclose(
            np.r_[fit.intercept, fit.coef], ref.params, rtol=1e-9)
        np.testing.assert_allclose(fit.se, ref.bse, rtol=1e-9)
        np.testing.assert_allclose(fit.pvalue, ref.pvalues, rtol=1e-8, atol=1e-12)
        assert fit.r2 == pytest.approx(ref.rsquared, rel=1e-10)
        assert fit.adj_r2 == pytest.approx(ref.rsquared_adj, rel=1e-10)
        np.testing.assert_allclose(fit.residuals, ref.resid, atol=1e-10)


def test_aic_differences_match_statsmodels(rng):
    # our Gaussian AIC differs from the statsmodels one only by an additive
    # constant in n, so model comparisons at fixed n must agree exactly
    frame, target, X, y = _random_fit(rng, n=60, p=5)
    small = FeatureFrame(frame.names[:3], frame.values[:, :3], frame.kinds[:3])
    fit_full = ols_fit(frame, target)
    fit_small = ols_fit(small, target)
    ref_full = sm.OLS(y, sm.add_constant(X)).fit()
    ref_small = sm.OLS(y, sm.add_constant(X[:, :3])).fit()
    ours = fit_full.aic - fit_small.aic
    theirs = ref_full.aic - ref_small.aic
    assert ours == pytest.approx(theirs, abs=1e-8)


def test_singular_design_names_offending_columns(rng):
    X = rng.normal(size=(30, 3))
    X = np.column_stack([X, X[:, 0] * 2.0])
    frame = FeatureFrame(["a", "b", "c", "a_copy"], X, ["continuous"] * 4)
    with pytest.raises(SingularDesign) as exc:
        ols_fit(frame, TargetVector(rng.normal(size=30), "raw", "y"))
    assert any(n in str(exc.value) for n in ("a", "a_copy"))


def test_underdetermined_raises(rng):
    X = rng.normal(size=(4, 6))
    frame = FeatureFrame([f"x{j}" for j in range(6)], X, ["continuous"] * 6)
    with pytest.raises(SingularDesign):
        ols_fit(frame, TargetVector(rng.normal(size=4), "raw", "y"))


def test_predict_equals_fitted_and_checks_columns(rng):
    frame, target, _, _ = _random_fit(rng)
    fit = ols_fit(frame, target)
    np.testing.assert_allclose(predict(fit, frame), fit.fitted, atol=1e-12)
    wrong = FeatureFrame(frame.names[:-1], frame.values[:, :-1], frame.kinds[:-1])
    with pytest.raises(ColumnMismatch):
        predict(fit, wrong)


def test_vif_matches_statsmodels(rng):
    from statsmodels.stats.outliers_influence import variance_inflation_factor
    X = rng.normal(size=(80, 4))
    X[:, 3] = 0.8 * X[:, 0] + 0.2 * rng.normal(size=80)
    frame = FeatureFrame([f"x{j}" for j in range(4)], X, ["continuous"] * 4)
    ours = vif(frame)
    Xc = sm.add_constant(X)
    for j, name in enumerate(frame.names):
        ref = variance_inflation_factor(Xc, j + 1)
        assert ours[name] == pytest.approx(ref, rel=1e-8)


# --- frame construction ------------------------------------------------------

def test_build_frame_standardizes_and_drops_reference(small_market):
    _, listings, _, _, _ = small_market
    frame, target = build_frame(listings, VariableSpec(target="rpms"))
    assert frame.names[0] == "log_area"
    col = frame.column("log_area")
    assert abs(col.mean()) < 1e-9 and col.std() == pytest.approx(1.0, abs=1e-9)
    districts_present = sorted({rec.district for rec in listings})
    dummy_names = [n for n in frame.names if n.startswith("district_")]
    assert f"district_{districts_present[0]}" not in dummy_names
    assert len(dummy_names) == len(districts_present) - 1
    # log transform of the area column
    raw = frame.raw_column("log_area")
    assert raw[0] == pytest.approx(math.log(listings[0].area), rel=1e-12)
    # target is the log of the requested variable
    assert target.values[0] == pytest.approx(math.log(listings[0].rpms), rel=1e-12)
    assert target.label == "rpms"


def test_build_frame_rejects_bad_target(small_market):
    _, listings, _, _, _ = small_market
    with pytest.raises(UnknownVariable):
        build_frame(listings, VariableSpec(target="price"))


def test_build_frame_nonpositive_target_names_listing(small_market):
    import dataclasses
    _, listings, _, _, _ = small_market
    broken = list(listings)
    broken[3] = dataclasses.replace(broken[3], rent=0.0, rpms=0.0)
    with pytest.raises(NonPositiveTarget) as exc:
        build_frame(broken, VariableSpec(target="rent"))
    assert str(broken[3].id) in str(exc.value)


def test_zstandardize_roundtrip(rng):
    x = rng.normal(3.0, 2.5, size=200)
    z, (mean, std) = zstandardize(x)
    np.testing.assert_allclose(z * std + mean, x, atol=1e-12)
    assert abs(z.mean()) < 1e-12


# --- descriptive statistics --------------------------------------------------

def test_correlation_matrix_matches_numpy(rng):
    X = rng.normal(size=(50, 3))
    frame = FeatureFrame(["a", "b", "c"], X, ["continuous"] * 3)
    mat = correlation_matrix(frame)
    np.testing.assert_allclose(mat, np.corrcoef(X, rowvar=False), atol=1e-12)
    assert mat.shape == (3, 3)


def test_correlation_matrix_rejects_constant(rng):
    X = rng.normal(size=(20, 2))
    X[:, 1] = 5.0
    frame = FeatureFrame(["a", "b"], X, ["continuous"] * 2)
    with pytest.raises(ConstantColumn):
        correlation_matrix(frame)


def test_ccdf_properties(rng):
    x = rng.normal(size=500)
    pts = ccdf(x)
    vals = [v for v, _ in pts]
    probs = [p for _, p in pts]
    assert vals == sorted(vals)
    assert all(probs[i] > probs[i + 1] for i in range(len(probs) - 1))
    assert probs[-1] == 0.0
    assert probs[0] == pytest.approx(1.0 - 1.0 / len(x))
    with pytest.raises(EmptyInput):
        ccdf([])


# --- test statistics and derived figures -------------------------------------

def test_paired_t_matches_scipy(rng):
    a = rng.normal(size=30)
    b = a + rng.normal(0.2, 0.5, size=30)
    res = paired_t_test(a, b)
    ref = scipy.stats.ttest_rel(a, b)
    assert res.t == pytest.approx(ref.statistic, rel=1e-10)
    assert res.p == pytest.approx(ref.pvalue, rel=1e-9)
    assert res.df == 29


def test_paired_t_degenerate_cases():
    a = np.ones(5)
    res = paired_t_test(a, a)
    assert res.t == 0.0 and res.p == 1.0
    res = paired_t_test(a + 1.0, a)
    assert math.isinf(res.t) and res.t > 0 and res.p == 0.0 and res.zero_variance


def test_percent_reduction_and_errors():
    assert percent_reduction(0.2, 0.1) == pytest.approx(50.0)
    assert percent_reduction(0.1, 0.2) == pytest.approx(-100.0)
    with pytest.raises(NonPositiveBase):
        percent_reduction(0.0, 0.1)


def test_effect_size_pct():
    assert effect_size_pct(0.0) == pytest.approx(0.0)
    assert effect_size_pct(math.log(1.5)) == pytest.approx(50.0)
    assert effect_size_pct(-math.log(2.0)) == pytest.approx(-50.0)
