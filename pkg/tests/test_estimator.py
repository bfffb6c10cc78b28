"""One-step estimates, intervals, the adaptive pipeline, and the targeted update."""

import numpy as np
import pytest

from adasmooth.core import scalar_dataset, way_dataset
from adasmooth.dgps import BinaryTreatmentDGP, DoseResponseDGP, ScalarNormalDGP
from adasmooth.errors import (
    AdaSmoothError,
    ConfigError,
    FluctuationDiverged,
    InvalidAlpha,
    InvalidWidthExponent,
    NonBinaryOutcome,
    SplitTooSmall,
    StageError,
)
from adasmooth.estimator import (
    AdaptiveConfig,
    EstimateReport,
    cv_tmle,
    cv_tmle_report,
    estimate_adaptive,
    one_step,
    wald_ci,
)
from adasmooth.families import (
    KIND_COUNTERFACTUAL,
    KIND_DENSITY,
    SmoothedFamily,
    fit_nuisance,
)
from adasmooth.kernels import epanechnikov, gaussian
from adasmooth.selector import AnchorConfig, RateEstimates, SmoothingSelection

ANCHORS = AnchorConfig(delta1=0.2, delta2=0.1, delta3=0.1, gap=0.05)


def make_rates(**overrides):
    fields = dict(
        beta_hat=2.0,
        gamma_hat=0.5,
        nu_hat=-1.5,
        c_bprime=1.0,
        c_sigma=1.0,
        c_sigmaprime=1.0,
        anchors=ANCHORS,
    )
    fields.update(overrides)
    return RateEstimates(**fields)


def make_selection(r_hat=0.2, epsilon=0.05, m=100, c_hat=1.0):
    delta = c_hat * m**-r_hat
    return SmoothingSelection(
        r_hat=r_hat, c_hat=c_hat, epsilon=epsilon, m=m,
        delta_eps=c_hat * m ** (-r_hat - epsilon), delta_zero=delta,
    )


# ------------------------------------------------------------ one_step


def test_one_step_density_collapses_to_heldout_kde():
    rng = np.random.default_rng(0)
    ds = scalar_dataset(rng.normal(size=300))
    fam = SmoothedFamily(kind=KIND_DENSITY, kernel=epanechnikov())
    s12, s3 = np.arange(200), np.arange(200, 300)
    fit = fit_nuisance(fam, ds, s12)
    for delta in (0.2, 0.7):
        kde3 = np.mean(fam.kernel.scaled(ds.o[s3], 0.0, delta))
        np.testing.assert_allclose(one_step(fam, fit, ds, s3, delta), kde3, atol=1e-13)


def test_one_step_zero_gradient_stub_returns_plugin():
    n = 40
    rng = np.random.default_rng(1)
    ds = way_dataset(rng.random((n, 1)), (rng.random(n) < 0.5).astype(float), np.full(n, 0.4))
    fam = SmoothedFamily(
        kind=KIND_COUNTERFACTUAL,
        propensity=lambda a, w: np.full(np.asarray(w).shape[0], 0.6),
        nuisance_options={"regression": lambda a, w: np.full(np.asarray(a).shape, 0.4), "clamp": None},
    )
    fit = fit_nuisance(fam, ds, np.arange(20))
    got = one_step(fam, fit, ds, np.arange(20, 40), delta=0.3)
    np.testing.assert_allclose(got, 0.4, atol=1e-15)


def test_one_step_three_row_hand_case():
    """Same frozen hand oracle as the rate-stage estimator: 0.25 - 0.2 = 0.05."""
    ds = way_dataset(np.array([[0.0], [1.0], [-1.0]]), [1.0, 0.0, 1.0], [1.0, 0.0, 0.0])
    fam = SmoothedFamily(
        kind=KIND_COUNTERFACTUAL,
        propensity=lambda a, w: np.full(np.asarray(w).shape[0], 0.5),
        nuisance_options={
            "regression": lambda a, w: 0.2 + 0.3 * np.asarray(a) + 0.1 * np.asarray(w)[:, 0],
            "clamp": None,
        },
    )
    fit = fit_nuisance(fam, ds, np.array([0]))
    np.testing.assert_allclose(one_step(fam, fit, ds, np.array([1, 2]), 1.0), 0.05, atol=1e-14)


def test_one_step_is_deterministic():
    rng = np.random.default_rng(2)
    ds = scalar_dataset(rng.normal(size=100))
    fam = SmoothedFamily(kind=KIND_DENSITY, kernel=gaussian())
    fit = fit_nuisance(fam, ds, np.arange(60))
    a = one_step(fam, fit, ds, np.arange(60, 100), 0.31)
    b = one_step(fam, fit, ds, np.arange(60, 100), 0.31)
    assert a == b


# ------------------------------------------------------------ wald_ci


def test_wald_ci_hand_case():
    """m=100, c_sigma=1, r+eps=0.25, gamma=0.5 -> exponent 0.375."""
    rates = make_rates(gamma_hat=0.5)
    sel = make_selection(r_hat=0.2, epsilon=0.05, m=100)
    low, high = wald_ci(0.0, rates, sel, alpha=0.05)
    half = (high - low) / 2.0
    np.testing.assert_allclose(half, 1.959964 * 100**-0.375, rtol=1e-6)
    assert abs(half - 0.3486) < 2e-4


def test_wald_ci_quantile_value():
    rates = make_rates(gamma_hat=0.0)
    sel = make_selection(m=4)
    low, high = wald_ci(1.0, rates, sel, alpha=0.05)
    # gamma=0: half-width = q * c_sigma / sqrt(m) = q / 2
    q = (high - low) / 2.0 * np.sqrt(sel.m)
    np.testing.assert_allclose(q, 1.959964, atol=1e-6)
    assert low < 1.0 < high


def test_wald_ci_width_decreases_in_m():
    rates = make_rates()
    widths = []
    for m in (50, 500, 5000):
        low, high = wald_ci(0.0, rates, make_selection(m=m), alpha=0.05)
        widths.append(high - low)
    assert widths[0] > widths[1] > widths[2]


def test_wald_ci_same_width_both_centers():
    rates = make_rates()
    sel = make_selection()
    low1, high1 = wald_ci(0.3, rates, sel, alpha=0.1)
    low2, high2 = wald_ci(-1.7, rates, sel, alpha=0.1, center_at_zero_rate=True)
    np.testing.assert_allclose(high1 - low1, high2 - low2, rtol=1e-15)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.2])
def test_wald_ci_invalid_alpha(alpha):
    with pytest.raises(InvalidAlpha):
        wald_ci(0.0, make_rates(), make_selection(), alpha=alpha)


def test_wald_ci_rejects_nonshrinking_width():
    rates = make_rates(gamma_hat=2.0)
    sel = make_selection(r_hat=0.2, epsilon=0.05)  # exponent 0.5 - 0.25*2 = 0
    with pytest.raises(InvalidWidthExponent):
        wald_ci(0.0, rates, sel)


def test_wald_ci_m_guard():
    with pytest.raises(SplitTooSmall):
        wald_ci(0.0, make_rates(), make_selection(m=1))


# ------------------------------------------------------------ estimate_adaptive


def test_adaptive_density_recovers_standard_normal_at_zero():
    dgp = ScalarNormalDGP()
    data = dgp.sample(20_000, seed=2026)
    fam = dgp.make_family(epanechnikov())
    report = estimate_adaptive(data, fam, AdaptiveConfig(shuffle_seed=7))

    delta, m = report.selection.delta_eps, report.selection.m
    # oracle gradient scale: sd of K_{delta,0}(O) under N(0,1), by quadrature
    u = np.linspace(-1, 1, 40_001)
    k = 0.75 * (1 - u**2) / delta
    phi = dgp.density(u * delta)
    m1 = np.trapezoid(k * phi, u * delta)
    m2 = np.trapezoid(k**2 * phi, u * delta)
    oracle_se = np.sqrt(m2 - m1**2) / np.sqrt(m)
    assert abs(report.point - 0.398942) < 5 * oracle_se

    assert report.ci_low <= report.point <= report.ci_high
    assert report.alt_ci_low <= report.point_at_delta_zero <= report.alt_ci_high
    assert report.selection.delta_eps < report.selection.delta_zero
    assert report.se_scale > 0
    np.testing.assert_allclose(
        report.ci_high - report.ci_low, report.alt_ci_high - report.alt_ci_low, rtol=1e-12
    )


def test_adaptive_is_deterministic_given_seed():
    dgp = ScalarNormalDGP()
    data = dgp.sample(2_000, seed=5)
    fam = dgp.make_family(epanechnikov())
    cfg = AdaptiveConfig(shuffle_seed="rep-3")
    r1 = estimate_adaptive(data, fam, cfg)
    r2 = estimate_adaptive(data, fam, cfg)
    assert r1.point == r2.point
    assert r1.selection.delta_eps == r2.selection.delta_eps


def test_adaptive_tiny_dataset_raises_split_error_with_stage():
    dgp = ScalarNormalDGP()
    data = dgp.sample(5, seed=0)
    fam = dgp.make_family(epanechnikov())
    with pytest.raises(SplitTooSmall) as exc_info:
        estimate_adaptive(data, fam)
    assert exc_info.value.stage == "split"
    assert "[split]" in str(exc_info.value)


def test_adaptive_wraps_foreign_errors_with_stage():
    dgp = BinaryTreatmentDGP()
    data = dgp.sample(400, seed=3)

    def broken_regression(a, w):
        raise RuntimeError("nuisance backend fell over")

    fam = SmoothedFamily(
        kind=KIND_COUNTERFACTUAL,
        propensity=dgp.propensity,
        nuisance_options={"regression": broken_regression},
    )
    with pytest.raises(StageError) as exc_info:
        estimate_adaptive(data, fam, AdaptiveConfig(anchors="default"))
    assert exc_info.value.stage in ("anchors", "rates")
    assert isinstance(exc_info.value.cause, RuntimeError)


def test_adaptive_anchor_fallback_warns(monkeypatch):
    import adasmooth.estimator as est_mod
    from adasmooth.errors import NoLinearRegion

    def always_fails(*args, **kwargs):
        raise NoLinearRegion("synthetic")

    monkeypatch.setattr(est_mod, "scan_anchors", always_fails)
    dgp = ScalarNormalDGP()
    data = dgp.sample(3_000, seed=9)
    fam = dgp.make_family(epanechnikov())
    with pytest.warns(UserWarning, match="falling back"):
        report = estimate_adaptive(data, fam, AdaptiveConfig(shuffle_seed=1))
    assert report.diagnostics.anchor_source == "fallback"
    assert "fallback" in report.diagnostics.summary()


def test_adaptive_dose_response_smoke():
    dgp = DoseResponseDGP()
    data = dgp.sample(4_000, seed=11)
    fam = dgp.make_family(epanechnikov())
    report = estimate_adaptive(data, fam, AdaptiveConfig(shuffle_seed=0))
    assert 0.0 < report.selection.r_hat < 1.0
    assert 0.0 < report.selection.delta_eps < 0.5
    assert 0.0 < report.point < 1.0
    assert np.isfinite(report.se_scale)


def test_adaptive_config_validation():
    with pytest.raises(ConfigError):
        AdaptiveConfig(anchors="bogus")
    with pytest.raises(ConfigError):
        AdaptiveConfig(grid_points=7)


def test_report_invariants_enforced():
    with pytest.raises(AdaSmoothError):
        EstimateReport(
            point=1.0,
            point_at_delta_zero=1.0,
            ci_low=2.0,  # does not contain the point
            ci_high=3.0,
            alt_ci_low=0.0,
            alt_ci_high=2.0,
            alpha=0.05,
            selection=make_selection(),
            rates=make_rates(),
            se_scale=0.1,
            diagnostics=None,
        )


# ------------------------------------------------------------ cv_tmle


def balanced_counterfactual_dataset(n_pairs=10):
    """All rows treated; y alternates 0/1; any constant-qbar score is exactly 0."""
    w = np.repeat(np.linspace(0.1, 0.9, n_pairs), 2).reshape(-1, 1)
    a = np.ones(2 * n_pairs)
    y = np.tile([0.0, 1.0], n_pairs)
    return way_dataset(w, a, y)


def constant_qbar_family(value=0.5, g=0.7):
    return SmoothedFamily(
        kind=KIND_COUNTERFACTUAL,
        propensity=lambda a, w: np.full(np.asarray(w).shape[0], g),
        nuisance_options={
            "regression": lambda a, w: np.full(np.asarray(a).shape, value),
            "clamp": None,
        },
    )


def test_cv_tmle_truth_needs_no_update():
    data = balanced_counterfactual_dataset()
    fam = constant_qbar_family()
    report = cv_tmle_report(data, fam, delta=0.5, folds=5, seed=0)
    assert report.epsilon == 0.0
    assert not report.diverged
    # max(0.7, 0.5) = 0.7 -> ratio 1 -> plug-in = qbar = 0.5 in every fold
    np.testing.assert_allclose(report.point, 0.5, atol=1e-12)
    assert abs(report.pooled_score) < 1e-12


def test_cv_tmle_score_equation_solved_on_real_fit():
    dgp = BinaryTreatmentDGP()
    data = dgp.sample(600, seed=21)
    fam = dgp.make_family()
    report = cv_tmle_report(data, fam, delta=0.3, folds=3, seed=4)
    assert abs(report.pooled_score) <= 1e-6
    assert 0.0 < report.point < 1.0
    assert len(report.fold_points) == 3


def test_cv_tmle_score_equation_dose_response():
    dgp = DoseResponseDGP()
    data = dgp.sample(500, seed=8)
    fam = dgp.make_family(epanechnikov())
    report = cv_tmle_report(data, fam, delta=0.2, folds=2, seed=1)
    assert abs(report.pooled_score) <= 1e-6
    assert 0.0 < report.point < 1.0


def test_cv_tmle_epsilon_sign_tracks_misfit():
    """qbar far below the outcomes -> positive fluctuation."""
    data = balanced_counterfactual_dataset(n_pairs=15)
    low_fam = constant_qbar_family(value=0.2)
    report = cv_tmle_report(data, low_fam, delta=0.5, folds=3, seed=0)
    assert report.epsilon > 0.5
    np.testing.assert_allclose(report.point, 0.5, atol=1e-9)  # MLE refits the mean


def test_cv_tmle_divergence_flagged_and_best_returned():
    n = 30
    w = np.linspace(0.05, 0.95, n).reshape(-1, 1)
    data = way_dataset(w, np.ones(n), np.ones(n))  # every outcome is 1
    fam = constant_qbar_family(value=0.001, g=1.0)
    with pytest.warns(FluctuationDiverged):
        report = cv_tmle_report(data, fam, delta=0.5, folds=3, seed=0)
    assert report.diverged
    assert report.epsilon == 10.0
    assert 0.9 < report.point < 1.0  # pushed almost all the way up


def test_cv_tmle_scalar_value_matches_report():
    data = balanced_counterfactual_dataset()
    fam = constant_qbar_family()
    assert cv_tmle(data, fam, 0.5, folds=5, seed=0) == cv_tmle_report(
        data, fam, 0.5, folds=5, seed=0
    ).point


def test_cv_tmle_preconditions():
    data = balanced_counterfactual_dataset()
    fam = constant_qbar_family()
    density_fam = SmoothedFamily(kind=KIND_DENSITY, kernel=epanechnikov())
    with pytest.raises(ConfigError):
        cv_tmle(scalar_dataset(np.ones(30)), density_fam, 0.5)
    with pytest.raises(ConfigError):
        cv_tmle(data, fam, 0.5, folds=1)
    with pytest.raises(SplitTooSmall):
        cv_tmle(data, fam, 0.5, folds=12)
    y_bad = np.tile([0.5, 1.0], 10)
    bad = way_dataset(np.tile(np.linspace(0.1, 0.9, 10), 2).reshape(-1, 1), np.ones(20), y_bad)
    with pytest.raises(NonBinaryOutcome):
        cv_tmle(bad, fam, 0.5)


def test_cv_tmle_deterministic_given_seed():
    dgp = BinaryTreatmentDGP()
    data = dgp.sample(200, seed=33)
    fam = dgp.make_family()
    assert cv_tmle(data, fam, 0.4, seed="fold-seed") == cv_tmle(data, fam, 0.4, seed="fold-seed")
