"""Final one-step estimates, confidence intervals, and the adaptive pipeline.

``one_step`` turns a nuisance fit plus a held-out sample into the debiased
estimate at a given smoothing level. ``estimate_adaptive`` runs the whole
procedure: split the data three ways, learn the bias/variance rates on the
middle split, select the smoothing level, refit on the first two splits, and
report the one-step estimate with Wald-type intervals whose width shrinks at
the learned (slower-than-root-m) rate. ``cv_tmle`` is the targeted-update
variant for binary outcomes: instead of adding the empirical mean of the
gradient it fluctuates the outcome regression along a logistic submodel until
the pooled validation score is zero, then averages plug-ins across folds.
"""

from __future__ import annotations

import warnings
from contextlib import contextmanager
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit, ndtri

from .core import Dataset, derive_rng, three_way_split
from .errors import (
    AdaSmoothError,
    ConfigError,
    FluctuationDiverged,
    InvalidAlpha,
    InvalidWidthExponent,
    NoLinearRegion,
    NonBinaryOutcome,
    NonPositiveBandwidth,
    SplitTooSmall,
    StageError,
)
from .families import (
    KIND_COUNTERFACTUAL,
    KIND_DOSE_RESPONSE,
    PROPENSITY_FLOOR,
    QBAR_CLAMP,
    FamilyEvaluator,
    NuisanceFit,
    SmoothedFamily,
    default_feasible_max,
    fit_nuisance,
)
from .nuisance import CallableRegression
from .selector import (
    DEFAULT_EPSILON,
    AnchorConfig,
    RateEstimates,
    SmoothingSelection,
    default_anchors,
    estimate_rates,
    scan_anchors,
    select_smoothing,
)

__all__ = [
    "AdaptiveConfig",
    "AdaptiveDiagnostics",
    "EstimateReport",
    "TmleReport",
    "one_step",
    "wald_ci",
    "estimate_adaptive",
    "cv_tmle",
    "cv_tmle_report",
    "STAGES",
]

#: Pipeline stages, in execution order; errors carry the stage they arose in.
STAGES = (
    "split",
    "fit_stage1",
    "anchors",
    "rates",
    "selection",
    "fit_stage2",
    "estimate",
    "interval",
)

_EPS_TRUST_REGION = 10.0  # |fluctuation| beyond this is flagged as diverged


# --------------------------------------------------------------------------- #
# one-step estimate and confidence interval
# --------------------------------------------------------------------------- #


def one_step(
    family: SmoothedFamily,
    fit2: NuisanceFit,
    data: Dataset,
    s3,
    delta: float,
) -> float:
    """Debiased estimate at smoothing level ``delta``.

    Plug-in value at the fitted nuisances plus the mean of the canonical
    gradient over the held-out rows ``s3`` (which must be disjoint from the
    rows ``fit2`` was trained on).
    """
    ev = FamilyEvaluator(family, fit2, data, s3)
    return float(ev.psi(delta) + np.mean(ev.gradient_values(delta)))


def _width_exponent(rates: RateEstimates, selection: SmoothingSelection) -> float:
    return 0.5 - (selection.r_hat + selection.epsilon) * rates.gamma_hat


def wald_ci(
    point: float,
    rates: RateEstimates,
    selection: SmoothingSelection,
    alpha: float = 0.05,
    center_at_zero_rate: bool = False,
) -> tuple[float, float]:
    """Wald interval around ``point`` at level ``1 - alpha``.

    The half-width is ``q_{1-alpha/2} * c_sigma / m**(1/2 - (r+eps)*gamma)``:
    the estimated gradient scale at the selected smoothing level divided by an
    effective root-m rate that accounts for the smoothing level shrinking with
    m. The width is identical whether the interval is centered at the
    undersmoothed estimate (``center_at_zero_rate=False``) or at the
    rate-optimal one (True); the flag only records which center was passed.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidAlpha(f"alpha must lie strictly in (0, 1), got {alpha}")
    if selection.m < 2:
        raise SplitTooSmall(f"interval needs m >= 2 held-out rows, got {selection.m}")
    exponent = _width_exponent(rates, selection)
    if exponent <= 0.0:
        raise InvalidWidthExponent(
            "width exponent 1/2 - (r_hat+epsilon)*gamma_hat = "
            f"{exponent:.6g} is not positive; the interval width would not "
            "shrink with the sample"
        )
    q = float(ndtri(1.0 - alpha / 2.0))
    half = q * rates.c_sigma / selection.m**exponent
    return (point - half, point + half)


# --------------------------------------------------------------------------- #
# the adaptive pipeline
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class AdaptiveConfig:
    """Knobs for :func:`estimate_adaptive`.

    ``anchors`` is ``"auto"`` (scan a log-spaced grid for the most linear
    log-log window, falling back to formula defaults with a warning),
    ``"default"`` (formula defaults only), or an explicit
    :class:`~adasmooth.selector.AnchorConfig`. The scan grid runs from
    ``grid_min`` to ``grid_max`` (defaults: feasible-max/4 to feasible-max)
    with ``grid_points`` points. The default floor is deliberately high:
    the finite-difference bias slope has signal-to-noise roughly
    proportional to delta^(5/2), so grid points far below the feasible
    ceiling contribute only noise windows and degenerate rate estimates.
    ``shuffle_seed=None`` splits the rows in their given order.
    """

    p1: float = 0.25
    p2: float = 0.5
    shuffle_seed: object = None
    epsilon: float = DEFAULT_EPSILON
    alpha: float = 0.05
    anchors: object = "auto"
    grid_min: float | None = None
    grid_max: float | None = None
    grid_points: int = 10
    feasible_max: float | None = None

    def __post_init__(self):
        if not (isinstance(self.anchors, AnchorConfig) or self.anchors in ("auto", "default")):
            raise ConfigError(
                "anchors must be 'auto', 'default', or an AnchorConfig, "
                f"got {self.anchors!r}"
            )
        if self.grid_points < 8:
            raise ConfigError(f"grid_points must be at least 8, got {self.grid_points}")


@dataclass(frozen=True)
class AdaptiveDiagnostics:
    """Flags accumulated along the pipeline (never fatal on their own)."""

    anchor_source: str  # "scan", "default", "explicit", or "fallback"
    bprime_sign_flip: bool = False
    sigmaprime_sign_flip: bool = False
    delta_clamped: bool = False
    nuisance_degenerate: bool = False

    def summary(self) -> str:
        """Compact flag string for report rows, e.g. ``scan`` or ``fallback+sign_flip_bprime``."""
        parts = [self.anchor_source]
        if self.bprime_sign_flip:
            parts.append("sign_flip_bprime")
        if self.sigmaprime_sign_flip:
            parts.append("sign_flip_sigmaprime")
        if self.delta_clamped:
            parts.append("delta_clamped")
        if self.nuisance_degenerate:
            parts.append("degenerate_fit")
        return "+".join(parts)


@dataclass(frozen=True)
class EstimateReport:
    """Everything :func:`estimate_adaptive` learned, in one place.

    ``point`` is the one-step estimate at the slightly-undersmoothed level
    ``selection.delta_eps`` with interval (``ci_low``, ``ci_high``);
    ``point_at_delta_zero`` is the estimate at the rate-optimal level with the
    alternative interval of the same width. ``se_scale`` is the half-width
    without the normal quantile.
    """

    point: float
    point_at_delta_zero: float
    ci_low: float
    ci_high: float
    alt_ci_low: float
    alt_ci_high: float
    alpha: float
    selection: SmoothingSelection
    rates: RateEstimates
    se_scale: float
    diagnostics: AdaptiveDiagnostics

    def __post_init__(self):
        if not self.ci_low <= self.point <= self.ci_high:
            raise AdaSmoothError("interval must contain its center")
        if not self.alt_ci_low <= self.point_at_delta_zero <= self.alt_ci_high:
            raise AdaSmoothError("alternative interval must contain its center")
        if not self.se_scale > 0.0:
            raise AdaSmoothError("se_scale must be positive")


@contextmanager
def _stage(name: str):
    """Label errors with the pipeline stage they arose in.

    Library errors keep their type (so callers can still catch, say,
    SplitTooSmall) and gain a ``.stage`` attribute plus a message prefix;
    anything else is wrapped in :class:`StageError`.
    """
    try:
        yield
    except AdaSmoothError as err:
        if getattr(err, "stage", None) is None:
            err.stage = name
            head = str(err.args[0]) if err.args else ""
            err.args = (f"[{name}] {head}",) + tuple(err.args[1:])
        raise
    except Exception as err:  # noqa: BLE001 - deliberate boundary
        raise StageError(name, err) from err


def _resolve_anchors(
    family: SmoothedFamily,
    fit1: NuisanceFit,
    data: Dataset,
    s2: np.ndarray,
    config: AdaptiveConfig,
    n: int,
    l1: int,
    l2: int,
    feasible_max: float,
) -> tuple[AnchorConfig, str]:
    if isinstance(config.anchors, AnchorConfig):
        return config.anchors, "explicit"
    if config.anchors == "default":
        return default_anchors(n, l1, l2, feasible_max), "default"
    lo = config.grid_min if config.grid_min is not None else feasible_max / 4.0
    hi = config.grid_max if config.grid_max is not None else feasible_max
    grid = np.geomspace(lo, hi, config.grid_points)
    try:
        return scan_anchors(family, fit1, data, s2, grid), "scan"
    except NoLinearRegion:
        warnings.warn(
            "no linear window on the anchor diagnostic grid; "
            "falling back to formula-default anchors",
            UserWarning,
            stacklevel=3,
        )
        return default_anchors(n, l1, l2, feasible_max), "fallback"


def estimate_adaptive(
    data: Dataset, family: SmoothedFamily, config: AdaptiveConfig | None = None
) -> EstimateReport:
    """Run the full adaptive procedure and return a complete report.

    Stages (errors are labeled with the stage they arose in): split the rows
    three ways; fit nuisances on the first split; place anchor smoothing
    levels; estimate bias/variance rates on the second split; select the
    smoothing level for the third split's size; refit nuisances on the first
    two splits together; evaluate the one-step estimate at both selected
    levels; build both intervals. Deterministic given ``config.shuffle_seed``.
    """
    config = config or AdaptiveConfig()
    with _stage("split"):
        plan = three_way_split(data.n, config.p1, config.p2, config.shuffle_seed)
        s1, s2, s3, s12 = plan.s1, plan.s2, plan.s3, plan.s12
        l1, l2 = s1.size, s1.size + s2.size
    with _stage("fit_stage1"):
        fit1 = fit_nuisance(family, data, s1)
        feasible_max = (
            config.feasible_max
            if config.feasible_max is not None
            else default_feasible_max(family, data)
        )
    with _stage("anchors"):
        anchors, anchor_source = _resolve_anchors(
            family, fit1, data, s2, config, data.n, l1, l2, feasible_max
        )
    with _stage("rates"):
        rates = estimate_rates(family, fit1, data, s2, anchors)
    with _stage("selection"):
        selection = select_smoothing(
            rates, m=s3.size, epsilon=config.epsilon, feasible_max=feasible_max
        )
    with _stage("fit_stage2"):
        fit12 = fit_nuisance(family, data, s12)
    with _stage("estimate"):
        ev = FamilyEvaluator(family, fit12, data, s3)
        point = float(ev.psi(selection.delta_eps) + np.mean(ev.gradient_values(selection.delta_eps)))
        point_zero = float(
            ev.psi(selection.delta_zero) + np.mean(ev.gradient_values(selection.delta_zero))
        )
    with _stage("interval"):
        ci_low, ci_high = wald_ci(point, rates, selection, config.alpha)
        alt_low, alt_high = wald_ci(
            point_zero, rates, selection, config.alpha, center_at_zero_rate=True
        )
        se_scale = rates.c_sigma / selection.m ** _width_exponent(rates, selection)

    # unclamped selections reproduce these expressions bit for bit
    raw_eps = selection.c_hat * selection.m ** (-selection.r_hat - selection.epsilon)
    raw_zero = selection.c_hat * selection.m ** (-selection.r_hat)
    diagnostics = AdaptiveDiagnostics(
        anchor_source=anchor_source,
        bprime_sign_flip=rates.diagnostics.bprime_sign_flip,
        sigmaprime_sign_flip=rates.diagnostics.sigmaprime_sign_flip,
        delta_clamped=(selection.delta_eps != raw_eps) or (selection.delta_zero != raw_zero),
        nuisance_degenerate=fit12.degenerate,
    )
    return EstimateReport(
        point=point,
        point_at_delta_zero=point_zero,
        ci_low=ci_low,
        ci_high=ci_high,
        alt_ci_low=alt_low,
        alt_ci_high=alt_high,
        alpha=config.alpha,
        selection=selection,
        rates=rates,
        se_scale=se_scale,
        diagnostics=diagnostics,
    )


# --------------------------------------------------------------------------- #
# targeted-update variant (binary outcomes)
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class TmleReport:
    """Result of the targeted update: the estimate plus its score audit."""

    point: float
    epsilon: float
    pooled_score: float  # pooled validation mean of the gradient at the update
    diverged: bool
    fold_points: tuple
    delta: float
    folds: int


def _clever_covariate(family: SmoothedFamily, delta: float):
    """H(a, w) such that the fluctuation moves psi in the gradient direction."""
    if family.kind == KIND_COUNTERFACTUAL:

        def h(a, w):
            g1 = np.asarray(family.propensity(np.ones(np.shape(a)), w), dtype=float)
            return np.asarray(a, dtype=float) / np.maximum(g1, delta)

    else:

        def h(a, w):
            k = family.kernel.scaled(np.asarray(a, dtype=float), family.target_point, delta)
            g = np.asarray(family.propensity(a, w), dtype=float)
            return k / np.maximum(g, PROPENSITY_FLOOR)

    return h


def _fluctuated_regression(base_predict, h, eps: float) -> CallableRegression:
    lo, hi = QBAR_CLAMP

    def q_eps(a, w):
        q = np.clip(np.asarray(base_predict(a, w), dtype=float), lo, hi)
        return expit(logit(q) + eps * h(a, w))

    return CallableRegression(q_eps, clamp=None)


def _solve_fluctuation(h: np.ndarray, base_logit: np.ndarray, y: np.ndarray):
    """Maximize the pooled Bernoulli likelihood along the logistic submodel.

    The score eps -> mean(h * (y - expit(base_logit + eps*h))) is strictly
    decreasing wherever some h != 0, so a sign-changing bracket plus Brent's
    method nails the root. If no root lies inside the trust region the
    boundary is the in-region maximizer (concave likelihood); that case is
    flagged.
    """

    def score(eps: float) -> float:
        return float(np.mean(h * (y - expit(base_logit + eps * h))))

    s0 = score(0.0)
    if s0 == 0.0 or not np.any(h):
        return 0.0, False
    direction = 1.0 if s0 > 0.0 else -1.0
    hi = 1.0
    while True:
        if s0 * score(direction * hi) <= 0.0:
            root = brentq(score, 0.0, direction * hi, xtol=1e-13, rtol=8.9e-16)
            return float(root), False
        if hi >= _EPS_TRUST_REGION:
            break
        hi = min(2.0 * hi, _EPS_TRUST_REGION)
    warnings.warn(
        f"fluctuation parameter exceeded |eps| = {_EPS_TRUST_REGION:g}; "
        "stopping at the trust-region boundary",
        FluctuationDiverged,
        stacklevel=3,
    )
    return direction * _EPS_TRUST_REGION, True


def cv_tmle_report(
    data: Dataset,
    family: SmoothedFamily,
    delta: float,
    folds: int = 5,
    seed=None,
) -> TmleReport:
    """Targeted-update estimate with the full audit trail.

    Rows are permuted (deterministically given ``seed``) and dealt into
    ``folds`` validation folds. Each fold's nuisances are fitted on the other
    folds, the outcome regression is fluctuated along the logistic submodel
    ``logit q_eps = logit q + eps * H`` with one pooled ``eps`` maximizing the
    validation likelihood, and the estimate is the validation-size-weighted
    average of the fluctuated plug-ins, each taking its covariate marginal
    over the fold's validation rows. ``pooled_score`` re-evaluates the
    canonical gradient at the updated fits over all validation rows; it is
    zero up to root-finding tolerance by construction.
    """
    if family.kind not in (KIND_COUNTERFACTUAL, KIND_DOSE_RESPONSE):
        raise ConfigError(
            f"the targeted update applies to the causal families, not {family.kind!r}"
        )
    if delta <= 0.0:
        raise NonPositiveBandwidth(f"smoothing level must be positive, got {delta}")
    if folds < 2:
        raise ConfigError(f"need at least 2 folds, got {folds}")
    if data.n < 2 * folds:
        raise SplitTooSmall(f"{folds}-fold update needs at least {2 * folds} rows, got {data.n}")
    if not np.all((data.y == 0.0) | (data.y == 1.0)):
        raise NonBinaryOutcome("the targeted update requires outcomes in {0, 1}")

    perm = derive_rng(seed, "cv-tmle-folds").permutation(data.n)
    fold_indices = [np.sort(chunk) for chunk in np.array_split(perm, folds)]
    h = _clever_covariate(family, delta)
    lo, hi = QBAR_CLAMP

    fits, h_parts, logit_parts, y_parts = [], [], [], []
    for val in fold_indices:
        train = np.setdiff1d(perm, val)
        fit = fit_nuisance(family, data, train)
        a_val, w_val, y_val = data.a[val], data.w[val], data.y[val]
        q_val = np.clip(np.asarray(fit.regression.predict(a_val, w_val), dtype=float), lo, hi)
        fits.append(fit)
        h_parts.append(h(a_val, w_val))
        logit_parts.append(logit(q_val))
        y_parts.append(y_val)

    eps, diverged = _solve_fluctuation(
        np.concatenate(h_parts), np.concatenate(logit_parts), np.concatenate(y_parts)
    )

    fold_points, gradient_parts = [], []
    for val, fit in zip(fold_indices, fits):
        updated = replace(
            fit,
            qw_sample=val,
            regression=_fluctuated_regression(fit.regression.predict, h, eps),
        )
        ev = FamilyEvaluator(family, updated, data, val)
        fold_points.append(ev.psi(delta))
        gradient_parts.append(ev.gradient_values(delta))

    sizes = np.array([val.size for val in fold_indices], dtype=float)
    point = float(np.dot(fold_points, sizes) / data.n)
    pooled_score = float(np.mean(np.concatenate(gradient_parts)))
    return TmleReport(
        point=point,
        epsilon=eps,
        pooled_score=pooled_score,
        diverged=diverged,
        fold_points=tuple(float(p) for p in fold_points),
        delta=float(delta),
        folds=folds,
    )


def cv_tmle(
    data: Dataset,
    family: SmoothedFamily,
    delta: float,
    folds: int = 5,
    seed=None,
) -> float:
    """Targeted-update estimate; see :func:`cv_tmle_report` for the audit."""
    return cv_tmle_report(data, family, delta, folds=folds, seed=seed).point
