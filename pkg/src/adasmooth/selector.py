"""Rate estimation and data-adaptive smoothing-level selection.

The smoothed-parameter curve delta -> Psi_delta has a bias that shrinks like
C_b * delta^beta and a gradient standard deviation that grows like
C_sigma * delta^(-gamma) as delta -> 0. This module estimates (beta, gamma,
nu, and the three constants) from two slow "anchor" smoothing levels via
two-point log-log slopes, then picks the smoothing level that balances
squared bias against variance for the final-stage sample size m:

    r_hat   = 1 / (2*beta_hat - 1 + gamma_hat - nu_hat)
    C_hat   = (c_sigma * c_sigmaprime * beta_hat / c_bprime**2) ** r_hat
    delta   = C_hat * m ** (-r_hat - epsilon)      (epsilon > 0 undersmooths)

Everything is built on a curve-level core, :func:`rates_from_curves`, that
consumes plain callables delta -> value. Handed exact power laws it recovers
the exponents to machine precision; handed the cross-validated finite
differences of :class:`SplitCurves` it becomes the production estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, empirical_centered_second_moment
from .errors import (
    ConfigError,
    DegenerateRateDenominator,
    InfeasibleAnchors,
    LogOfZero,
    NoLinearRegion,
    SplitTooSmall,
)
from .families import FamilyEvaluator, NuisanceFit, SmoothedFamily

__all__ = [
    "DEFAULT_EPSILON",
    "AnchorConfig",
    "RateDiagnostics",
    "RateEstimates",
    "SmoothingSelection",
    "SplitCurves",
    "cv_psi_hat",
    "sigma_hat",
    "forward_difference",
    "finite_diff_b_prime",
    "finite_diff_sigma_prime",
    "default_anchors",
    "find_linear_window",
    "scan_anchors",
    "rates_from_curves",
    "estimate_rates",
    "select_smoothing",
]

DEFAULT_EPSILON = 0.05

# default_anchors free parameters: anchor magnitudes decay at this slow rate,
# starting from these fractions of the feasible maximum
_ANCHOR_DECAY = 0.05
_ANCHOR_C1 = 0.6
_ANCHOR_C2 = 0.3

_WINDOW_MIN_POINTS = 4
_SCAN_MIN_GRID = 8
_SCAN_RESIDUAL_THRESHOLD = 0.5


@dataclass(frozen=True)
class AnchorConfig:
    """Slow anchor smoothing levels delta1 > delta2 >= delta3 and the gap."""

    delta1: float
    delta2: float
    delta3: float
    gap: float

    def __post_init__(self):
        if not (self.delta1 > self.delta2 >= self.delta3 > 0.0):
            raise InfeasibleAnchors(
                f"anchors must satisfy delta1 > delta2 >= delta3 > 0, got "
                f"({self.delta1}, {self.delta2}, {self.delta3})"
            )
        if not 0.0 < self.gap <= self.delta2 / 2.0:
            raise InfeasibleAnchors(
                f"gap must lie in (0, delta2/2] = (0, {self.delta2 / 2.0}], got {self.gap}"
            )


@dataclass(frozen=True)
class RateDiagnostics:
    """Non-fatal observations made while estimating rates."""

    bprime_sign_flip: bool = False
    sigmaprime_sign_flip: bool = False

    @property
    def any(self) -> bool:
        return self.bprime_sign_flip or self.sigmaprime_sign_flip


@dataclass(frozen=True)
class RateEstimates:
    """Log-log slope estimates and the matched constants at delta3."""

    beta_hat: float
    gamma_hat: float
    nu_hat: float
    c_bprime: float
    c_sigma: float
    c_sigmaprime: float
    anchors: AnchorConfig
    diagnostics: RateDiagnostics = RateDiagnostics()

    def __post_init__(self):
        values = (
            self.beta_hat,
            self.gamma_hat,
            self.nu_hat,
            self.c_bprime,
            self.c_sigma,
            self.c_sigmaprime,
        )
        if not all(math.isfinite(v) for v in values):
            raise LogOfZero("rate estimation produced a non-finite value")
        if min(self.c_bprime, self.c_sigma, self.c_sigmaprime) <= 0.0:
            raise LogOfZero("rate constants must be strictly positive")


@dataclass(frozen=True)
class SmoothingSelection:
    """The selected smoothing levels and the quantities that produced them."""

    r_hat: float
    c_hat: float
    epsilon: float
    m: int
    delta_eps: float
    delta_zero: float


class SplitCurves:
    """Memoized estimator-side curves delta -> (Psi_hat, sigma_hat) on one split.

    Wraps a :class:`FamilyEvaluator` for (fit on s1, average over s2) so that
    repeated evaluations — anchor pairs, forward differences, scan grids —
    share the plug-in and gradient work per distinct delta.
    """

    def __init__(self, family: SmoothedFamily, fit1: NuisanceFit, data: Dataset, s2):
        self.evaluator = FamilyEvaluator(family, fit1, data, s2)
        self.n2 = len(np.asarray(s2))
        self._memo: dict[float, tuple[float, float]] = {}

    def _moments(self, delta: float) -> tuple[float, float]:
        delta = float(delta)
        got = self._memo.get(delta)
        if got is None:
            grads = self.evaluator.gradient_values(delta)
            cv = self.evaluator.psi(delta) + float(np.mean(grads))
            sig = (
                math.sqrt(empirical_centered_second_moment(grads))
                if grads.size >= 2
                else 0.0
            )
            got = (cv, sig)
            self._memo[delta] = got
        return got

    def cv(self, delta: float) -> float:
        """Cross-validated one-step estimate of Psi_delta."""
        return self._moments(delta)[0]

    def sigma(self, delta: float) -> float:
        """Empirical standard deviation of the gradient on the validation split."""
        return self._moments(delta)[1]


def cv_psi_hat(family, fit1, data, s2, delta) -> float:
    """One-shot cross-validated one-step: plug-in at fit1 + mean gradient over s2."""
    return SplitCurves(family, fit1, data, s2).cv(delta)


def sigma_hat(family, fit1, data, s2, delta) -> float:
    """One-shot gradient standard deviation on s2 (population divisor).

    Identically-equal gradients give 0; downstream log operations then raise
    rather than this function.
    """
    return SplitCurves(family, fit1, data, s2).sigma(delta)


def forward_difference(fn, delta: float, gap: float) -> float:
    """(fn(delta + gap) - fn(delta)) / gap."""
    if gap <= 0.0:
        raise InfeasibleAnchors(f"forward-difference gap must be positive, got {gap}")
    return (fn(delta + gap) - fn(delta)) / gap


def finite_diff_b_prime(family, fit1, data, s2, delta, gap) -> float:
    """Forward difference of the cross-validated one-step: slope of the bias curve."""
    return forward_difference(SplitCurves(family, fit1, data, s2).cv, delta, gap)


def finite_diff_sigma_prime(family, fit1, data, s2, delta, gap) -> float:
    """Forward difference of sigma_hat: slope of the gradient-sd curve."""
    return forward_difference(SplitCurves(family, fit1, data, s2).sigma, delta, gap)


def default_anchors(n: int, l1: int, l2: int, feasible_max: float) -> AnchorConfig:
    """Anchor levels from the rate-estimation split size l2 - l1.

    delta_i = c_i * feasible_max * (l2-l1)^(-0.05) with (c_1, c_2) = (0.6, 0.3):
    a deliberately slow decay so the anchors stay in the regime where the
    curves behave like power laws but estimation noise is small. The forward
    difference gap is (l2-l1)^(-1/4), capped at delta2/2.
    """
    if not 0 <= l1 < l2 <= n:
        raise InfeasibleAnchors(f"need 0 <= l1 < l2 <= n, got l1={l1}, l2={l2}, n={n}")
    size = l2 - l1
    base = size ** (-_ANCHOR_DECAY)
    delta1 = _ANCHOR_C1 * feasible_max * base
    delta2 = _ANCHOR_C2 * feasible_max * base
    if delta2 <= 2.0 * np.finfo(float).eps:
        raise InfeasibleAnchors(
            f"anchor delta2 = {delta2} is at machine precision; "
            "feasible_max is too small for usable anchors"
        )
    gap = min(size ** (-0.25), delta2 / 2.0)
    return AnchorConfig(delta1=delta1, delta2=delta2, delta3=delta2, gap=gap)


def find_linear_window(log_delta, log_bprime_mag, log_sigma):
    """Best contiguous window where both log-log curves look linear.

    Scores every contiguous index window of >= 4 points by the larger of the
    two straight-line residual sums, scaled by the window's log-delta span, and
    returns ``(i, j, score)`` for the minimizing window (ties go to the widest).
    Input arrays may contain non-finite entries (from log of 0); windows never
    cross them. Windows where the fitted |b'| trend decreases with the
    smoothing level are also skipped: smoothing bias grows with the level
    wherever the power-law premise holds, so a downward trend is a noise
    artifact, and accepting one yields an explosively small selected level
    downstream.
    """
    x = np.asarray(log_delta, dtype=float)
    yb = np.asarray(log_bprime_mag, dtype=float)
    ys = np.asarray(log_sigma, dtype=float)
    valid = np.isfinite(x) & np.isfinite(yb) & np.isfinite(ys)
    best = None
    for i in range(x.size):
        for j in range(i + _WINDOW_MIN_POINTS - 1, x.size):
            if not valid[i : j + 1].all():
                continue
            xs = x[i : j + 1]
            span = abs(xs[-1] - xs[0])
            if span == 0.0:
                continue
            coef_b, res_b, *_ = np.polyfit(xs, yb[i : j + 1], deg=1, full=True)
            if coef_b[0] < 0.0:
                continue
            rss = float(res_b[0]) if res_b.size else 0.0
            _, res_s, *_ = np.polyfit(xs, ys[i : j + 1], deg=1, full=True)
            rss = max(rss, float(res_s[0]) if res_s.size else 0.0)
            score = rss / span
            if score < 1e-12:  # numerically exact fit: let width break the tie
                score = 0.0
            key = (score, -(j - i))
            if best is None or key < best[0]:
                best = (key, i, j)
    if best is None:
        raise NoLinearRegion(
            "no contiguous window of >= 4 finite points on the log-log grid "
            "with a non-decreasing |b'| trend"
        )
    (score, _), i, j = best
    return i, j, score


def scan_anchors(family, fit1, data, s2, grid) -> AnchorConfig:
    """Pick anchors automatically from a log-log scan of the estimated curves.

    Evaluates the forward-differenced bias slope and the gradient sd on the
    grid, finds the most linear contiguous window of the two log-log plots,
    and returns its endpoints as (delta1, delta2) with delta3 = delta2.
    Raises :class:`NoLinearRegion` when the best window's scaled residual
    exceeds 0.5 or no window is computable; callers may fall back to
    :func:`default_anchors`.
    """
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid.size < _SCAN_MIN_GRID:
        raise ConfigError(f"scan grid needs >= {_SCAN_MIN_GRID} points, got {grid.size}")
    if grid[0] <= 0.0 or np.unique(grid).size != grid.size:
        raise ConfigError("scan grid must be strictly positive and duplicate-free")

    curves = SplitCurves(family, fit1, data, s2)
    gap_base = curves.n2 ** (-0.25)
    bvals = np.array(
        [forward_difference(curves.cv, d, min(gap_base, d / 2.0)) for d in grid]
    )
    svals = np.array([curves.sigma(d) for d in grid])
    with np.errstate(divide="ignore"):
        log_b = np.log(np.abs(bvals))
        log_s = np.log(svals)
    i, j, score = find_linear_window(np.log(grid), log_b, log_s)
    if score > _SCAN_RESIDUAL_THRESHOLD:
        raise NoLinearRegion(
            f"best log-log window residual {score:.3g} exceeds "
            f"{_SCAN_RESIDUAL_THRESHOLD}; anchors cannot be trusted"
        )
    delta2 = float(grid[i])
    return AnchorConfig(
        delta1=float(grid[j]),
        delta2=delta2,
        delta3=delta2,
        gap=min(gap_base, delta2 / 2.0),
    )


def _log_magnitude(value: float, label: str) -> float:
    if value == 0.0 or not math.isfinite(value):
        raise LogOfZero(f"{label} has magnitude {value}; log-log slope undefined")
    return math.log(abs(value))


def rates_from_curves(bprime, sigma, sigmaprime, anchors: AnchorConfig) -> RateEstimates:
    """Two-point log-log rate estimation from curve callables.

    ``bprime``, ``sigma``, ``sigmaprime`` map a smoothing level to the bias
    slope, the gradient sd, and the sd slope. Slopes are taken between
    ``anchors.delta1`` and ``anchors.delta2``; constants are matched at
    ``anchors.delta3``. Magnitudes are taken before logs; sign changes between
    the anchors are recorded as diagnostics, not errors.
    """
    d1, d2, d3 = anchors.delta1, anchors.delta2, anchors.delta3
    b1, b2 = bprime(d1), bprime(d2)
    s1, s2 = sigma(d1), sigma(d2)
    sp1, sp2 = sigmaprime(d1), sigmaprime(d2)

    logspan = math.log(d2) - math.log(d1)
    slope_b = (_log_magnitude(b2, "bias slope at delta2") - _log_magnitude(b1, "bias slope at delta1")) / logspan
    beta_hat = slope_b + 1.0
    gamma_hat = -(_log_magnitude(s2, "sigma at delta2") - _log_magnitude(s1, "sigma at delta1")) / logspan
    nu_hat = (_log_magnitude(sp2, "sigma slope at delta2") - _log_magnitude(sp1, "sigma slope at delta1")) / logspan

    b3 = b2 if d3 == d2 else bprime(d3)
    s3 = s2 if d3 == d2 else sigma(d3)
    sp3 = sp2 if d3 == d2 else sigmaprime(d3)
    c_bprime = abs(b3) * d3 ** (-(beta_hat - 1.0))
    c_sigma = abs(s3) * d3**gamma_hat
    c_sigmaprime = abs(sp3) * d3 ** (-nu_hat)

    diags = RateDiagnostics(
        bprime_sign_flip=(b1 < 0.0) != (b2 < 0.0),
        sigmaprime_sign_flip=(sp1 < 0.0) != (sp2 < 0.0),
    )
    return RateEstimates(
        beta_hat=beta_hat,
        gamma_hat=gamma_hat,
        nu_hat=nu_hat,
        c_bprime=c_bprime,
        c_sigma=c_sigma,
        c_sigmaprime=c_sigmaprime,
        anchors=anchors,
        diagnostics=diags,
    )


def estimate_rates(family, fit1, data, s2, anchors: AnchorConfig) -> RateEstimates:
    """Production rate estimation: finite differences of the split curves."""
    curves = SplitCurves(family, fit1, data, s2)
    gap = anchors.gap
    return rates_from_curves(
        bprime=lambda d: forward_difference(curves.cv, d, gap),
        sigma=curves.sigma,
        sigmaprime=lambda d: forward_difference(curves.sigma, d, gap),
        anchors=anchors,
    )


def select_smoothing(
    rates: RateEstimates,
    m: int,
    epsilon: float = DEFAULT_EPSILON,
    feasible_max: float | None = None,
) -> SmoothingSelection:
    """MSE-optimal smoothing level for final-stage size m, undersmoothed by epsilon.

    r_hat solves the bias^2-vs-variance balance; C_hat matches the estimated
    constants. ``delta_eps`` uses the slightly-faster rate m^(-r-eps) (the one
    the confidence intervals are built for); ``delta_zero`` uses the exact
    rate. Both are clamped into (machine eps, feasible_max].
    """
    if m < 2:
        raise SplitTooSmall(f"final-stage size m must be >= 2, got {m}")
    if epsilon < 0.0:
        raise ConfigError(f"epsilon must be non-negative, got {epsilon}")
    denom = 2.0 * rates.beta_hat - 1.0 + rates.gamma_hat - rates.nu_hat
    if denom <= 0.0:
        raise DegenerateRateDenominator(
            f"2*beta - 1 + gamma - nu = {denom} <= 0; no interior MSE optimum"
        )
    r_hat = 1.0 / denom
    base = rates.c_sigma * rates.c_sigmaprime * rates.beta_hat / rates.c_bprime**2
    if base <= 0.0:
        raise DegenerateRateDenominator(
            f"constant combination {base} <= 0 (beta_hat = {rates.beta_hat}); "
            "cannot form a positive smoothing constant"
        )
    c_hat = base**r_hat

    floor = np.finfo(float).eps
    cap = feasible_max if feasible_max is not None else math.inf

    def _clamped(value: float) -> float:
        return float(min(max(value, floor), cap))

    return SmoothingSelection(
        r_hat=r_hat,
        c_hat=c_hat,
        epsilon=epsilon,
        m=int(m),
        delta_eps=_clamped(c_hat * m ** (-r_hat - epsilon)),
        delta_zero=_clamped(c_hat * m ** (-r_hat)),
    )
