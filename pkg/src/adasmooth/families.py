"""Three smoothed-parameter families behind one interface.

Each family indexes a curve of pathwise-differentiable parameters delta ->
Psi_delta(P) that approaches a possibly non-smooth target as delta -> 0:

``density_at_point``
    Psi_delta(P) = E_P[ K_{delta,x}(O) ], the smoothed density of a scalar O at
    the point x. The nuisance "fit" is just the empirical distribution.

``counterfactual_mean``
    Psi_delta(P) = E_P[ g0(1|W) / max(g0(1|W), delta) * qbar(1, W) ], the mean
    outcome under treatment with the known propensity truncated at delta.

``dose_response``
    Psi_delta(P) = E_P[ integral K_{delta,a0}(a) qbar(a, W) da ], the
    kernel-smoothed counterfactual dose-response at exposure level a0 with a
    known exposure density g0(a|w).

For every family the module exposes the plug-in value ``psi_plugin``, the
canonical-gradient evaluation ``gradient`` / ``gradient_values``, and nuisance
fitting ``fit_nuisance``. :class:`FamilyEvaluator` is the vectorized workhorse:
it caches every smoothing-level-independent piece (regression predictions,
propensity values, neighbor structures) so that sweeping many delta values on a
fixed evaluation set costs only the kernel algebra per delta.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import SCHEMA_SCALAR, SCHEMA_WAY, Dataset, Observation, way_dataset
from .errors import (
    ConfigError,
    EmptySample,
    NonPositiveBandwidth,
    PropensityUnderflow,
    SchemaMismatch,
)
from .kernels import Kernel, kernel_quadrature_nodes
from .nuisance import CallableRegression, KernelRegression

__all__ = [
    "KIND_DENSITY",
    "KIND_COUNTERFACTUAL",
    "KIND_DOSE_RESPONSE",
    "KINDS",
    "QBAR_CLAMP",
    "PROPENSITY_FLOOR",
    "SmoothedFamily",
    "NuisanceFit",
    "FamilyEvaluator",
    "fit_nuisance",
    "psi_plugin",
    "gradient",
    "gradient_values",
    "default_feasible_max",
]

KIND_DENSITY = "density_at_point"
KIND_COUNTERFACTUAL = "counterfactual_mean"
KIND_DOSE_RESPONSE = "dose_response"
KINDS = (KIND_DENSITY, KIND_COUNTERFACTUAL, KIND_DOSE_RESPONSE)

# Regression outputs for outcomes living in [0, 1] are clamped into this range so
# they can sit in ratio denominators and logits without blowing up.
QBAR_CLAMP = (1e-6, 1.0 - 1e-6)
# Exposure-density values below this are clipped (and counted) rather than fatal.
PROPENSITY_FLOOR = 1e-6


@dataclass(frozen=True)
class SmoothedFamily:
    """Which smoothed parameter is being estimated, and with what ingredients.

    Parameters
    ----------
    kind : str
        One of :data:`KINDS`.
    target_point : float
        The evaluation point x (density) or a0 (dose-response); unused for the
        counterfactual mean. Must lie in [0, 1] for ``dose_response``.
    kernel : Kernel, optional
        Smoothing kernel; required for the density and dose-response families.
    propensity : callable (a, w) -> positive array, optional
        The *known* treatment mechanism. For the counterfactual mean it is
        queried at a = 1 (probability of treatment given w); for dose-response
        it is the conditional exposure density g0(a|w). Required for both.
    nuisance_options : dict
        ``regression``: callable (a, w) -> values, injected in place of the
        built-in local-kernel regression; ``clamp``: tuple to override the
        output clamp, or None to disable it.
    """

    kind: str
    target_point: float = 0.0
    kernel: Kernel | None = None
    propensity: Callable | None = None
    nuisance_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown family kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in (KIND_DENSITY, KIND_DOSE_RESPONSE) and self.kernel is None:
            raise ConfigError(f"{self.kind} requires a kernel")
        if self.kind in (KIND_COUNTERFACTUAL, KIND_DOSE_RESPONSE) and self.propensity is None:
            raise ConfigError(f"{self.kind} requires the known propensity/exposure density")
        if self.kind == KIND_DOSE_RESPONSE and not 0.0 <= self.target_point <= 1.0:
            raise ConfigError("dose_response target_point must lie in [0, 1]")
        unknown = set(self.nuisance_options) - {"regression", "clamp"}
        if unknown:
            raise ConfigError(f"unknown nuisance_options keys: {sorted(unknown)}")

    @property
    def schema(self) -> str:
        return SCHEMA_SCALAR if self.kind == KIND_DENSITY else SCHEMA_WAY


@dataclass(frozen=True, eq=False)
class NuisanceFit:
    """Fitted nuisances plus the empirical support they were built from.

    ``qw_sample`` indexes the rows whose covariate values form the empirical
    marginal used by the plug-in; ``fit_subsample`` indexes the rows the
    regression was trained on. They coincide after :func:`fit_nuisance`; the
    targeted-update variant re-points ``qw_sample`` at validation rows.
    """

    data: Dataset
    qw_sample: np.ndarray
    fit_subsample: np.ndarray
    regression: object | None  # None for the density family
    degenerate: bool = False

    @property
    def qbar(self) -> Callable:
        """The fitted regression function (a, w) -> value."""
        if self.regression is None:
            raise SchemaMismatch("the density family carries no outcome regression")
        return self.regression.predict


def _check_schema(family: SmoothedFamily, data: Dataset) -> None:
    if data.schema != family.schema:
        raise SchemaMismatch(
            f"family {family.kind!r} expects schema {family.schema!r}, got {data.schema!r}"
        )


def _resolve_clamp(family: SmoothedFamily, y: np.ndarray):
    clamp = family.nuisance_options.get("clamp", "auto")
    if clamp == "auto":
        in_unit = bool(np.all((y >= 0.0) & (y <= 1.0)))
        return QBAR_CLAMP if in_unit else None
    return clamp


def fit_nuisance(family: SmoothedFamily, data: Dataset, subsample) -> NuisanceFit:
    """Fit the family's nuisances on the given row indices.

    The density family needs no fitted function, only the empirical support.
    The two causal families regress Y on (A, W) with the built-in local-kernel
    smoother unless ``nuisance_options["regression"]`` injects a function.
    """
    _check_schema(family, data)
    sub = np.asarray(subsample, dtype=np.int64)
    if sub.size == 0:
        raise EmptySample("cannot fit nuisances on an empty subsample")
    if family.kind == KIND_DENSITY:
        return NuisanceFit(data=data, qw_sample=sub, fit_subsample=sub, regression=None)

    a, w, y = data.a[sub], data.w[sub], data.y[sub]
    if family.kind == KIND_COUNTERFACTUAL:
        if not np.all((a == 0.0) | (a == 1.0)):
            raise SchemaMismatch("counterfactual_mean requires a binary exposure column")
        g_obs = np.asarray(family.propensity(np.ones(sub.size), w), dtype=float)
    else:
        g_obs = np.asarray(family.propensity(a, w), dtype=float)
    if np.any(g_obs <= 0.0):
        raise ConfigError("propensity must be strictly positive on the observed support")

    clamp = _resolve_clamp(family, y)
    injected = family.nuisance_options.get("regression")
    if injected is not None:
        reg = CallableRegression(injected, clamp=clamp)
    else:
        reg = KernelRegression(a, w, y, clamp=clamp)
    return NuisanceFit(
        data=data,
        qw_sample=sub,
        fit_subsample=sub,
        regression=reg,
        degenerate=bool(getattr(reg, "degenerate", False)),
    )


class FamilyEvaluator:
    """Repeated psi/gradient evaluation on fixed index sets, cheap per delta.

    Construction precomputes everything that does not depend on the smoothing
    level: regression predictions at the evaluation rows, propensity values,
    and (through the regression's own cache) the covariate-neighbor structure
    used by profile evaluations. ``psi`` and ``gradient_values`` then cost one
    kernel sweep per delta. Results are memoized per delta.

    Parameters
    ----------
    family, fit
        The family and its fitted nuisances. ``psi`` averages over
        ``fit.qw_sample`` rows of ``fit.data``.
    data, indices : optional
        Evaluation rows for ``gradient_values``. Omit both for a psi-only
        evaluator.
    """

    def __init__(self, family: SmoothedFamily, fit: NuisanceFit, data: Dataset | None = None, indices=None):
        self.family = family
        self.fit = fit
        self.underflow_count = 0
        self._psi_memo: dict[float, float] = {}
        self._nodes_memo: dict[float, tuple[np.ndarray, np.ndarray]] = {}

        kind = family.kind
        fdata, qw = fit.data, fit.qw_sample
        if kind == KIND_DENSITY:
            self._o_fit = fdata.o[qw]
        elif kind == KIND_COUNTERFACTUAL:
            w_fit = fdata.w[qw]
            self._g1_fit = np.asarray(family.propensity(np.ones(qw.size), w_fit), dtype=float)
            self._q1_fit = fit.regression.predict(np.ones(qw.size), w_fit)
        else:
            self._w_fit = fdata.w[qw]

        self._has_eval = data is not None
        if not self._has_eval:
            return
        _check_schema(family, data)
        idx = np.arange(data.n) if indices is None else np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            raise EmptySample("evaluation index set is empty")
        if kind == KIND_DENSITY:
            self._o_ev = data.o[idx]
            return
        a_ev, w_ev, y_ev = data.a[idx], data.w[idx], data.y[idx]
        self._a_ev, self._w_ev, self._y_ev = a_ev, w_ev, y_ev
        self._qa_ev = fit.regression.predict(a_ev, w_ev)
        if kind == KIND_COUNTERFACTUAL:
            self._g1_ev = np.asarray(family.propensity(np.ones(idx.size), w_ev), dtype=float)
            self._q1_ev = fit.regression.predict(np.ones(idx.size), w_ev)
        else:
            g = np.asarray(family.propensity(a_ev, w_ev), dtype=float)
            low = g < PROPENSITY_FLOOR
            k = int(np.sum(low))
            if k:
                self.underflow_count += k
                warnings.warn(
                    "exposure-density values below the floor were clipped",
                    PropensityUnderflow,
                    stacklevel=2,
                )
                g = np.maximum(g, PROPENSITY_FLOOR)
            self._g_ev = g

    # -- plug-in -------------------------------------------------------------

    def _nodes(self, delta: float):
        cached = self._nodes_memo.get(delta)
        if cached is None:
            cached = kernel_quadrature_nodes(
                self.family.kernel, self.family.target_point, delta, clip=(0.0, 1.0)
            )
            self._nodes_memo[delta] = cached
        return cached

    def psi(self, delta: float) -> float:
        """Plug-in Psi_delta at the fitted nuisances, averaged over qw_sample.

        ``delta = 0`` is the untruncated counterfactual mean; the kernel
        families need a strictly positive bandwidth.
        """
        if delta < 0.0 or (delta == 0.0 and self.family.kind != KIND_COUNTERFACTUAL):
            raise NonPositiveBandwidth(f"smoothing level must be positive, got {delta}")
        delta = float(delta)
        memo = self._psi_memo.get(delta)
        if memo is not None:
            return memo
        fam = self.family
        if fam.kind == KIND_DENSITY:
            value = float(np.mean(fam.kernel.scaled(self._o_fit, fam.target_point, delta)))
        elif fam.kind == KIND_COUNTERFACTUAL:
            ratio = self._g1_fit / np.maximum(self._g1_fit, delta)
            value = float(np.mean(ratio * self._q1_fit))
        else:
            nodes, weights = self._nodes(delta)
            prof = self.fit.regression.profile(nodes, self._w_fit)
            value = float(np.mean(prof @ weights))
        self._psi_memo[delta] = value
        return value

    # -- canonical gradient ---------------------------------------------------

    def gradient_values(self, delta: float) -> np.ndarray:
        """Canonical-gradient values D*_delta(fit) at each evaluation row."""
        if not self._has_eval:
            raise EmptySample("this evaluator was built without evaluation rows")
        psi = self.psi(delta)
        fam = self.family
        if fam.kind == KIND_DENSITY:
            vals = fam.kernel.scaled(self._o_ev, fam.target_point, delta) - psi
        elif fam.kind == KIND_COUNTERFACTUAL:
            g_trunc = np.maximum(self._g1_ev, delta)
            vals = (
                self._a_ev / g_trunc * (self._y_ev - self._qa_ev)
                + self._g1_ev / g_trunc * self._q1_ev
                - psi
            )
        else:
            ka = fam.kernel.scaled(self._a_ev, fam.target_point, delta)
            nodes, weights = self._nodes(delta)
            smooth_q = self.fit.regression.profile(nodes, self._w_ev) @ weights
            vals = ka / self._g_ev * (self._y_ev - self._qa_ev) + smooth_q - psi
        if not np.all(np.isfinite(vals)):
            raise SchemaMismatch("gradient evaluation produced non-finite values")
        return vals


def _psi_side(family: SmoothedFamily, fit: NuisanceFit) -> FamilyEvaluator:
    """Memoized psi-only evaluator living on the (immutable) fit."""
    ev = getattr(fit, "_psi_evaluator", None)
    if ev is None or ev.family is not family:
        ev = FamilyEvaluator(family, fit)
        object.__setattr__(fit, "_psi_evaluator", ev)
    return ev


def psi_plugin(family: SmoothedFamily, fit: NuisanceFit, delta: float) -> float:
    """Plug-in value Psi_delta at the fitted nuisances.

    density: mean of K_{delta,x}(O_i); counterfactual mean: mean of
    g0(1|W_i)/max(g0(1|W_i), delta) * qbar(1, W_i); dose-response: mean of
    integral K_{delta,a0}(a) qbar(a, W_i) da over the kernel window clipped to
    [0, 1]. All means run over ``fit.qw_sample``.
    """
    return _psi_side(family, fit).psi(delta)


def gradient_values(
    family: SmoothedFamily, fit: NuisanceFit, data: Dataset, indices, delta: float
) -> np.ndarray:
    """Canonical-gradient values at ``data`` rows ``indices`` (vectorized)."""
    return FamilyEvaluator(family, fit, data, indices).gradient_values(delta)


def gradient(family: SmoothedFamily, fit: NuisanceFit, delta: float, obs: Observation) -> float:
    """Canonical gradient D*_delta at a single observation."""
    if family.kind == KIND_DENSITY:
        if obs.o is None:
            raise SchemaMismatch("density family expects a scalar observation")
        if delta <= 0.0:
            raise NonPositiveBandwidth(f"smoothing level must be positive, got {delta}")
        k_val = float(family.kernel.scaled(np.array([obs.o]), family.target_point, delta)[0])
        return k_val - psi_plugin(family, fit, delta)
    if obs.w is None:
        raise SchemaMismatch(f"{family.kind} expects a (w, a, y) observation")
    one = way_dataset(np.atleast_2d(np.asarray(obs.w, dtype=float)), [obs.a], [obs.y])
    ev = FamilyEvaluator(family, fit, one, np.array([0]))
    ev._psi_memo[float(delta)] = psi_plugin(family, fit, delta)
    return float(ev.gradient_values(delta)[0])


def default_feasible_max(family: SmoothedFamily, data: Dataset) -> float:
    """Largest smoothing level the family treats as usable for anchor placement.

    density: twice the sample spread of O (beyond that the kernel no longer
    localizes). counterfactual mean: 1.0, since the truncation max(g, delta)
    saturates once delta exceeds every propensity. dose-response: the distance
    from a0 to the nearer edge of [0, 1], shrunk so that at least two kernel
    standard-lengths stay inside the interval.
    """
    if family.kind == KIND_DENSITY:
        spread = float(np.std(data.o))
        return 2.0 * spread if spread > 0.0 else 1.0
    if family.kind == KIND_COUNTERFACTUAL:
        return 1.0
    edge = min(family.target_point, 1.0 - family.target_point)
    return edge / min(family.kernel.effective_radius, 2.0)
