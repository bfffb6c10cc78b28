"""Ground truth by quadrature and Monte Carlo, independent of the estimator.

Everything here is computed straight from a DGP's closed-form pieces: the
target value, the smoothed-parameter curve and its bias, and the
true-nuisance gradient scale. The only code shared with the estimation path
is the kernel algebra, so these values can serve as an honest reference.
``oracle_delta_star`` is the one exception by design: it measures the
*estimator's* error at fixed smoothing levels to locate the oracle-optimal
level, so it drives the same one-step evaluation the pipeline uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import derive_rng, three_way_split
from .dgps import (
    BinaryTreatmentDGP,
    DoseResponseDGP,
    ScalarNormalDGP,
    ScalarUniformDGP,
)
from .errors import ConfigError, NonPositiveBandwidth
from .families import (
    KIND_COUNTERFACTUAL,
    FamilyEvaluator,
    SmoothedFamily,
    fit_nuisance,
)
from .kernels import Kernel, kernel_quadrature_nodes

__all__ = [
    "TruthBundle",
    "SmoothedTruth",
    "DeltaStarResult",
    "dose_curve",
    "true_psi",
    "true_smoothed_psi",
    "true_b0",
    "true_sigma_inf",
    "truth_bundle",
    "oracle_delta_star",
    "delta_star_power_law",
]

# Probabilists' Gauss-Hermite rule: E[f(Z)] = sum(w * f(x)) / sqrt(2*pi).
_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(64)
_GH_W = _GH_W / np.sqrt(2.0 * np.pi)

# Gauss-Legendre on [0, 1] for one-dimensional covariate integrals.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(128)
_GL01_X = 0.5 * (_GL_X + 1.0)
_GL01_W = 0.5 * _GL_W

_DEFAULT_MC = 1_000_000


def _expit_normal_mean(mean, sd):
    """E[expit(N(mean, sd^2))], vectorized over mean/sd of equal shape."""
    mean = np.asarray(mean, dtype=float)[..., None]
    sd = np.asarray(sd, dtype=float)[..., None]
    return np.sum(_GH_W * expit(mean + sd * _GH_X), axis=-1)


def dose_curve(dgp: DoseResponseDGP, a) -> np.ndarray:
    """The counterfactual curve a -> E[mu(L, a)] for Gaussian L, exactly.

    For fixed a the linear index inside mu is a linear combination of the four
    independent standard normals, hence itself normal with mean
    ``1 + 20a(0.1 - 0.13^2 (20a)^2)`` (plus the cusp term for that variant)
    and variance ``(0.2 - 2a)^2 + 0.2^2 + (0.3 + 2a)^2 + 0.1^2``; the
    four-dimensional expectation collapses to a one-dimensional Gauss-Hermite
    sum.
    """
    a = np.asarray(a, dtype=float)
    const = 0.1 if dgp.variant == "smooth" else 0.0
    mean = 1.0 + 20.0 * a * (const - 0.13**2 * (20.0 * a) ** 2)
    if dgp.variant == "cusp":
        mean = mean + 5.0 * dgp.cusp(a)
    var = (0.2 - 2.0 * a) ** 2 + 0.2**2 + (0.3 + 2.0 * a) ** 2 + 0.1**2
    return _expit_normal_mean(mean, np.sqrt(var))


def dose_curve_gauss_hermite_4d(dgp: DoseResponseDGP, a0: float, nodes_per_dim: int = 32) -> float:
    """E[mu(L, a0)] by a full product Gauss-Hermite rule; cross-checks dose_curve."""
    x, w = np.polynomial.hermite_e.hermegauss(nodes_per_dim)
    w = w / np.sqrt(2.0 * np.pi)
    grids = np.meshgrid(x, x, x, x, indexing="ij")
    l = np.stack([g.ravel() for g in grids], axis=-1)
    weights = (w[:, None, None, None] * w[None, :, None, None]
               * w[None, None, :, None] * w[None, None, None, :]).ravel()
    return float(np.sum(weights * dgp.mu(l, a0)))


def _lam_mean(dgp: DoseResponseDGP) -> float:
    """E[lambda(L)]: the linear index is N(-0.8, 0.07), one GH sum."""
    sd = float(np.sqrt(0.1**2 + 0.1**2 + 0.1**2 + 0.2**2))
    return float(_expit_normal_mean(-0.8, sd))


def true_psi(dgp, target_point: float | None = None) -> float:
    """The non-smoothed target value for a DGP, by quadrature or closed form.

    density DGPs: the marginal density at ``target_point``. Binary-treatment:
    the mean outcome under treatment, E[qbar(1, W)]. Dose-response: the
    counterfactual curve at ``target_point``.
    """
    if isinstance(dgp, (ScalarNormalDGP, ScalarUniformDGP)):
        if target_point is None:
            raise ConfigError("density truth needs the evaluation point")
        return float(dgp.density(target_point))
    if isinstance(dgp, BinaryTreatmentDGP):
        w = _GL01_X.reshape(-1, 1)
        return float(np.sum(_GL01_W * dgp.qbar(np.ones(w.shape[0]), w)))
    if isinstance(dgp, DoseResponseDGP):
        if target_point is None:
            raise ConfigError("dose-response truth needs the exposure point a0")
        return float(dose_curve(dgp, target_point))
    raise ConfigError(f"no oracle for DGP type {type(dgp).__name__}")


def true_smoothed_psi(
    dgp, delta: float, target_point: float | None = None, kernel: Kernel | None = None
) -> float:
    """The smoothed parameter Psi_delta(P_0) at the true distribution.

    density: integral of K_{delta,x} against the marginal density.
    binary treatment: E[g(W)/max(g(W), delta) * qbar(1, W)].
    dose-response: integral of K_{delta,a0} against the counterfactual curve,
    over the kernel window intersected with [0, 1] (the same clipped-window
    convention the estimator uses).
    """
    if delta <= 0.0:
        raise NonPositiveBandwidth(f"delta must be positive, got {delta}")
    if isinstance(dgp, BinaryTreatmentDGP):
        w = _GL01_X.reshape(-1, 1)
        g = dgp.g1(w)
        ratio = g / np.maximum(g, delta)
        return float(np.sum(_GL01_W * ratio * dgp.qbar(np.ones(w.shape[0]), w)))
    if kernel is None or target_point is None:
        raise ConfigError("smoothed truth needs the kernel and the target point")
    if isinstance(dgp, (ScalarNormalDGP, ScalarUniformDGP)):
        nodes, kweights = kernel_quadrature_nodes(kernel, target_point, delta)
        return float(np.sum(kweights * dgp.density(nodes)))
    if isinstance(dgp, DoseResponseDGP):
        nodes, kweights = kernel_quadrature_nodes(kernel, target_point, delta, clip=(0.0, 1.0))
        return float(np.sum(kweights * dose_curve(dgp, nodes)))
    raise ConfigError(f"no oracle for DGP type {type(dgp).__name__}")


def true_b0(dgp, delta, target_point=None, kernel=None) -> float:
    """Smoothing bias b_0(delta) = Psi_delta(P_0) - Psi(P_0)."""
    return true_smoothed_psi(dgp, delta, target_point, kernel) - true_psi(dgp, target_point)


def _dose_sigma_mc(
    dgp: DoseResponseDGP, delta: float, a0: float, kernel: Kernel, mc_size: int, seed
) -> float:
    rng = derive_rng(seed, "sigma-mc", "dose")
    l = rng.standard_normal((mc_size, 4))
    lam = dgp.lam(l)
    g1 = rng.gamma(shape=lam)
    g2 = rng.gamma(shape=1.0 - lam)
    a = np.clip(g1 / (g1 + g2), 1e-12, 1.0 - 1e-12)
    mu_obs = dgp.mu(l, a)
    y = (rng.random(mc_size) < mu_obs).astype(float)

    k_over_g = kernel.scaled(a, a0, delta) / dgp.propensity(a, l)
    nodes, kweights = kernel_quadrature_nodes(kernel, a0, delta, clip=(0.0, 1.0))
    smooth = np.empty(mc_size)
    step = 100_000
    for lo in range(0, mc_size, step):
        block = l[lo : lo + step]
        smooth[lo : lo + block.shape[0]] = dgp.mu(block[:, None, :], nodes) @ kweights
    values = k_over_g * (y - mu_obs) + smooth
    return float(np.std(values))


def _binary_sigma_mc(dgp: BinaryTreatmentDGP, delta: float, mc_size: int, seed) -> float:
    rng = derive_rng(seed, "sigma-mc", "binary")
    w = rng.random((mc_size, 1))
    g = dgp.g1(w)
    a = (rng.random(mc_size) < g).astype(float)
    qa = dgp.qbar(a, w)
    y = (rng.random(mc_size) < qa).astype(float)
    g_trunc = np.maximum(g, delta)
    values = a / g_trunc * (y - qa) + g / g_trunc * dgp.qbar(np.ones(mc_size), w)
    return float(np.std(values))


def true_sigma_inf(
    dgp,
    delta: float,
    target_point: float | None = None,
    kernel: Kernel | None = None,
    mc_size: int = _DEFAULT_MC,
    seed=0,
) -> float:
    """sigma_inf(delta): the standard deviation of the true-nuisance gradient.

    Exact quadrature for the density family (variance of K_{delta,x}(O));
    seeded Monte Carlo of the closed-form gradient for the causal families.
    """
    if delta <= 0.0:
        raise NonPositiveBandwidth(f"delta must be positive, got {delta}")
    if isinstance(dgp, (ScalarNormalDGP, ScalarUniformDGP)):
        if kernel is None or target_point is None:
            raise ConfigError("density gradient scale needs the kernel and point")
        nodes, kweights = kernel_quadrature_nodes(kernel, target_point, delta)
        m1 = float(np.sum(kweights * dgp.density(nodes)))
        # kweights already carry one K factor; multiply the second one in
        m2 = float(np.sum(kweights * kernel.scaled(nodes, target_point, delta) * dgp.density(nodes)))
        return float(np.sqrt(max(m2 - m1**2, 0.0)))
    if isinstance(dgp, BinaryTreatmentDGP):
        return _binary_sigma_mc(dgp, delta, mc_size, seed)
    if isinstance(dgp, DoseResponseDGP):
        if kernel is None or target_point is None:
            raise ConfigError("dose gradient scale needs the kernel and point a0")
        return _dose_sigma_mc(dgp, delta, target_point, kernel, mc_size, seed)
    raise ConfigError(f"no oracle for DGP type {type(dgp).__name__}")


# --------------------------------------------------------------------------- #
# bundled truth
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class SmoothedTruth:
    delta: float
    psi_delta: float
    b0: float
    sigma_inf: float
    se_sigma: float  # Monte-Carlo SE of sigma_inf (0 when computed by quadrature)


@dataclass(frozen=True)
class TruthBundle:
    """The target value and the smoothed curve with gradient scales."""

    psi_true: float
    smoothed: tuple
    mc_size: int

    def __post_init__(self):
        for entry in self.smoothed:
            if abs(entry.b0 - (entry.psi_delta - self.psi_true)) > 1e-12:
                raise ConfigError("b0 must equal psi_delta - psi_true")


def truth_bundle(
    dgp,
    deltas,
    target_point: float | None = None,
    kernel: Kernel | None = None,
    mc_size: int = _DEFAULT_MC,
    seed=0,
) -> TruthBundle:
    """Assemble psi_true plus (delta, psi_delta, b0, sigma_inf) rows."""
    psi0 = true_psi(dgp, target_point)
    quadrature = isinstance(dgp, (ScalarNormalDGP, ScalarUniformDGP))
    rows = []
    for delta in deltas:
        psi_d = true_smoothed_psi(dgp, delta, target_point, kernel)
        sigma = true_sigma_inf(dgp, delta, target_point, kernel, mc_size=mc_size, seed=seed)
        se = 0.0 if quadrature else sigma / np.sqrt(2.0 * mc_size)
        rows.append(
            SmoothedTruth(
                delta=float(delta), psi_delta=psi_d, b0=psi_d - psi0,
                sigma_inf=sigma, se_sigma=se,
            )
        )
    return TruthBundle(psi_true=psi0, smoothed=tuple(rows), mc_size=mc_size)


# --------------------------------------------------------------------------- #
# oracle-optimal smoothing level, by brute force
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class DeltaStarResult:
    """Grid-search MSE curve of the fixed-level one-step estimator."""

    delta_star: float
    delta_star_refined: float  # log-parabola through the argmin neighborhood
    grid: np.ndarray
    mse: np.ndarray
    se: np.ndarray
    n: int
    reps: int

    def __post_init__(self):
        if self.mse.shape != self.grid.shape or self.se.shape != self.grid.shape:
            raise ConfigError("curve arrays must align with the grid")


def _refine_log_parabola(log_grid: np.ndarray, mse: np.ndarray, j: int) -> float:
    """Vertex of the parabola through the argmin and its neighbors, in log-delta."""
    if j == 0 or j == len(mse) - 1:
        return float(np.exp(log_grid[j]))
    x0, x1, x2 = log_grid[j - 1 : j + 2]
    y0, y1, y2 = mse[j - 1 : j + 2]
    denom = (y0 - 2.0 * y1 + y2)
    if denom <= 0.0:
        return float(np.exp(log_grid[j]))
    # equally-spaced log grid: vertex offset in units of spacing
    h = x1 - x0
    shift = 0.5 * (y0 - y2) / denom
    shift = float(np.clip(shift, -1.0, 1.0))
    return float(np.exp(x1 + shift * h))


def oracle_delta_star(
    dgp,
    family: SmoothedFamily,
    n: int,
    delta_grid,
    reps: int,
    seed=0,
    p1: float = 0.25,
    p2: float = 0.5,
) -> DeltaStarResult:
    """MSE of the fixed-level one-step across a smoothing grid, by simulation.

    Per replicate: sample n rows, apply the standard three-way split, fit
    nuisances on the first two splits, and evaluate the one-step at every grid
    level on the third (one shared evaluation structure per replicate, so the
    whole grid sees common random numbers). Squared errors are measured
    against the quadrature truth and averaged; the argmin and a log-parabola
    refinement are returned with the curve and its per-point standard errors.
    """
    grid = np.sort(np.asarray(delta_grid, dtype=float))
    if grid.size == 0 or np.any(grid <= 0.0):
        raise ConfigError("delta_grid must be non-empty and positive")
    if reps < 2:
        raise ConfigError(f"need at least 2 replicates for an SE, got {reps}")
    psi0 = true_psi(dgp, family.target_point if family.kind != KIND_COUNTERFACTUAL else None)

    sq_err = np.empty((reps, grid.size))
    for rep in range(reps):
        data = dgp.sample(n, seed=(seed, "delta-star", n, rep))
        plan = three_way_split(n, p1, p2, shuffle_seed=(seed, "split", n, rep))
        fit12 = fit_nuisance(family, data, plan.s12)
        ev = FamilyEvaluator(family, fit12, data, plan.s3)
        for j, delta in enumerate(grid):
            est = ev.psi(delta) + float(np.mean(ev.gradient_values(delta)))
            sq_err[rep, j] = (est - psi0) ** 2

    mse = sq_err.mean(axis=0)
    se = sq_err.std(axis=0, ddof=1) / np.sqrt(reps)
    j_star = int(np.argmin(mse))
    return DeltaStarResult(
        delta_star=float(grid[j_star]),
        delta_star_refined=_refine_log_parabola(np.log(grid), mse, j_star),
        grid=grid,
        mse=mse,
        se=se,
        n=int(n),
        reps=int(reps),
    )


def delta_star_power_law(
    dgp,
    family: SmoothedFamily,
    n_list,
    delta_grid,
    reps: int,
    seed=0,
) -> tuple[float, float, list]:
    """Fit delta*(n) ~ C * n^(-r) across sample sizes; returns (C, r, results)."""
    results = [
        oracle_delta_star(dgp, family, n, delta_grid, reps, seed=seed) for n in n_list
    ]
    log_n = np.log([r.n for r in results])
    log_d = np.log([r.delta_star_refined for r in results])
    slope, intercept = np.polyfit(log_n, log_d, 1)
    return float(np.exp(intercept)), float(-slope), results
