"""Synthetic data-generating processes with closed-form ground truth.

Each DGP knows how to sample a :class:`~adasmooth.core.Dataset`, exposes the
closed-form pieces an oracle needs (outcome regression, exposure density,
marginal density), and can build the matching :class:`SmoothedFamily`. The
dose-response process is the four-covariate Beta-exposure design used by the
benchmark, in a smooth variant and a "cusp" variant whose counterfactual
curve has a kink at a = 0.15.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import Dataset, derive_rng, scalar_dataset, way_dataset
from .errors import ConfigError
from .families import (
    KIND_COUNTERFACTUAL,
    KIND_DENSITY,
    KIND_DOSE_RESPONSE,
    SmoothedFamily,
)

__all__ = [
    "DoseResponseDGP",
    "BinaryTreatmentDGP",
    "ScalarNormalDGP",
    "ScalarUniformDGP",
    "VARIANT_SMOOTH",
    "VARIANT_CUSP",
]

VARIANT_SMOOTH = "smooth"
VARIANT_CUSP = "cusp"

# A values are kept strictly inside (0, 1): the Beta density is unbounded at
# the endpoints, and a draw underflowing to exactly 0 or 1 would be outside
# the model's support.
_A_EDGE = 1e-12

_LAMBDA_COEF = np.array([0.1, 0.1, -0.1, 0.2])
_OUTCOME_COEF = np.array([0.2, 0.2, 0.3, -0.1])


@dataclass(frozen=True)
class DoseResponseDGP:
    """Four Gaussian covariates, Beta exposure, Bernoulli outcome.

    L ~ N(0, I4); the exposure A|L is Beta(lambda(L), 1 - lambda(L)) with
    lambda(L) = expit(-0.8 + 0.1 L1 + 0.1 L2 - 0.1 L3 + 0.2 L4); the outcome
    is Bernoulli with success probability ``mu(L, A)``. The ``smooth`` variant
    uses

        mu = expit(1 + 0.2 L1 + 0.2 L2 + 0.3 L3 - 0.1 L4
                   + 20 A (0.1 - 0.1 L1 + 0.1 L3 - 0.13^2 (20 A)^2)),

    and the ``cusp`` variant drops the 0.1 constant inside the 20A(...) factor
    and adds 5 * cusp(A), cusp(a) = a for a <= 0.15 and 0.15 - 2(a - 0.15)
    beyond, which kinks the counterfactual curve exactly at a = 0.15.
    """

    variant: str = VARIANT_SMOOTH
    dim_l: int = 4

    def __post_init__(self):
        if self.variant not in (VARIANT_SMOOTH, VARIANT_CUSP):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.dim_l != 4:
            raise ConfigError("the design is defined for exactly 4 covariates")

    # -- closed-form pieces ----------------------------------------------------

    def lam(self, l: np.ndarray) -> np.ndarray:
        """Beta shape parameter lambda(L) in (0, 1); l has shape (..., 4)."""
        l = np.asarray(l, dtype=float)
        return expit(-0.8 + l @ _LAMBDA_COEF)

    @staticmethod
    def cusp(a):
        a = np.asarray(a, dtype=float)
        return np.where(a <= 0.15, a, 0.15 - 2.0 * (a - 0.15))

    def mu(self, l: np.ndarray, a) -> np.ndarray:
        """Outcome probability mu(L, A); broadcasts l (..., 4) against a (...)."""
        l = np.asarray(l, dtype=float)
        a = np.asarray(a, dtype=float)
        base = 1.0 + l @ _OUTCOME_COEF
        slope = 0.1 * l[..., 2] - 0.1 * l[..., 0]
        if self.variant == VARIANT_SMOOTH:
            slope = slope + 0.1
        index = base + 20.0 * a * (slope - 0.13**2 * (20.0 * a) ** 2)
        if self.variant == VARIANT_CUSP:
            index = index + 5.0 * self.cusp(a)
        return expit(index)

    def propensity(self, a, w) -> np.ndarray:
        """Conditional exposure density g0(a|w): the Beta(lam, 1-lam) pdf.

        Gamma(lam) * Gamma(1 - lam) = pi / sin(pi * lam), so the normalizing
        constant is sin(pi * lam) / pi.
        """
        a = np.asarray(a, dtype=float)
        lam = self.lam(w)
        return np.sin(np.pi * lam) / np.pi * a ** (lam - 1.0) * (1.0 - a) ** (-lam)

    # -- sampling ---------------------------------------------------------------

    def sample(self, n: int, seed=None) -> Dataset:
        """n i.i.d. rows, deterministic given seed; Beta drawn as G1/(G1+G2)."""
        if n < 1:
            raise ConfigError(f"need n >= 1, got {n}")
        rng = derive_rng(seed, "dose-response", self.variant)
        l = rng.standard_normal((n, 4))
        lam = self.lam(l)
        g1 = rng.gamma(shape=lam)
        g2 = rng.gamma(shape=1.0 - lam)
        a = np.clip(g1 / (g1 + g2), _A_EDGE, 1.0 - _A_EDGE)
        y = (rng.random(n) < self.mu(l, a)).astype(float)
        return way_dataset(l, a, y)

    def make_family(self, kernel, target_point: float = 0.15) -> SmoothedFamily:
        return SmoothedFamily(
            kind=KIND_DOSE_RESPONSE,
            target_point=target_point,
            kernel=kernel,
            propensity=self.propensity,
        )


@dataclass(frozen=True)
class BinaryTreatmentDGP:
    """One uniform covariate, binary treatment, Bernoulli outcome.

    W ~ U(0, 1); P(A=1|W) is linear from ``g_low`` to ``g_high``; the outcome
    regression is expit(q_intercept + q_treat * A + q_cov * W). Small enough
    to integrate by one-dimensional quadrature, which is all the truncated
    counterfactual mean's tests need.
    """

    g_low: float = 0.25
    g_high: float = 0.75
    q_intercept: float = -0.5
    q_treat: float = 1.0
    q_cov: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.g_low <= self.g_high < 1.0):
            raise ConfigError("need 0 < g_low <= g_high < 1")

    def g1(self, w) -> np.ndarray:
        """P(A = 1 | W = w); w has shape (n, 1) or (n,)."""
        w = np.asarray(w, dtype=float)
        w0 = w[..., 0] if w.ndim > 1 else w
        return self.g_low + (self.g_high - self.g_low) * w0

    def propensity(self, a, w) -> np.ndarray:
        return self.g1(w)

    def qbar(self, a, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        w0 = w[..., 0] if w.ndim > 1 else w
        return expit(self.q_intercept + self.q_treat * np.asarray(a, dtype=float) + self.q_cov * w0)

    def sample(self, n: int, seed=None) -> Dataset:
        if n < 1:
            raise ConfigError(f"need n >= 1, got {n}")
        rng = derive_rng(seed, "binary-treatment")
        w = rng.random((n, 1))
        a = (rng.random(n) < self.g1(w)).astype(float)
        y = (rng.random(n) < self.qbar(a, w)).astype(float)
        return way_dataset(w, a, y)

    def make_family(self) -> SmoothedFamily:
        return SmoothedFamily(kind=KIND_COUNTERFACTUAL, propensity=self.propensity)


@dataclass(frozen=True)
class ScalarNormalDGP:
    """Scalar O ~ N(mean, sd^2) for the density-at-a-point family."""

    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        if self.sd <= 0.0:
            raise ConfigError("sd must be positive")

    def density(self, points) -> np.ndarray:
        z = (np.asarray(points, dtype=float) - self.mean) / self.sd
        return np.exp(-0.5 * z**2) / (self.sd * np.sqrt(2.0 * np.pi))

    def sample(self, n: int, seed=None) -> Dataset:
        if n < 1:
            raise ConfigError(f"need n >= 1, got {n}")
        rng = derive_rng(seed, "scalar-normal")
        return scalar_dataset(self.mean + self.sd * rng.standard_normal(n))

    def make_family(self, kernel, target_point: float = 0.0) -> SmoothedFamily:
        return SmoothedFamily(kind=KIND_DENSITY, target_point=target_point, kernel=kernel)


@dataclass(frozen=True)
class ScalarUniformDGP:
    """Scalar O ~ U(low, high); its density is flat, handy for exact checks."""

    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if not self.low < self.high:
            raise ConfigError("need low < high")

    def density(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        inside = (points >= self.low) & (points <= self.high)
        return inside / (self.high - self.low)

    def sample(self, n: int, seed=None) -> Dataset:
        if n < 1:
            raise ConfigError(f"need n >= 1, got {n}")
        rng = derive_rng(seed, "scalar-uniform")
        return scalar_dataset(rng.uniform(self.low, self.high, size=n))

    def make_family(self, kernel, target_point: float = 0.5) -> SmoothedFamily:
        return SmoothedFamily(kind=KIND_DENSITY, target_point=target_point, kernel=kernel)
