"""Smoothing kernels, their scaled evaluations, moments, and order-4 variants.

A :class:`Kernel` is immutable; every integral property (unit mass, vanishing
odd moments, squared L2 norm) is verified at construction time by 64-node
Gauss-Legendre quadrature over the support (Gaussian support truncated at +-8,
where the neglected tail mass is ~1e-15).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonPositiveBandwidth, QuadratureFailure, UnsupportedOrder

__all__ = [
    "Kernel",
    "epanechnikov",
    "gaussian",
    "uniform",
    "make_higher_order",
    "kernel_by_name",
    "scaled_kernel_eval",
    "kernel_l2sq",
    "kernel_quadrature_nodes",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)
_GAUSSIAN_TRUNCATION = 8.0
_MASS_TOL = 1e-8


def _quad_support(fn: Callable, radius: float) -> float:
    """64-node Gauss-Legendre integral of ``fn`` over [-radius, radius]."""
    u = radius * _GL_NODES
    return float(radius * np.sum(_GL_WEIGHTS * fn(u)))


@dataclass(frozen=True)
class Kernel:
    """A symmetric kernel with unit mass and finite squared L2 norm.

    Attributes
    ----------
    name : str
        Identifier used in configs (``epanechnikov``, ``gaussian``, ``uniform``
        optionally suffixed with ``-o4`` for the fourth-order variant).
    order : int
        Lowest non-vanishing moment; 2 for the base kernels, 4 for twiced ones.
    support_radius : float
        Half-width of the support; ``inf`` for the Gaussian.
    l2sq : float
        Cached squared L2 norm, integral of K(u)^2 du.
    """

    name: str
    order: int
    support_radius: float
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    l2sq: float = 0.0

    def __post_init__(self):
        r = self.effective_radius
        mass = _quad_support(self.fn, r)
        if abs(mass - 1.0) > _MASS_TOL:
            raise QuadratureFailure(f"kernel {self.name}: mass {mass!r} != 1")
        # symmetry spot check plus vanishing moments below the order
        probe = np.linspace(0.0, r, 17)
        if not np.allclose(self.fn(probe), self.fn(-probe), rtol=0, atol=1e-12):
            raise QuadratureFailure(f"kernel {self.name}: not symmetric")
        for k in range(1, self.order):
            mk = _quad_support(lambda u, k=k: (u**k) * self.fn(u), r)
            if abs(mk) > _MASS_TOL:
                raise QuadratureFailure(
                    f"kernel {self.name}: moment {k} = {mk!r} does not vanish"
                )
        object.__setattr__(self, "l2sq", _quad_support(lambda u: self.fn(u) ** 2, r))

    @property
    def effective_radius(self) -> float:
        """Support radius usable by quadrature (Gaussian truncated at +-8)."""
        return min(self.support_radius, _GAUSSIAN_TRUNCATION)

    def __call__(self, u) -> np.ndarray:
        return self.fn(np.asarray(u, dtype=float))

    def scaled(self, points, center: float, delta: float) -> np.ndarray:
        """Evaluate the centered, scaled kernel ``K((points - center)/delta) / delta``."""
        if delta <= 0:
            raise NonPositiveBandwidth(f"delta = {delta}")
        pts = np.asarray(points, dtype=float)
        return self.fn((pts - center) / delta) / delta

    def moment(self, k: int) -> float:
        """Integral of u^k K(u) du over the (effective) support."""
        return _quad_support(lambda u: (u**k) * self.fn(u), self.effective_radius)


def _epan_fn(u: np.ndarray) -> np.ndarray:
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def _gauss_fn(u: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi)


def _unif_fn(u: np.ndarray) -> np.ndarray:
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


def epanechnikov() -> Kernel:
    return Kernel(name="epanechnikov", order=2, support_radius=1.0, fn=_epan_fn)


def gaussian() -> Kernel:
    return Kernel(name="gaussian", order=2, support_radius=np.inf, fn=_gauss_fn)


def uniform() -> Kernel:
    return Kernel(name="uniform", order=2, support_radius=1.0, fn=_unif_fn)


def make_higher_order(base: Kernel, target_order: int) -> Kernel:
    """Raise a symmetric order-2 kernel to order 4 by polynomial multiplication.

    The order-4 kernel is a(u) = (b0 + b1 u^2) K(u) with (b0, b1) solved from
    the unit-mass and zero-second-moment constraints. ``target_order=2``
    returns the base kernel unchanged.
    """
    if target_order == 2:
        return base
    if target_order != 4:
        raise UnsupportedOrder(f"order {target_order} not supported (only 2 and 4)")
    m0, m2, m4 = 1.0, base.moment(2), base.moment(4)
    # [[m0, m2], [m2, m4]] @ [b0, b1] = [1, 0]
    det = m0 * m4 - m2 * m2
    if abs(det) < 1e-14:
        raise UnsupportedOrder(f"kernel {base.name}: degenerate moment system")
    b0 = m4 / det
    b1 = -m2 / det
    base_fn = base.fn

    def fourth(u: np.ndarray) -> np.ndarray:
        return (b0 + b1 * u * u) * base_fn(u)

    return Kernel(
        name=f"{base.name}-o4",
        order=4,
        support_radius=base.support_radius,
        fn=fourth,
    )


def kernel_by_name(name: str, order: int = 2) -> Kernel:
    """Construct a shipped kernel from its config name."""
    table = {"epanechnikov": epanechnikov, "gaussian": gaussian, "uniform": uniform}
    if name not in table:
        raise UnsupportedOrder(f"unknown kernel {name!r} (choose from {sorted(table)})")
    return make_higher_order(table[name](), order)


# Functional aliases matching the operation-level API.


def scaled_kernel_eval(kernel: Kernel, delta: float, center: float, point) -> float:
    """delta^{-1} K((point - center)/delta); zero outside the scaled support."""
    out = kernel.scaled(point, center, delta)
    return float(out) if np.isscalar(point) or np.ndim(point) == 0 else out


def kernel_l2sq(kernel: Kernel) -> float:
    """Cached integral of K(u)^2 du."""
    return kernel.l2sq


def kernel_quadrature_nodes(
    kernel: Kernel,
    center: float,
    delta: float,
    clip: tuple[float, float] | None = None,
):
    """Gauss-Legendre nodes and kernel-premultiplied weights for smoothed integrals.

    Returns ``(nodes, kweights)`` such that ``sum(kweights * f(nodes))``
    approximates the integral of ``K_{delta,center}(a) f(a) da`` over the kernel
    support window ``[center - delta*R, center + delta*R]``, intersected with
    ``clip`` when given. An empty intersection returns two empty arrays.
    """
    if delta <= 0:
        raise NonPositiveBandwidth(f"delta = {delta}")
    r = kernel.effective_radius
    lo, hi = center - delta * r, center + delta * r
    if clip is not None:
        lo, hi = max(lo, clip[0]), min(hi, clip[1])
    if hi <= lo:
        return np.empty(0), np.empty(0)
    nodes = 0.5 * (hi - lo) * _GL_NODES + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * _GL_WEIGHTS * kernel.scaled(nodes, center, delta)
    return nodes, weights
