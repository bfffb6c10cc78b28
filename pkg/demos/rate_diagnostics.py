"""
Looking at the log-log curves behind the smoothing choice
=========================================================

The selector estimates three exponents from one held-out split: how fast the
bias slope |b'(delta)| and the gradient sd sigma(delta) move with the
smoothing level.  On log-log axes these are straight lines when the scalings
are clean power laws.  This script prints the raw grid the anchor scan looks
at, then the fitted exponents and the resulting choice.
"""

import numpy as np

from adasmooth import (
    ScalarNormalDGP,
    default_feasible_max,
    epanechnikov,
    estimate_rates,
    finite_diff_b_prime,
    fit_nuisance,
    scan_anchors,
    select_smoothing,
    sigma_hat,
    three_way_split,
)

dgp = ScalarNormalDGP()
data = dgp.sample(8_000, seed=5)
family = dgp.make_family(epanechnikov(), target_point=0.0)
plan = three_way_split(data.n)
fit1 = fit_nuisance(family, data, plan.s1)

top = default_feasible_max(family, data)
grid = np.geomspace(top / 4.0, top, 10)
gap_base = plan.s2.size ** -0.25

print(" delta     |b'(delta)|   sigma(delta)")
for d in grid:
    b = finite_diff_b_prime(family, fit1, data, plan.s2, d, min(gap_base, d / 2.0))
    s = sigma_hat(family, fit1, data, plan.s2, d)
    print(f"{d:8.4f}   {abs(b):10.5f}   {s:10.5f}")

anchors = scan_anchors(family, fit1, data, plan.s2, grid)
rates = estimate_rates(family, fit1, data, plan.s2, anchors)
sel = select_smoothing(rates, m=plan.s3.size, feasible_max=top)

print()
print(f"anchors: delta1={anchors.delta1:.4f} delta2={anchors.delta2:.4f} gap={anchors.gap:.4f}")
print(f"exponents: beta={rates.beta_hat:.3f} gamma={rates.gamma_hat:.3f} nu={rates.nu_hat:.3f}")
print(f"constants: C_b'={rates.c_bprime:.4f} C_sigma={rates.c_sigma:.4f} C_sigma'={rates.c_sigmaprime:.4f}")
print(f"choice: r_hat={sel.r_hat:.3f} C_hat={sel.c_hat:.4f} -> delta_eps={sel.delta_eps:.4f} (m={sel.m})")
