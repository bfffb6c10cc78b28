"""
Desk-scale Monte-Carlo benchmark: adaptive vs fixed vs oracle
=============================================================

Replays the estimator comparison at a small scale: the adaptive selector
against fixed rules delta = C * n^(-1/7) and against an oracle that picks the
best level on a grid by peeking at the truth.  All selectors see the same
data within a replicate, so differences are paired.  Takes about a minute.
"""

from adasmooth import DoseResponseDGP, SelectorSpec, run_benchmark

dgp = DoseResponseDGP(variant="smooth")
selectors = [
    SelectorSpec(kind="adaptive"),
    SelectorSpec(kind="fixed_rate", c=0.05, r=1 / 7),
    SelectorSpec(kind="fixed_rate", c=0.132, r=1 / 7),
    SelectorSpec(kind="oracle_grid"),
]

table = run_benchmark(dgp, selectors, n_list=[2_000], reps=20, seed=1)

print(f"truth {table.true_psi:.5f}; {len(table.records)} replicate records")
print()
print(f"{'selector':28s} {'mse':>10s} {'se':>9s} {'coverage':>9s} {'mean delta':>11s}")
for row in table.rows:
    se = "-" if row.mse_se is None else f"{row.mse_se:.2e}"
    print(f"{row.selector:28s} {row.mse:10.2e} {se:>9s} {row.coverage:9.2f} {row.mean_delta:11.4f}")

failures = table.failure_counts()
print()
print("failed replicates:", failures if failures else "none")
