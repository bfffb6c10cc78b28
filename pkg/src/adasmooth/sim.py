"""Monte-Carlo benchmark of smoothing-level selectors on synthetic processes.

``run_benchmark`` pits the adaptive selector against deterministic rules of the
form delta = c * n^(-r) and against an infeasible grid-search oracle, on any of
the bundled data-generating processes. Every selector inside one replicate sees
the same dataset and the same three-way split (common random numbers), so
selector contrasts are paired. Replicates are independent jobs keyed only by
(n, replicate index): the table is bit-identical at any worker count, and any
cell can be re-run in isolation by reusing the same root seed.

Failed replicates (a selector raising one of this package's errors, e.g. a
degenerate rate estimate on an unlucky sample) are excluded from that
selector's aggregates and reported through the per-replicate records and
``BenchmarkTable.failure_counts``. Warnings raised inside a replicate are
suppressed; the record stream is the intended diagnostic channel.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .core import derive_seed, three_way_split
from .dgps import (
    BinaryTreatmentDGP,
    DoseResponseDGP,
    ScalarNormalDGP,
    ScalarUniformDGP,
)
from .errors import AdaSmoothError, ConfigError
from .estimator import AdaptiveConfig, estimate_adaptive, one_step
from .families import default_feasible_max, fit_nuisance, gradient_values
from .kernels import epanechnikov
from .oracle import true_psi

__all__ = [
    "BinaryTreatmentDGP",
    "DoseResponseDGP",
    "ScalarNormalDGP",
    "ScalarUniformDGP",
    "KIND_ADAPTIVE",
    "KIND_FIXED_RATE",
    "KIND_ORACLE_GRID",
    "DEFAULT_N_GRID",
    "DEFAULT_REPS",
    "SelectorSpec",
    "BenchmarkRow",
    "ReplicateRecord",
    "BenchmarkTable",
    "sample_dgp",
    "run_benchmark",
]

KIND_ADAPTIVE = "adaptive"
KIND_FIXED_RATE = "fixed_rate"
KIND_ORACLE_GRID = "oracle_grid"
_KINDS = (KIND_ADAPTIVE, KIND_FIXED_RATE, KIND_ORACLE_GRID)

DEFAULT_N_GRID = (3162, 10_000, 31_623)
DEFAULT_REPS = 100

_ORACLE_GRID_POINTS = 24
_ORACLE_GRID_SPAN = 50.0  # default grid runs from feasible_max/span to feasible_max


def sample_dgp(dgp, n: int, seed=None):
    """Draw ``n`` i.i.d. rows from ``dgp``; thin alias for ``dgp.sample``."""
    return dgp.sample(n, seed=seed)


@dataclass(frozen=True)
class SelectorSpec:
    """One competitor in the benchmark.

    kind "adaptive" runs the full data-driven pipeline; "fixed_rate" uses the
    deterministic level c * n^(-r); "oracle_grid" evaluates the one-step on a
    common grid of levels and reports the grid point minimising the true MSE —
    an infeasible benchmark, not an estimator. ``grid`` (oracle_grid only)
    overrides the default geometric grid; ``label`` overrides the display name.
    """

    kind: str
    c: float | None = None
    r: float | None = None
    grid: tuple[float, ...] | None = None
    label: str | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(
                f"unknown selector kind {self.kind!r}; expected one of {_KINDS}"
            )
        if self.kind == KIND_FIXED_RATE:
            if self.c is None or self.r is None:
                raise ConfigError("fixed_rate needs both c and r")
            if not (self.c > 0.0 and self.r > 0.0):
                raise ConfigError(f"fixed_rate needs c > 0 and r > 0, got c={self.c}, r={self.r}")
        elif self.c is not None or self.r is not None:
            raise ConfigError(f"c and r only apply to fixed_rate selectors, not {self.kind!r}")
        if self.grid is not None:
            if self.kind != KIND_ORACLE_GRID:
                raise ConfigError("grid only applies to oracle_grid selectors")
            grid = tuple(float(d) for d in self.grid)
            if len(grid) == 0 or any(d <= 0.0 for d in grid):
                raise ConfigError("oracle grid must be non-empty and positive")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError("oracle grid must be strictly increasing")
            object.__setattr__(self, "grid", grid)

    @property
    def name(self) -> str:
        if self.label is not None:
            return self.label
        if self.kind == KIND_FIXED_RATE:
            return f"fixed(c={self.c:g},r={self.r:g})"
        return "adaptive" if self.kind == KIND_ADAPTIVE else "oracle-grid"

    def delta_at(self, n: int) -> float:
        """The deterministic level c * n^(-r); fixed_rate only."""
        if self.kind != KIND_FIXED_RATE:
            raise ConfigError("delta_at applies to fixed_rate selectors only")
        return self.c * float(n) ** (-self.r)


@dataclass(frozen=True)
class BenchmarkRow:
    """Aggregate of one (selector, n) cell over its non-failed replicates.

    ``None`` marks a statistic with no defined value for the selector kind
    (e.g. ``mean_r_hat`` for the grid-search oracle); NaN is never used, so
    rows and records compare equal exactly when their contents agree.
    """

    selector: str
    n: int
    replicates: int
    mse: float
    mse_se: float | None
    coverage: float
    mean_delta: float
    mean_r_hat: float | None

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("a benchmark row needs at least one usable replicate")
        if not (0.0 <= self.coverage <= 1.0):
            raise ConfigError(f"coverage must lie in [0, 1], got {self.coverage}")


@dataclass(frozen=True)
class ReplicateRecord:
    """One (selector, n, replicate) outcome; failures keep their error name."""

    selector: str
    n: int
    rep: int
    ok: bool
    error: str
    delta: float | None
    r_hat: float | None
    estimate: float | None
    sqerr: float | None
    covered: float | None
    covered_alt: float | None


@dataclass(frozen=True)
class BenchmarkTable:
    """Benchmark output: aggregate rows plus the per-replicate record stream."""

    rows: tuple[BenchmarkRow, ...]
    records: tuple[ReplicateRecord, ...]
    true_psi: float
    alpha: float
    seed: int | None

    def failure_counts(self) -> dict[tuple[str, int], int]:
        """Failed-replicate counts keyed by (selector name, n); zeros omitted."""
        out: dict[tuple[str, int], int] = {}
        for rec in self.records:
            if not rec.ok:
                key = (rec.selector, rec.n)
                out[key] = out.get(key, 0) + 1
        return out

    def row(self, selector: str, n: int) -> BenchmarkRow:
        for r in self.rows:
            if r.selector == selector and r.n == n:
                return r
        raise KeyError((selector, n))


# --------------------------------------------------------------------------
# per-replicate execution
# --------------------------------------------------------------------------


def _split_seed(seed, n: int, rep: int) -> int:
    return int(derive_seed(seed, "bench-split", n, rep).generate_state(1, np.uint64)[0])


def _replicate_worker(args):
    """All selectors on one replicate's shared dataset and split.

    Returns one tuple per selector:
      ("ok",   delta, r_hat, estimate, ci_lo, ci_hi, aci_lo, aci_hi)
      ("grid", estimates (G,), ses (G,))
      ("fail", error type name)
    """
    dgp, family, selectors, n, rep, seed, alpha, p1, p2 = args
    data = dgp.sample(n, seed=(seed, "bench-data", n, rep))
    shuffle = _split_seed(seed, n, rep)
    plan = three_way_split(n, p1, p2, shuffle)
    z = ndtri(1.0 - alpha / 2.0)
    nan = float("nan")

    fit2 = None  # shared by fixed_rate and oracle_grid; built on demand

    def estimation_fit():
        nonlocal fit2
        if fit2 is None:
            fit2 = fit_nuisance(family, data, plan.s12)
        return fit2

    def fixed_ci(delta: float):
        fit = estimation_fit()
        est = one_step(family, fit, data, plan.s3, delta)
        values = gradient_values(family, fit, data, plan.s3, delta)
        se = float(np.std(values, ddof=1)) / np.sqrt(plan.s3.size)
        return est, se

    out = []
    for spec in selectors:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                if spec.kind == KIND_ADAPTIVE:
                    config = AdaptiveConfig(p1=p1, p2=p2, shuffle_seed=shuffle, alpha=alpha)
                    rep_out = estimate_adaptive(data, family, config)
                    out.append(
                        (
                            "ok",
                            rep_out.selection.delta_eps,
                            rep_out.selection.r_hat,
                            rep_out.point,
                            rep_out.ci_low,
                            rep_out.ci_high,
                            rep_out.alt_ci_low,
                            rep_out.alt_ci_high,
                        )
                    )
                elif spec.kind == KIND_FIXED_RATE:
                    delta = spec.delta_at(n)
                    est, se = fixed_ci(delta)
                    out.append(
                        ("ok", delta, spec.r, est, est - z * se, est + z * se, nan, nan)
                    )
                else:
                    grid = np.asarray(spec.grid, dtype=float)
                    ests = np.empty(grid.size)
                    ses = np.empty(grid.size)
                    for g, delta in enumerate(grid):
                        ests[g], ses[g] = fixed_ci(float(delta))
                    out.append(("grid", ests, ses))
        except AdaSmoothError as err:
            out.append(("fail", type(err).__name__))
    return out


# --------------------------------------------------------------------------
# aggregation
# --------------------------------------------------------------------------


def _jackknife_se(loo: np.ndarray) -> float | None:
    """Delete-one jackknife SE from the vector of leave-one-out statistics."""
    r = loo.size
    if r < 2:
        return None
    return float(np.sqrt((r - 1) / r * np.sum((loo - loo.mean()) ** 2)))


def _failed_record(spec, n, rep, error):
    return ReplicateRecord(spec.name, n, rep, False, error, None, None, None, None, None, None)


def _mean_row(spec, n, reps_out, truth):
    """Aggregate an adaptive or fixed_rate cell; returns (row, records)."""
    records, sqerrs, deltas, rhats, hits = [], [], [], [], []
    for rep, res in enumerate(reps_out):
        if res[0] == "fail":
            records.append(_failed_record(spec, n, rep, res[1]))
            continue
        _, delta, r_hat, est, lo, hi, alo, ahi = res
        covered = float(lo <= truth <= hi)
        covered_alt = float(alo <= truth <= ahi) if np.isfinite(alo) else None
        sqerr = (est - truth) ** 2
        records.append(
            ReplicateRecord(
                spec.name, n, rep, True, "", delta, r_hat, est, sqerr, covered, covered_alt
            )
        )
        sqerrs.append(sqerr)
        deltas.append(delta)
        rhats.append(r_hat)
        hits.append(covered)
    if not sqerrs:
        raise AdaSmoothError(f"all replicates failed for selector {spec.name!r} at n={n}")
    sq = np.asarray(sqerrs)
    loo = (sq.sum() - sq) / (sq.size - 1) if sq.size > 1 else sq
    row = BenchmarkRow(
        selector=spec.name,
        n=n,
        replicates=sq.size,
        mse=float(sq.mean()),
        mse_se=_jackknife_se(loo),
        coverage=float(np.mean(hits)),
        mean_delta=float(np.mean(deltas)),
        mean_r_hat=float(np.mean(rhats)),
    )
    return row, records


def _oracle_row(spec, n, reps_out, truth, z, grid):
    """Aggregate an oracle_grid cell: grid point minimising the estimated MSE."""
    records = []
    est_rows, se_rows, used_reps = [], [], []
    for rep, res in enumerate(reps_out):
        if res[0] == "fail":
            records.append(_failed_record(spec, n, rep, res[1]))
            continue
        est_rows.append(res[1])
        se_rows.append(res[2])
        used_reps.append(rep)
    if not est_rows:
        raise AdaSmoothError(f"all replicates failed for selector {spec.name!r} at n={n}")
    ests = np.vstack(est_rows)  # (R, G)
    ses = np.vstack(se_rows)
    sq = (ests - truth) ** 2
    mse_per_delta = sq.mean(axis=0)
    best = int(np.argmin(mse_per_delta))
    r = sq.shape[0]
    if r > 1:
        loo = np.min((sq.sum(axis=0)[None, :] - sq) / (r - 1), axis=1)
        se = _jackknife_se(loo)
    else:
        se = None
    lo = ests[:, best] - z * ses[:, best]
    hi = ests[:, best] + z * ses[:, best]
    hits = (lo <= truth) & (truth <= hi)
    for i, rep in enumerate(used_reps):
        records.append(
            ReplicateRecord(
                spec.name,
                n,
                rep,
                True,
                "",
                float(grid[best]),
                None,
                float(ests[i, best]),
                float(sq[i, best]),
                float(hits[i]),
                None,
            )
        )
    records.sort(key=lambda rec: rec.rep)
    row = BenchmarkRow(
        selector=spec.name,
        n=n,
        replicates=r,
        mse=float(mse_per_delta[best]),
        mse_se=se,
        coverage=float(hits.mean()),
        mean_delta=float(grid[best]),
        mean_r_hat=None,
    )
    return row, records


def _default_family(dgp):
    try:
        return dgp.make_family(epanechnikov())
    except TypeError:
        return dgp.make_family()


def _resolve_grids(dgp, family, selectors, n_list, seed):
    """A common level grid per (oracle_grid selector, n), shared by all replicates."""
    grids = {}
    for si, spec in enumerate(selectors):
        if spec.kind != KIND_ORACLE_GRID:
            continue
        for n in n_list:
            if spec.grid is not None:
                grids[(si, n)] = tuple(spec.grid)
                continue
            ref = dgp.sample(min(n, 4096), seed=(seed, "bench-grid-ref", n))
            top = default_feasible_max(family, ref)
            grid = np.geomspace(top / _ORACLE_GRID_SPAN, top, _ORACLE_GRID_POINTS)
            grids[(si, n)] = tuple(float(d) for d in grid)
    return grids


def run_benchmark(
    dgp,
    selectors,
    n_list=None,
    reps: int = DEFAULT_REPS,
    alpha: float = 0.05,
    seed=0,
    *,
    family=None,
    workers: int = 1,
    p1: float = 0.25,
    p2: float = 0.5,
) -> BenchmarkTable:
    """Benchmark every selector on every sample size over shared replicates.

    Within a replicate all selectors see one dataset and one split, so
    contrasts are paired; across replicates everything is keyed by
    (root seed, n, replicate index) only, making any cell independently
    reproducible and the output invariant to ``workers``.
    """
    selectors = tuple(selectors)
    if not selectors:
        raise ConfigError("need at least one selector")
    if reps < 2:
        raise ConfigError(f"need reps >= 2, got {reps}")
    if not (0.0 < alpha < 1.0):
        raise ConfigError(f"need 0 < alpha < 1, got {alpha}")
    if workers < 1:
        raise ConfigError(f"need workers >= 1, got {workers}")
    n_list = tuple(int(n) for n in (DEFAULT_N_GRID if n_list is None else n_list))
    if not n_list or any(n < 6 for n in n_list):
        raise ConfigError("every sample size must be at least 6")

    if family is None:
        family = _default_family(dgp)
    truth = true_psi(dgp, family.target_point)
    z = float(ndtri(1.0 - alpha / 2.0))
    grids = _resolve_grids(dgp, family, selectors, n_list, seed)

    # oracle_grid specs are shipped to workers with their grid already resolved
    jobs = []
    for n in n_list:
        per_n = tuple(
            spec
            if spec.kind != KIND_ORACLE_GRID
            else SelectorSpec(
                kind=spec.kind, grid=grids[(si, n)], label=spec.label
            )
            for si, spec in enumerate(selectors)
        )
        for rep in range(reps):
            jobs.append((dgp, family, per_n, n, rep, seed, alpha, p1, p2))

    if workers == 1:
        results = [_replicate_worker(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_worker, jobs, chunksize=1))

    by_cell: dict[tuple[int, int], list] = {}
    for job, res in zip(jobs, results):
        n, rep = job[3], job[4]
        by_cell[(n, rep)] = res

    rows: list[BenchmarkRow] = []
    records: list[ReplicateRecord] = []
    for si, spec in enumerate(selectors):
        for n in n_list:
            reps_out = [by_cell[(n, rep)][si] for rep in range(reps)]
            if spec.kind == KIND_ORACLE_GRID:
                row, recs = _oracle_row(spec, n, reps_out, truth, z, grids[(si, n)])
            else:
                row, recs = _mean_row(spec, n, reps_out, truth)
            rows.append(row)
            records.extend(recs)
    return BenchmarkTable(
        rows=tuple(rows),
        records=tuple(records),
        true_psi=truth,
        alpha=alpha,
        seed=seed,
    )
