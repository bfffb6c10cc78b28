"""Data model, deterministic three-way splitting, and empirical-moment primitives.

Everything downstream (families, selector, estimator, benchmark) consumes the
:class:`Dataset` container and the :class:`SplitPlan` produced here. All functions
are pure: same inputs, bit-identical outputs.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptySample,
    InvalidProportions,
    SchemaMismatch,
    SplitTooSmall,
)

__all__ = [
    "SCHEMA_SCALAR",
    "SCHEMA_WAY",
    "Observation",
    "Dataset",
    "SplitPlan",
    "scalar_dataset",
    "way_dataset",
    "three_way_split",
    "empirical_mean",
    "empirical_centered_second_moment",
    "derive_rng",
    "derive_seed",
    "read_dataset_csv",
    "write_dataset_csv",
]

SCHEMA_SCALAR = "scalar"
SCHEMA_WAY = "waY"

# minimum subsample sizes: nuisance fit needs >= 1 row, moment estimates need >= 2
_MIN_S1, _MIN_S2, _MIN_S3 = 1, 2, 2


@dataclass(frozen=True)
class Observation:
    """One data row: either a scalar ``o`` or a covariates/exposure/outcome triple."""

    o: float | None = None
    w: np.ndarray | None = None
    a: float | None = None
    y: float | None = None

    def __post_init__(self):
        scalar = self.o is not None
        triple = self.w is not None and self.a is not None and self.y is not None
        if scalar == triple:
            raise SchemaMismatch(
                "an observation carries either `o` alone or the full (w, a, y) triple"
            )


@dataclass(frozen=True)
class Dataset:
    """Column-major container for n observations of a single schema.

    Parameters
    ----------
    schema : str
        ``"scalar"`` (column ``o``) or ``"waY"`` (columns ``w``, ``a``, ``y``).
    o : ndarray of shape (n,), optional
    w : ndarray of shape (n, d), optional
    a, y : ndarray of shape (n,), optional
    """

    schema: str
    o: np.ndarray | None = None
    w: np.ndarray | None = None
    a: np.ndarray | None = None
    y: np.ndarray | None = None

    def __post_init__(self):
        if self.schema == SCHEMA_SCALAR:
            if self.o is None or self.w is not None or self.a is not None:
                raise SchemaMismatch("scalar schema requires exactly the `o` column")
            if self.o.ndim != 1 or self.o.size == 0:
                raise SchemaMismatch("`o` must be a non-empty 1-d array")
        elif self.schema == SCHEMA_WAY:
            if self.o is not None or self.w is None or self.a is None or self.y is None:
                raise SchemaMismatch("waY schema requires the `w`, `a`, `y` columns")
            if self.w.ndim != 2 or self.w.shape[0] == 0:
                raise SchemaMismatch("`w` must be a non-empty (n, d) array")
            if self.a.shape != (self.w.shape[0],) or self.y.shape != self.a.shape:
                raise SchemaMismatch("`a` and `y` must be length-n 1-d arrays")
        else:
            raise SchemaMismatch(f"unknown schema {self.schema!r}")
        for col in (self.o, self.w, self.a, self.y):
            if col is not None and not np.all(np.isfinite(col)):
                raise SchemaMismatch("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return self.o.shape[0] if self.schema == SCHEMA_SCALAR else self.w.shape[0]

    @property
    def dim_w(self) -> int:
        if self.schema != SCHEMA_WAY:
            raise SchemaMismatch("dim_w is defined for the waY schema only")
        return self.w.shape[1]

    def row(self, i: int) -> Observation:
        if self.schema == SCHEMA_SCALAR:
            return Observation(o=float(self.o[i]))
        return Observation(w=self.w[i].copy(), a=float(self.a[i]), y=float(self.y[i]))


def scalar_dataset(o) -> Dataset:
    return Dataset(schema=SCHEMA_SCALAR, o=np.asarray(o, dtype=float))


def way_dataset(w, a, y) -> Dataset:
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    return Dataset(
        schema=SCHEMA_WAY,
        w=w,
        a=np.asarray(a, dtype=float),
        y=np.asarray(y, dtype=float),
    )


@dataclass(frozen=True)
class SplitPlan:
    """Deterministic three-way partition of row indices {0..n-1}.

    ``s1`` feeds the first nuisance fit, ``s2`` the rate-estimation averages,
    ``s3`` the final correction average; ``m = n - l2`` is the size of ``s3``.
    """

    n: int
    l1: int
    l2: int
    p1: float
    p2: float
    s1: np.ndarray = field(repr=False)
    s2: np.ndarray = field(repr=False)
    s3: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return self.n - self.l2

    @property
    def s12(self) -> np.ndarray:
        """Union of the first two subsamples (second-stage nuisance fit)."""
        return np.concatenate([self.s1, self.s2])


def three_way_split(
    n: int,
    p1: float = 0.25,
    p2: float = 0.5,
    shuffle_seed: int | None = None,
) -> SplitPlan:
    """Split {0..n-1} into three consecutive blocks of proportions (p1, p2-p1, 1-p2).

    Parameters
    ----------
    n : int
        Number of rows; must be at least 6.
    p1, p2 : float
        Cut proportions, 0 < p1 < p2 < 1. Block boundaries use floor(p*n).
    shuffle_seed : int, optional
        If given, indices are permuted with a seeded generator before the
        contiguous assignment; otherwise identity order is used. Either way the
        result is reproducible bit-for-bit.

    Returns
    -------
    SplitPlan
    """
    if not (0.0 < p1 < p2 < 1.0):
        raise InvalidProportions(f"need 0 < p1 < p2 < 1, got p1={p1}, p2={p2}")
    if n < 6:
        raise SplitTooSmall(f"need n >= 6, got n={n}")
    l1 = int(np.floor(p1 * n))
    l2 = int(np.floor(p2 * n))
    if l1 < _MIN_S1 or (l2 - l1) < _MIN_S2 or (n - l2) < _MIN_S3:
        raise SplitTooSmall(
            f"split sizes ({l1}, {l2 - l1}, {n - l2}) below minimum "
            f"({_MIN_S1}, {_MIN_S2}, {_MIN_S3})"
        )
    if shuffle_seed is None:
        order = np.arange(n)
    else:
        order = derive_rng(shuffle_seed, 0).permutation(n)
    return SplitPlan(
        n=n,
        l1=l1,
        l2=l2,
        p1=p1,
        p2=p2,
        s1=order[:l1],
        s2=order[l1:l2],
        s3=order[l2:],
    )


def empirical_mean(values) -> float:
    """Arithmetic mean of a non-empty collection of finite reals."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise EmptySample("empirical_mean of an empty sample")
    return float(np.mean(v))


def empirical_centered_second_moment(values) -> float:
    """Mean squared deviation from the mean, with the size-n (population) divisor."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise EmptySample("centered second moment needs at least 2 values")
    return float(np.var(v))


def _entropy_word(part) -> int:
    """Map a path component (int or short label) to a stable 64-bit word."""
    if isinstance(part, (int, np.integer)):
        return int(part)
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed(root: int | None, *path) -> np.random.SeedSequence:
    """Counter-based seed derivation: (root, stream-label, replicate-id, ...).

    Any sub-computation keyed by the same path is re-runnable in isolation;
    string labels are hashed stably so paths can mix names and counters.
    A ``None`` root yields fresh OS entropy (non-reproducible, for ad-hoc use).
    """
    if root is None:
        return np.random.SeedSequence()
    return np.random.SeedSequence(entropy=[_entropy_word(root), *map(_entropy_word, path)])


def derive_rng(root: int | None, *path: int) -> np.random.Generator:
    """Generator seeded by :func:`derive_seed`."""
    return np.random.default_rng(derive_seed(root, *path))


# ---------------------------------------------------------------------------
# CSV ingestion: header row, UTF-8, comma separator, decimal-point reals.
# Scalar schema: column `o`. waY schema: columns w1..wd, a, y.
# Lines starting with '#' are comments and skipped.
# ---------------------------------------------------------------------------


def read_dataset_csv(path) -> Dataset:
    """Read a dataset from CSV, inferring the schema from the header row."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise SchemaMismatch(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise SchemaMismatch(f"{path}: no data rows")
    try:
        values = np.array([[float(x) for x in r] for r in body], dtype=float)
    except ValueError as exc:
        raise SchemaMismatch(f"{path}: non-numeric cell ({exc})") from exc
    if values.shape[1] != len(header):
        raise SchemaMismatch(f"{path}: ragged rows")
    if header == ["o"]:
        return scalar_dataset(values[:, 0])
    d = len(header) - 2
    expected = [f"w{j}" for j in range(1, d + 1)] + ["a", "y"]
    if d >= 1 and header == expected:
        return way_dataset(values[:, :d], values[:, d], values[:, d + 1])
    raise SchemaMismatch(
        f"{path}: header must be ['o'] or ['w1'..'wd','a','y'], got {header}"
    )


def write_dataset_csv(data: Dataset, path) -> None:
    """Write a dataset in the same CSV layout :func:`read_dataset_csv` reads."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh)
        if data.schema == SCHEMA_SCALAR:
            out.writerow(["o"])
            for v in data.o:
                out.writerow([repr(float(v))])
        else:
            d = data.dim_w
            out.writerow([f"w{j}" for j in range(1, d + 1)] + ["a", "y"])
            for i in range(data.n):
                out.writerow(
                    [repr(float(x)) for x in data.w[i]]
                    + [repr(float(data.a[i])), repr(float(data.y[i]))]
                )
