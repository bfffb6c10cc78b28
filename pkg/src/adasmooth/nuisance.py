"""Product-kernel Nadaraya-Watson regression of an outcome on (exposure, covariates).

The regression weight of training row t at an evaluation point (a, w) is

    prod_j (1 - u_j^2)_+  *  exp(-0.5 * v^2),   u_j = (w_j - W_tj) / h_j,
                                                v   = (a - A_t) / h_a,

i.e. an Epanechnikov product over covariate coordinates and a Gaussian factor in
the exposure. The compact covariate support lets a KD-tree prune the sum to the
local neighborhood, which keeps evaluation near-linear in n; the Gaussian
exposure factor keeps the denominator strictly positive wherever at least one
covariate neighbor exists. Rows whose covariate neighborhood is empty (or
carries zero weight) double their local bandwidth, deterministically, until it
is usable.

Bandwidths follow the rule of thumb h_j = 1.06 * sd_j * m^(-1/(4+p)) with p the
total covariate count (exposure included).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

__all__ = ["KernelRegression", "CallableRegression", "rule_of_thumb_bandwidths"]

_MAX_DOUBLINGS = 60
_MAX_CACHED_CONTEXTS = 4
# cap on pairs*nodes of float64 scratch per profile block (~64 MB)
_PROFILE_BLOCK_BUDGET = 8_000_000


def rule_of_thumb_bandwidths(x: np.ndarray) -> np.ndarray:
    """Per-column 1.06 * sd * m^(-1/(4+p)) bandwidths for an (m, p) design."""
    m, p = x.shape
    sd = np.std(x, axis=0)
    h = 1.06 * sd * m ** (-1.0 / (4.0 + p))
    # a constant column carries no information; any positive width works
    h[h == 0.0] = 1.0
    return h


def _epan_product(diff: np.ndarray) -> np.ndarray:
    """Row-wise product of (1 - u^2)_+ factors; `diff` already bandwidth-scaled."""
    return np.prod(np.maximum(0.0, 1.0 - diff * diff), axis=-1)


@dataclass
class _Context:
    """Flattened neighbor structure for one evaluation design."""

    nb: np.ndarray  # neighbor train indices, flattened over rows
    offsets: np.ndarray  # row i owns pairs offsets[i]:offsets[i+1]
    w_weight: np.ndarray  # covariate-kernel weights per pair, all rows total > 0
    widened: int  # rows that needed bandwidth doubling


class KernelRegression:
    """Nadaraya-Watson smoother fitted on (a, w) -> y with vectorized evaluation."""

    def __init__(self, a, w, y, clamp: tuple[float, float] | None = None):
        self.a = np.asarray(a, dtype=float)
        self.w = np.atleast_2d(np.asarray(w, dtype=float))
        self.y = np.asarray(y, dtype=float)
        self.clamp = clamp
        design = np.column_stack([self.a, self.w])
        h = rule_of_thumb_bandwidths(design)
        self.h_a = float(h[0])
        self.h_w = h[1:]
        self.degenerate = bool(np.all(self.y == self.y[0]))
        self._scaled_train = self.w / self.h_w
        self._tree = cKDTree(self._scaled_train)
        self._contexts: dict = {}
        self.clamp_count = 0
        self.widened_rows = 0

    # -- neighbor machinery ------------------------------------------------

    def _repair_row(self, w_row: np.ndarray, scaled_row: np.ndarray):
        """Widen one row's bandwidth until its neighborhood carries weight."""
        for k in range(1, _MAX_DOUBLINGS + 1):
            mult = 2.0**k
            idx = np.asarray(
                self._tree.query_ball_point(scaled_row, r=mult, p=np.inf),
                dtype=np.int64,
            )
            if idx.size == 0:
                continue
            ww = _epan_product((w_row - self.w[idx]) / (self.h_w * mult))
            if np.any(ww > 0.0):
                return idx, ww
        j = int(self._tree.query(scaled_row)[1])  # pragma: no cover - unreachable
        return np.array([j], dtype=np.int64), np.ones(1)  # pragma: no cover

    def _context(self, w_eval: np.ndarray) -> _Context:
        key = (w_eval.shape, hash(w_eval.tobytes()))
        ctx = self._contexts.get(key)
        if ctx is not None:
            return ctx
        m = w_eval.shape[0]
        scaled = w_eval / self.h_w
        lists = self._tree.query_ball_point(scaled, r=1.0, p=np.inf)
        per_nb = [np.asarray(l, dtype=np.int64) for l in lists]
        counts = np.fromiter((x.size for x in per_nb), dtype=np.int64, count=m)
        nb = (
            np.concatenate(per_nb)
            if counts.sum() > 0
            else np.empty(0, dtype=np.int64)
        )
        rows = np.repeat(np.arange(m), counts)
        w_weight = (
            _epan_product((w_eval[rows] - self.w[nb]) / self.h_w)
            if nb.size
            else np.empty(0)
        )
        row_total = np.bincount(rows, weights=w_weight, minlength=m)
        bad = np.nonzero(row_total == 0.0)[0]
        widened = int(bad.size)
        if widened:
            seg_nb = np.split(nb, np.cumsum(counts)[:-1])
            seg_ww = np.split(w_weight, np.cumsum(counts)[:-1])
            for i in bad:
                seg_nb[i], seg_ww[i] = self._repair_row(w_eval[i], scaled[i])
            counts = np.fromiter((x.size for x in seg_nb), dtype=np.int64, count=m)
            nb = np.concatenate(seg_nb)
            w_weight = np.concatenate(seg_ww)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        ctx = _Context(nb=nb, offsets=offsets, w_weight=w_weight, widened=widened)
        if len(self._contexts) >= _MAX_CACHED_CONTEXTS:
            self._contexts.pop(next(iter(self._contexts)))
        self._contexts[key] = ctx
        self.widened_rows += widened
        return ctx

    # -- evaluation ---------------------------------------------------------

    def _clamped(self, q: np.ndarray) -> np.ndarray:
        if self.clamp is None:
            return q
        lo, hi = self.clamp
        out = np.clip(q, lo, hi)
        self.clamp_count += int(np.sum((q < lo) | (q > hi)))
        return out

    def predict(self, a_eval, w_eval) -> np.ndarray:
        """Fitted regression at paired points (a_eval[i], w_eval[i])."""
        a_eval = np.asarray(a_eval, dtype=float)
        w_eval = np.atleast_2d(np.asarray(w_eval, dtype=float))
        ctx = self._context(w_eval)
        rows = np.repeat(np.arange(w_eval.shape[0]), np.diff(ctx.offsets))
        v = (a_eval[rows] - self.a[ctx.nb]) / self.h_a
        pair = ctx.w_weight * np.exp(-0.5 * v * v)
        num = np.add.reduceat(pair * self.y[ctx.nb], ctx.offsets[:-1])
        den = np.add.reduceat(pair, ctx.offsets[:-1])
        return self._clamped(num / den)

    def profile(self, a_grid, w_eval) -> np.ndarray:
        """Regression on the grid product: out[i, j] = qbar(a_grid[j], w_eval[i])."""
        a_grid = np.asarray(a_grid, dtype=float)
        w_eval = np.atleast_2d(np.asarray(w_eval, dtype=float))
        m, k = w_eval.shape[0], a_grid.size
        if k == 0:
            return np.zeros((m, 0))
        ctx = self._context(w_eval)
        out = np.empty((m, k))
        worst = max(1, int(np.diff(ctx.offsets).max()))
        block = max(1, _PROFILE_BLOCK_BUDGET // (k * worst))
        for start in range(0, m, block):
            stop = min(start + block, m)
            sl = slice(ctx.offsets[start], ctx.offsets[stop])
            nb = ctx.nb[sl]
            v = (a_grid[None, :] - self.a[nb][:, None]) / self.h_a
            pair = ctx.w_weight[sl][:, None] * np.exp(-0.5 * v * v)
            offs = ctx.offsets[start : stop + 1] - ctx.offsets[start]
            num = np.add.reduceat(pair * self.y[nb][:, None], offs[:-1], axis=0)
            den = np.add.reduceat(pair, offs[:-1], axis=0)
            out[start:stop] = num / den
        return self._clamped(out)


class CallableRegression:
    """Adapter giving an injected regression function the same evaluation API."""

    def __init__(self, fn, clamp: tuple[float, float] | None = None):
        self.fn = fn
        self.clamp = clamp
        self.clamp_count = 0
        self.degenerate = False
        self.widened_rows = 0

    def _clamped(self, q: np.ndarray) -> np.ndarray:
        if self.clamp is None:
            return q
        lo, hi = self.clamp
        out = np.clip(q, lo, hi)
        self.clamp_count += int(np.sum((q < lo) | (q > hi)))
        return out

    def predict(self, a_eval, w_eval) -> np.ndarray:
        a_eval = np.asarray(a_eval, dtype=float)
        w_eval = np.atleast_2d(np.asarray(w_eval, dtype=float))
        return self._clamped(np.asarray(self.fn(a_eval, w_eval), dtype=float))

    def profile(self, a_grid, w_eval) -> np.ndarray:
        a_grid = np.asarray(a_grid, dtype=float)
        w_eval = np.atleast_2d(np.asarray(w_eval, dtype=float))
        m, k = w_eval.shape[0], a_grid.size
        if k == 0:
            return np.zeros((m, 0))
        a_flat = np.tile(a_grid, m)
        w_flat = np.repeat(w_eval, k, axis=0)
        vals = np.asarray(self.fn(a_flat, w_flat), dtype=float).reshape(m, k)
        return self._clamped(vals)
