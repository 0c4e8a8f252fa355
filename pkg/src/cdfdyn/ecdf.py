"""Empirical CDFs of cycle panels and their weighted L2 inner products.

A panel holds one sorted sample per cycle. The geometry downstream only
ever touches the panel through inner products <F_t, F_s> = int F_t F_s dmu,
which for step functions reduce to tail-mass sums; this module computes
them exactly, both pairwise and as the full centered Gram matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError
from .measure import WeightMeasure, tail_mass

__all__ = [
    "EmpiricalCdf",
    "CyclePanel",
    "CenteredGram",
    "ecdf_eval",
    "panel_cdf_matrix",
    "inner_product",
    "mean_inner_products",
    "pairwise_raw_gram",
    "signed_combo_moment",
]


def _check_sample(arr: np.ndarray, label: str):
    if arr.ndim != 1 or arr.size == 0:
        raise DataError(f"{label}: need a nonempty 1-d sample")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{label}: sample contains non-finite values")
    if np.any(np.diff(arr) < 0):
        raise DataError(f"{label}: sample must be sorted ascending")


@dataclass(frozen=True, eq=False)
class EmpiricalCdf:
    """Empirical CDF of one cycle; `samples` is sorted ascending."""

    samples: np.ndarray

    @staticmethod
    def from_samples(values) -> "EmpiricalCdf":
        arr = np.sort(np.asarray(values, dtype=float))
        _check_sample(arr, "cycle")
        return EmpiricalCdf(arr)

    @property
    def q(self) -> int:
        return len(self.samples)


@dataclass(eq=False)
class CyclePanel:
    """Ordered collection of cycles, each a sorted 1-d sample.

    Attributes
    ----------
    cycles : list of ndarray
        One sorted sample per cycle, in time order. At least two cycles.
    labels : list of str, optional
        Cycle identifiers (dates, indices) carried through to outputs.
    """

    cycles: list
    labels: list | None = None

    def __post_init__(self):
        if len(self.cycles) < 2:
            raise DataError(f"panel needs at least 2 cycles, got {len(self.cycles)}")
        for t, c in enumerate(self.cycles):
            _check_sample(np.asarray(c), f"cycle {t}")
        if self.labels is not None and len(self.labels) != len(self.cycles):
            raise DataError("labels length must match number of cycles")

    @staticmethod
    def from_values(groups, labels=None) -> "CyclePanel":
        """Build a panel from unsorted per-cycle value arrays."""
        cycles = [np.sort(np.asarray(g, dtype=float)) for g in groups]
        return CyclePanel(cycles, labels=list(labels) if labels is not None else None)

    @property
    def n(self) -> int:
        return len(self.cycles)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.cycles])

    def head(self, n: int) -> "CyclePanel":
        """First n cycles (training slice for rolling schemes)."""
        labels = self.labels[:n] if self.labels is not None else None
        return CyclePanel(self.cycles[:n], labels=labels)


def ecdf_eval(cdf: EmpiricalCdf, x):
    """Evaluate F(x) = #{X_i <= x} / q, right-continuous.

    `x` may be a scalar or an array; the return matches.
    """
    samples = cdf.samples
    xv = np.asarray(x, dtype=float)
    out = np.searchsorted(samples, xv, side="right") / len(samples)
    if xv.ndim == 0:
        return float(out)
    return out


def panel_cdf_matrix(panel: CyclePanel, x) -> np.ndarray:
    """Matrix of F_t(x_k) for all cycles t, shape (n, len(x))."""
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((panel.n, len(xv)))
    for t, c in enumerate(panel.cycles):
        out[t] = np.searchsorted(c, xv, side="right") / len(c)
    return out


def inner_product(f: EmpiricalCdf, g: EmpiricalCdf, measure: WeightMeasure) -> float:
    """Exact <F, G> = int F(x) G(x) mu(dx) for two empirical CDFs.

    Computed as (1/(q_f q_g)) sum_{i,j} mu[max(X_i, Y_j), +inf) by a
    single merge scan over the two sorted samples: O(q_f + q_g) work,
    exact under ties. Symmetric by construction.
    """
    x, y = f.samples, g.samples
    qx, qy = len(x), len(y)
    # merge the two sorted samples into distinct union values, tracking
    # the running counts <= each value on both sides
    vals = np.empty(qx + qy)
    lex = np.empty(qx + qy)
    ley = np.empty(qx + qy)
    i = j = k = 0
    while i < qx or j < qy:
        if j >= qy or (i < qx and x[i] <= y[j]):
            v = x[i]
        else:
            v = y[j]
        while i < qx and x[i] == v:
            i += 1
        while j < qy and y[j] == v:
            j += 1
        vals[k] = v
        lex[k] = i
        ley[k] = j
        k += 1
    vals, lex, ley = vals[:k], lex[:k], ley[:k]
    ltx = np.concatenate(([0.0], lex[:-1]))
    lty = np.concatenate(([0.0], ley[:-1]))
    tails = np.asarray(tail_mass(measure, vals), dtype=float)
    # pairs (i, j) with max == v contribute tail(v); grouped by distinct v
    total = float(np.dot(tails, lex * ley - ltx * lty))
    return total / (qx * qy)


@dataclass(eq=False)
class CenteredGram:
    """Raw and centered inner-product matrices of a panel.

    entries[t, s] = <F_t - EF, F_s - EF> where EF is the equal-weight
    mean of all cycle CDFs; raw[t, s] = <F_t, F_s>. Both are symmetric,
    `entries` is PSD up to roundoff and its rows sum to zero.
    """

    entries: np.ndarray
    raw: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.entries)

    @staticmethod
    def from_raw(raw: np.ndarray) -> "CenteredGram":
        """Center a raw inner-product matrix (rolling slices reuse this)."""
        raw = 0.5 * (raw + raw.T)
        return CenteredGram(entries=_center(raw), raw=raw)


def _center(raw: np.ndarray) -> np.ndarray:
    rowmean = raw.mean(axis=1)
    grand = rowmean.mean()
    centered = raw - rowmean[:, None] - rowmean[None, :] + grand
    centered = 0.5 * (centered + centered.T)
    # a constant panel leaves only centering roundoff (order eps * raw);
    # snap that dust to exact zero so rank-0 panels are seen as rank 0
    scale = np.max(np.abs(raw)) if raw.size else 0.0
    if scale > 0 and np.max(np.abs(centered)) < 64 * np.finfo(float).eps * scale:
        centered = np.zeros_like(centered)
    return centered


def mean_inner_products(panel: CyclePanel, measure: WeightMeasure,
                        chunk: int = 8192) -> CenteredGram:
    """All pairwise <F_t, F_s> of a panel, raw and mean-centered.

    Equivalent to calling :func:`inner_product` on every pair, but
    assembled in one pooled pass: sort the N pooled observations once,
    attach to each distinct pooled value z_k the cell mass
    mu[z_k, z_{k+1}) from tail-mass differences, and accumulate
    RAW = U diag(w) U^T where U[t, k] = F_t(z_k). Exact (ties produce
    zero-width cells), O(n^2 N) flops via chunked matmul.

    Centering is the four-term expansion
    entries = raw - rowmean - colmean + grandmean, applied to the exact
    raw matrix; both outputs are explicitly symmetrized.
    """
    n = panel.n
    sizes = panel.sizes.astype(float)
    pooled = np.concatenate(panel.cycles)
    owner = np.repeat(np.arange(n), panel.sizes)
    order = np.argsort(pooled, kind="stable")
    z = pooled[order]
    own = owner[order]
    tails = np.asarray(tail_mass(measure, z), dtype=float)
    w = tails - np.concatenate((tails[1:], [0.0]))
    np.maximum(w, 0.0, out=w)  # guard fp wiggle in the tail differences
    sqw = np.sqrt(w)

    big = len(z)
    raw = np.zeros((n, n))
    base = np.zeros((n, 1))
    for s in range(0, big, chunk):
        e = min(s + chunk, big)
        hot = np.zeros((n, e - s))
        hot[own[s:e], np.arange(e - s)] = 1.0
        counts = base + np.cumsum(hot, axis=1)
        u = counts / sizes[:, None]
        u *= sqw[s:e][None, :]
        raw += u @ u.T
        base = counts[:, -1:].copy()
    raw = 0.5 * (raw + raw.T)
    return CenteredGram(entries=_center(raw), raw=raw)


def pairwise_raw_gram(panel: CyclePanel, measure: WeightMeasure) -> np.ndarray:
    """Raw inner-product matrix built one (t, s) pair at a time.

    Same values as `mean_inner_products(...).raw` up to roundoff, but
    entry (t, s) here depends on cycles t and s only, bit for bit.
    Rolling schemes that slice the matrix rely on that: perturbing a
    cycle cannot change any entry that does not involve it. Slower than
    the pooled pass for large panels.
    """
    n = panel.n
    cdfs = [EmpiricalCdf(c) for c in panel.cycles]
    raw = np.empty((n, n))
    for t in range(n):
        for s in range(t, n):
            raw[t, s] = raw[s, t] = inner_product(cdfs[t], cdfs[s], measure)
    return raw


def signed_combo_moment(panel: CyclePanel, coeffs, k: int) -> float:
    """k-th raw moment of the signed combination sum_t c_t F_t.

    int x^k d(sum c_t F_t)(x) = sum_t c_t mean(X_t^k); defined for any
    real coefficients, not only convex ones.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.shape != (panel.n,):
        raise DataError(f"coeffs must have length {panel.n}, got shape {c.shape}")
    return float(sum(ct * np.mean(cyc ** k) for ct, cyc in zip(c, panel.cycles)))
