"""Spectral estimation of latent CDF dynamics from a cycle panel.

The latent process of cycle distributions is recovered through the
eigenstructure of M = (1/(n-p)^2) (sum_{k=1..p} B_k) A, where A and B_k
are blocks of the centered Gram matrix of the panel. Eigenvalues and
functional directions of M coincide with those of the lag-covariance
operator of the centered CDF process, so everything downstream (scores,
reconstruction, forecasting) is expressed in panel coordinates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .ecdf import CenteredGram, CyclePanel, mean_inner_products, panel_cdf_matrix, \
    signed_combo_moment
from .exceptions import ConfigError, DataError, EigenDegeneracyError, \
    NegativeVarianceError
from .measure import WeightMeasure

__all__ = [
    "FixedDim",
    "ThresholdDim",
    "DimRule",
    "SpectralConfig",
    "SpectralModel",
    "build_M",
    "eig_M",
    "fit",
    "select_dimension",
    "eigenfunction_eval",
    "combo_cdf_eval",
    "reconstruct_cdf",
    "forecast_cdf",
    "monotonize",
    "default_grid",
    "variance_from_cdf",
    "variance_from_monotonized",
    "quantile_from_cdf",
    "model_to_dict",
]

# Eigenvalues of M below RANK_FLOOR * theta_1 are treated as numerically
# zero: no eigenvector is extracted for them. Below this level the 1e-6
# relative residual bound enforced on every returned pair is unattainable
# in float64 (the achievable residual scales like eps * theta_1).
RANK_FLOOR = 1e-6

# Relative truncation of A's spectrum when forming A^{1/2}.
A_TRUNC = 1e-12

# Residual tolerance for returned eigenpairs.
RESIDUAL_TOL = 1e-6

# Consecutive eigenvalues closer than this (relative to theta_1) are
# flagged: their eigenvectors are only determined up to rotation.
GAP_FLOOR = 1e-6


@dataclass(frozen=True)
class FixedDim:
    """Keep exactly d components (capped at the numerical rank)."""

    d: int

    def __post_init__(self):
        if self.d < 0:
            raise ConfigError(f"fixed dimension must be >= 0, got {self.d}")


@dataclass(frozen=True)
class ThresholdDim:
    """Keep components with theta_j >= c * theta_1 * n^(-exponent)."""

    c: float = 1.0
    exponent: float = 0.4

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise ConfigError(f"threshold constant must be positive, got {self.c}")
        # a_n = c theta_1 n^-e vanishes while n a_n^2 diverges iff 0 < e < 1/2
        if not (np.isfinite(self.exponent) and 0 < self.exponent < 0.5):
            raise ConfigError(
                f"threshold exponent must lie in (0, 0.5), got {self.exponent}"
            )


DimRule = Union[FixedDim, ThresholdDim]


@dataclass(frozen=True)
class SpectralConfig:
    """Estimation settings: lag depth p and the dimension rule."""

    p: int = 5
    dim_rule: DimRule = field(default_factory=ThresholdDim)

    def __post_init__(self):
        if self.p < 1:
            raise ConfigError(f"lag depth p must be >= 1, got {self.p}")


@dataclass(eq=False)
class SpectralModel:
    """Fitted spectral decomposition of a panel.

    Attributes
    ----------
    theta : ndarray, shape (n - p,)
        Eigenvalues of M, nonincreasing, clamped at 0.
    gamma : ndarray, shape (n - p, d_kept)
        Panel-coordinate eigenvectors for the numerically positive
        eigenvalues, sign-fixed so each column's largest-|.| entry is
        positive.
    psi_norms : ndarray, shape (d_kept,)
        Norms ||psi_tilde_j|| of the unnormalized eigenfunctions.
    eigfun_coeffs : ndarray, shape (n - p, d_kept)
        gamma / psi_norms: psi_hat_j = sum_t eigfun_coeffs[t, j] (F_t - EF).
    scores : ndarray, shape (n, d_kept)
        W_hat[t, j] = <F_t - EF, psi_hat_j> for every cycle, including
        the boundary cycles t >= boundary_start that did not enter A.
    mean_coeffs : ndarray, shape (n,)
        Coefficients of EF on the panel (1/n each).
    d_hat : int
        Dimension selected by the config's rule.
    n, p : int
        Panel size and lag depth.
    boundary_start : int
        Scores with row index >= boundary_start belong to cycles outside
        the operator sample (flagged, not dropped).
    flagged_gaps : tuple of int
        Indices j where theta_j - theta_{j+1} < 1e-6 * theta_1.
    """

    theta: np.ndarray
    gamma: np.ndarray
    psi_norms: np.ndarray
    eigfun_coeffs: np.ndarray
    scores: np.ndarray
    mean_coeffs: np.ndarray
    d_hat: int
    n: int
    p: int
    boundary_start: int
    flagged_gaps: tuple = ()

    @property
    def d_kept(self) -> int:
        return self.gamma.shape[1]


def _blocks(centered: np.ndarray, p: int):
    n = len(centered)
    if p < 1:
        raise ConfigError(f"lag depth p must be >= 1, got {p}")
    if n < p + 1:
        raise DataError(f"need at least p + 1 = {p + 1} cycles, got {n}")
    m = n - p
    a = centered[:m, :m]
    bsum = np.zeros((m, m))
    for k in range(1, p + 1):
        bsum += centered[k:k + m, k:k + m]
    return a, bsum, m


def build_M(centered, p: int) -> np.ndarray:
    """The matrix M = (1/(n-p)^2) (sum_{k=1..p} B_k) A.

    `centered` is the centered Gram matrix (or a CenteredGram); blocks
    are A[t,s] = centered[t,s] and B_k[t,s] = centered[t+k, s+k] for
    t, s < n - p.
    """
    if isinstance(centered, CenteredGram):
        centered = centered.entries
    centered = np.asarray(centered, dtype=float)
    a, bsum, m = _blocks(centered, p)
    return (bsum @ a) / m ** 2


def eig_M(a: np.ndarray, b: np.ndarray, scale: float):
    """Eigen-solve scale * B * A through its symmetric reduction.

    A is PSD; with A = Q L Q^T (eigenvalues below 1e-12 * max truncated)
    the nonzero spectrum of scale*B*A equals that of the symmetric
    S = L^{1/2} Q^T (scale B) Q L^{1/2}, and each eigenvector u of S maps
    to gamma = Q L^{-1/2} u. Returns

    theta : all m eigenvalues, nonincreasing, clamped at 0
    gamma : one column per numerically positive eigenvalue
            (theta_j > 1e-6 * theta_1), sign-fixed so the largest-|.|
            entry is positive

    Every returned pair is verified against
    ||scale*B*(A*gamma) - theta*gamma|| <= 1e-6 * theta * ||gamma||;
    failure raises EigenDegeneracyError naming the pair. The check can
    only fail when A is rank-deficient while B couples its null space
    (degenerate panels), in which case the matrix eigenproblem genuinely
    has no such eigenpair.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m = len(a)
    if a.shape != (m, m) or b.shape != (m, m):
        raise ConfigError("A and B must be square matrices of equal size")
    a = 0.5 * (a + a.T)
    b = 0.5 * (b + b.T)
    lam, qmat = np.linalg.eigh(a)
    lam_max = max(lam[-1], 0.0) if m else 0.0
    keep = lam > A_TRUNC * lam_max
    r = int(np.count_nonzero(keep))
    if r == 0:
        return np.zeros(m), np.zeros((m, 0))
    qr = qmat[:, keep]
    rootd = np.sqrt(lam[keep])
    s = qr.T @ (scale * b) @ qr
    s = rootd[:, None] * s * rootd[None, :]
    s = 0.5 * (s + s.T)
    th, v = np.linalg.eigh(s)
    th = th[::-1]
    v = v[:, ::-1]
    theta = np.concatenate((np.maximum(th, 0.0), np.zeros(m - r)))

    pos = theta[:r] > RANK_FLOOR * theta[0]
    gamma = qr @ (v[:, pos] / rootd[:, None])
    # sign convention: largest-magnitude entry of each column positive
    for j in range(gamma.shape[1]):
        i = int(np.argmax(np.abs(gamma[:, j])))
        if gamma[i, j] < 0:
            gamma[:, j] = -gamma[:, j]
    kept_theta = theta[:r][pos]
    for j in range(gamma.shape[1]):
        g = gamma[:, j]
        resid = scale * (b @ (a @ g)) - kept_theta[j] * g
        bound = RESIDUAL_TOL * kept_theta[j] * np.linalg.norm(g)
        if np.linalg.norm(resid) > bound:
            raise EigenDegeneracyError(
                f"eigenpair {j}: residual {np.linalg.norm(resid):.3e} exceeds "
                f"{bound:.3e}; operator sample is degenerate"
            )
    return theta, gamma


def select_dimension(theta: np.ndarray, n: int, rule: DimRule,
                     d_cap: int | None = None) -> int:
    """Number of components kept by the dimension rule.

    Fixed{d} keeps min(d, # numerically positive eigenvalues); the
    threshold rule keeps components with theta_j >= c * theta_1 *
    n^(-exponent), and selects 0 when theta_1 = 0.
    """
    theta = np.asarray(theta, dtype=float)
    npos = int(np.count_nonzero(theta > RANK_FLOOR * theta[0])) if len(theta) and theta[0] > 0 else 0
    if d_cap is not None:
        npos = min(npos, d_cap)
    if isinstance(rule, FixedDim):
        return min(rule.d, npos)
    if isinstance(rule, ThresholdDim):
        if len(theta) == 0 or theta[0] <= 0:
            return 0
        a_n = rule.c * theta[0] * float(n) ** (-rule.exponent)
        return min(int(np.count_nonzero(theta >= a_n)), npos)
    raise ConfigError(f"unknown dimension rule {type(rule).__name__}")


def fit(panel: CyclePanel, measure: WeightMeasure,
        config: SpectralConfig = SpectralConfig(),
        gram: CenteredGram | None = None) -> SpectralModel:
    """Fit the spectral model to a panel.

    Parameters
    ----------
    panel : CyclePanel
    measure : WeightMeasure
    config : SpectralConfig
    gram : CenteredGram, optional
        Precomputed Gram of `panel` (rolling schemes reuse raw slices);
        computed here when omitted.

    Returns
    -------
    SpectralModel
    """
    n = panel.n
    if gram is None:
        gram = mean_inner_products(panel, measure)
    elif gram.n != n:
        raise DataError(f"gram size {gram.n} does not match panel size {n}")
    centered = gram.entries
    a, bsum, m = _blocks(centered, config.p)
    theta, gamma = eig_M(a, bsum, 1.0 / m ** 2)

    norms2 = np.einsum("tj,ts,sj->j", gamma, a, gamma)
    if np.any(norms2 <= 0):
        j = int(np.argmin(norms2))
        raise EigenDegeneracyError(
            f"eigenfunction {j} has nonpositive squared norm {norms2[j]:.3e}"
        )
    psi_norms = np.sqrt(norms2)
    eigfun_coeffs = gamma / psi_norms[None, :]
    scores = centered[:, :m] @ eigfun_coeffs

    flagged = tuple(
        int(j) for j in range(gamma.shape[1] - 1)
        if theta[j] - theta[j + 1] < GAP_FLOOR * theta[0]
    )
    d_hat = select_dimension(theta, n, config.dim_rule, d_cap=gamma.shape[1])
    close_kept = [j for j in flagged if j < d_hat]
    if close_kept:
        # ties deep in the discarded tail are routine; only a tie that
        # touches a selected component makes reported output ambiguous
        warnings.warn(
            f"near-multiple eigenvalues at indices {tuple(close_kept)}; the "
            "corresponding eigenfunctions are only set-identified",
            RuntimeWarning,
            stacklevel=2,
        )
    return SpectralModel(
        theta=theta,
        gamma=gamma,
        psi_norms=psi_norms,
        eigfun_coeffs=eigfun_coeffs,
        scores=scores,
        mean_coeffs=np.full(n, 1.0 / n),
        d_hat=d_hat,
        n=n,
        p=config.p,
        boundary_start=m,
        flagged_gaps=flagged,
    )


def eigenfunction_eval(model: SpectralModel, panel: CyclePanel, j: int, x):
    """Evaluate psi_hat_j at points x (zero-based component index)."""
    if not 0 <= j < model.d_kept:
        raise ConfigError(f"component index {j} out of range [0, {model.d_kept})")
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    v = panel_cdf_matrix(panel, xv)
    meanrow = model.mean_coeffs @ v
    out = model.eigfun_coeffs[:, j] @ (v[:model.boundary_start] - meanrow[None, :])
    if np.ndim(x) == 0:
        return float(out[0])
    return out


def _combo_coeffs(model: SpectralModel, w: np.ndarray) -> np.ndarray:
    """Panel coefficients of EF + sum_j w_j psi_hat_j; sums to 1."""
    coeffs = model.mean_coeffs.copy()
    if len(w):
        load = model.eigfun_coeffs[:, :len(w)] @ w
        coeffs[:model.boundary_start] += load
        coeffs -= load.sum() * model.mean_coeffs
    return coeffs


def reconstruct_cdf(model: SpectralModel, panel: CyclePanel, t: int,
                    d: int | None = None) -> np.ndarray:
    """Rank-d reconstruction of cycle t's CDF as panel coefficients.

    Returns c with F_tilde_t = sum_u c[u] F_u and sum(c) = 1. `t` is the
    zero-based cycle index; `d` defaults to the selected dimension.
    """
    if not 0 <= t < model.n:
        raise ConfigError(f"cycle index {t} out of range [0, {model.n})")
    d = model.d_hat if d is None else d
    if not 0 <= d <= model.d_kept:
        raise ConfigError(f"dimension {d} out of range [0, {model.d_kept}]")
    return _combo_coeffs(model, model.scores[t, :d])


def forecast_cdf(model: SpectralModel, w_next) -> np.ndarray:
    """CDF forecast from forecast scores, as panel coefficients.

    `w_next` holds the forecast score for each of the first len(w_next)
    components; coefficients sum to 1 exactly as in reconstruct_cdf.
    """
    w = np.asarray(w_next, dtype=float)
    if w.ndim != 1 or len(w) > model.d_kept:
        raise ConfigError(
            f"w_next must be 1-d with length <= {model.d_kept}, got shape {w.shape}"
        )
    return _combo_coeffs(model, w)


def combo_cdf_eval(panel: CyclePanel, coeffs, x):
    """Evaluate sum_t coeffs[t] F_t at points x."""
    c = np.asarray(coeffs, dtype=float)
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    out = c @ panel_cdf_matrix(panel, xv)
    if np.ndim(x) == 0:
        return float(out[0])
    return out


def monotonize(values) -> np.ndarray:
    """Project grid values of a signed CDF combination onto a valid CDF.

    Running maximum, clip to [0, 1], then normalize the right end to 1
    (if the clipped tail is 0 the last value alone is set to 1). The
    result is nondecreasing in [0, 1] ending at 1; valid CDF values pass
    through unchanged, so the map is idempotent.
    """
    out = np.clip(np.maximum.accumulate(np.asarray(values, dtype=float)), 0.0, 1.0)
    last = out[-1]
    if last <= 0.0:
        out[-1] = 1.0
    elif last != 1.0:
        out /= last
    return out


def default_grid(panel: CyclePanel) -> np.ndarray:
    """Evaluation grid: panel observations plus 512 uniform points.

    The uniform part spans [min - h, max + h] with h one uniform step
    (h = 1 for a degenerate single-point panel), so the grid always
    brackets the data on both sides.
    """
    atoms = np.unique(np.concatenate(panel.cycles))
    lo, hi = atoms[0], atoms[-1]
    h = (hi - lo) / 511 if hi > lo else 1.0
    return np.union1d(atoms, np.linspace(lo - h, hi + h, 512))


def variance_from_cdf(coeffs, panel: CyclePanel) -> float:
    """Variance functional of the signed combination sum c_t F_t.

    Uses exact signed moments; raises NegativeVarianceError when the
    combination is far enough from a CDF that m2 - m1^2 < 0 (callers can
    fall back to variance_from_monotonized).
    """
    m1 = signed_combo_moment(panel, coeffs, 1)
    m2 = signed_combo_moment(panel, coeffs, 2)
    var = m2 - m1 * m1
    if var < 0:
        raise NegativeVarianceError(var)
    return var


def variance_from_monotonized(coeffs, panel: CyclePanel,
                              grid: np.ndarray | None = None) -> float:
    """Variance of the monotonized combination, via Stieltjes sums.

    The monotonized grid values define a genuine distribution supported
    on the grid, so the result is nonnegative by construction. Exact for
    the monotonized step function when the grid contains all panel
    observations (the default grid does).
    """
    if grid is None:
        grid = default_grid(panel)
    fvals = monotonize(combo_cdf_eval(panel, coeffs, grid))
    masses = np.diff(np.concatenate(([0.0], fvals)))
    m1 = float(np.dot(grid, masses))
    m2 = float(np.dot(grid * grid, masses))
    return max(m2 - m1 * m1, 0.0)


def quantile_from_cdf(coeffs, panel: CyclePanel, taus,
                      grid: np.ndarray | None = None) -> np.ndarray:
    """Quantiles of the monotonized combination at levels `taus`.

    Returns the leftmost grid point x with F(x) >= tau for each tau.
    """
    t = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any((t <= 0) | (t >= 1)):
        raise ConfigError("quantile levels must lie strictly in (0, 1)")
    if grid is None:
        grid = default_grid(panel)
    fvals = monotonize(combo_cdf_eval(panel, coeffs, grid))
    idx = np.searchsorted(fvals, t, side="left")
    idx = np.minimum(idx, len(grid) - 1)
    out = grid[idx]
    if np.ndim(taus) == 0:
        return float(out[0])
    return out


def model_to_dict(model: SpectralModel) -> dict:
    """JSON-ready summary of a fitted model."""
    return {
        "theta": model.theta.tolist(),
        "d_hat": int(model.d_hat),
        "psi_norms": model.psi_norms.tolist(),
        "gamma": model.gamma.tolist(),
        "scores": model.scores.tolist(),
        "n": int(model.n),
        "p": int(model.p),
        "boundary_start": int(model.boundary_start),
        "flagged_gaps": list(model.flagged_gaps),
    }
