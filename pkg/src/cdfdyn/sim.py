"""Synthetic cycle panels with a one-dimensional latent CDF process.

The generating process: each cycle's distribution on [-1, 1] is
F_t = H + W_t * psi with H(x) = (x+1)/2, the odd quadratic bump
psi(x) = x(1+x)/2 on [-1, 0] and x(1-x)/2 on [0, 1], and a latent AR(1)
W_t = alpha W_{t-1} + u_t whose innovations are uniform on
[-1+|alpha|, 1-|alpha|], so |W_t| <= 1 and every F_t is a valid CDF.
W_t = 1 tilts the density toward a triangular shape, W_t = -1 toward a
V shape. All randomness is counter-based (Philox keyed by seed and a
stream id), so any cycle can be regenerated independently and Monte
Carlo replications use disjoint streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox
from scipy import signal

from .ecdf import CyclePanel, panel_cdf_matrix
from .exceptions import ConfigError, DataError, NumericalError
from .measure import LebesgueInterval
from .spectral import FixedDim, SpectralConfig, ThresholdDim, DimRule, \
    eigenfunction_eval, fit, reconstruct_cdf, select_dimension

__all__ = [
    "SimConfig",
    "LatentPath",
    "MonteCarloConfig",
    "MonteCarloResult",
    "cdf_base",
    "cdf_shape",
    "SHAPE_NORM_SQ",
    "latent_cdf_eval",
    "inverse_cdf",
    "sample_day",
    "simulate_latent",
    "simulate_panel",
    "run_monte_carlo",
    "MC_RECORD_FIELDS",
]

# ||psi||^2 under Lebesgue measure on [-1, 1]:
# 2 * int_0^1 (x(1-x)/2)^2 dx = (1/2) B(3, 3) = 1/60
SHAPE_NORM_SQ = 1.0 / 60.0


@dataclass(frozen=True)
class SimConfig:
    """Panel simulation settings.

    `stream_offset` shifts the Philox stream ids; replications of a
    Monte Carlo use disjoint offsets so their draws never overlap.
    """

    n: int
    q: int
    alpha: float = 0.5
    seed: int = 0
    burn_in: int = 1000
    stream_offset: int = 0
    ma_start: bool = False

    def __post_init__(self):
        if self.n < 1 or self.q < 1:
            raise ConfigError(f"need n >= 1 and q >= 1, got n={self.n}, q={self.q}")
        if not abs(self.alpha) < 1:
            raise ConfigError(f"|alpha| must be < 1, got {self.alpha}")
        if self.burn_in < 0:
            raise ConfigError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.seed < 0 or self.stream_offset < 0:
            raise ConfigError("seed and stream_offset must be nonnegative")


@dataclass(frozen=True, eq=False)
class LatentPath:
    """Realized latent weights, one per cycle, all in [-1, 1]."""

    w: np.ndarray

    def __post_init__(self):
        if np.any(np.abs(self.w) > 1):
            raise ConfigError("latent weights must lie in [-1, 1]")


def cdf_base(x):
    """H(x) = (x+1)/2 on [-1, 1], clamped outside."""
    xc = np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
    return (xc + 1.0) / 2.0


def cdf_shape(x):
    """The odd perturbation psi: x(1+x)/2 below 0, x(1-x)/2 above."""
    xc = np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
    return np.where(xc <= 0, xc * (1.0 + xc) / 2.0, xc * (1.0 - xc) / 2.0)


def latent_cdf_eval(w: float, x):
    """F_t(x) = H(x) + w psi(x) for latent weight w, |w| <= 1."""
    if not abs(w) <= 1:
        raise ValueError(f"latent weight must satisfy |w| <= 1, got {w}")
    out = cdf_base(x) + w * cdf_shape(x)
    if np.ndim(x) == 0:
        return float(out)
    return out


def inverse_cdf(w: float, u):
    """Quantile function of F_t = H + w psi at probabilities u.

    On each half of [-1, 1] the CDF is quadratic in x, so the inverse
    solves a*x^2 + b*x + c = 0 with b = 1 + w, c = 1 - 2u and a = +-w
    (left/right piece by u <= 1/2). The root is taken in the
    cancellation-free form x = -2c / (b + sqrt(b^2 - 4ac)), which also
    degenerates smoothly to the linear inverse as w -> 0; |w| < 1e-10
    short-circuits to that branch. Elements whose round-trip residual
    |F(x) - u| exceeds 1e-12 fall back to bisection.
    """
    if not abs(w) <= 1:
        raise ValueError(f"latent weight must satisfy |w| <= 1, got {w}")
    uv = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any((uv < 0) | (uv > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    c = 1.0 - 2.0 * uv
    b = 1.0 + w
    if abs(w) < 1e-10:
        x = -c / b
    else:
        a = np.where(c >= 0, w, -w)
        disc = b * b - 4.0 * a * c
        denom = b + np.sqrt(np.maximum(disc, 0.0))
        safe = denom > 0
        x = np.where(safe, -2.0 * c / np.where(safe, denom, 1.0), 0.0)
    x = np.clip(x, -1.0, 1.0)
    resid = np.abs(latent_cdf_eval(w, x) - uv)
    bad = np.flatnonzero(resid > 1e-12)
    for i in bad:
        x[i] = _bisect_quantile(w, uv[i])
    if np.ndim(u) == 0:
        return float(x[0])
    return x


def _bisect_quantile(w: float, u: float) -> float:
    lo, hi = (-1.0, 0.0) if u <= 0.5 else (0.0, 1.0)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if latent_cdf_eval(w, mid) < u:
            lo = mid
        else:
            hi = mid
    return hi


def sample_day(w: float, q: int, rng: Generator) -> np.ndarray:
    """Draw q observations from F_t = H + w psi, sorted ascending."""
    if q < 1:
        raise ConfigError(f"need q >= 1, got {q}")
    return np.sort(inverse_cdf(w, rng.uniform(0.0, 1.0, size=q)))


def _latent_rng(cfg: SimConfig) -> Generator:
    return Generator(Philox(key=[cfg.seed, cfg.stream_offset]))


def _cycle_rng(cfg: SimConfig, t: int) -> Generator:
    return Generator(Philox(key=[cfg.seed, cfg.stream_offset + 1 + t]))


def simulate_latent(cfg: SimConfig) -> LatentPath:
    """AR(1) latent path, burned in from W = 0.

    The truncation bias of the burn-in is bounded by |alpha|^burn_in
    (below float resolution at the defaults). With `ma_start` the same
    innovations are combined as explicit truncated moving-average sums
    W_t = sum_k alpha^k u_{t-k} instead of running the recursion; the
    two paths agree up to floating-point rounding and exist so either
    can validate the other.
    """
    a = abs(cfg.alpha)
    rng = _latent_rng(cfg)
    u = rng.uniform(-(1.0 - a), 1.0 - a, size=cfg.burn_in + cfg.n)
    if cfg.ma_start:
        weights = cfg.alpha ** np.arange(u.size)
        w = np.convolve(u, weights)[: u.size]
    else:
        w = signal.lfilter([1.0], [1.0, -cfg.alpha], u)
    return LatentPath(w=w[cfg.burn_in:])


def simulate_panel(cfg: SimConfig):
    """Simulate the latent path and one sorted sample per cycle.

    Returns (LatentPath, list of ndarray). Cycle t's draws come from
    stream id stream_offset + 1 + t, so changing n or q of other cycles
    never perturbs it.
    """
    lat = simulate_latent(cfg)
    cycles = [sample_day(lat.w[t], cfg.q, _cycle_rng(cfg, t)) for t in range(cfg.n)]
    return lat, cycles


# --- Monte Carlo study ----------------------------------------------------

# the study's geometry: Lebesgue measure on the common support
STUDY_MEASURE = LebesgueInterval(-1.0, 1.0)

MC_RECORD_FIELDS = (
    "rep", "theta1", "theta2", "d_hat", "psi_err", "psi_sign", "score_err",
    "recon_err", "ecdf_err", "mean_err",
)


@dataclass(frozen=True)
class MonteCarloConfig:
    """Replication study settings (geometry fixed to Lebesgue[-1, 1]).

    The estimator always keeps one component (the process is rank one by
    construction); `dim_rule` only governs the recorded d_hat column.
    """

    reps: int
    n: int
    q: int
    alpha: float = 0.5
    seed: int = 0
    p: int = 1
    dim_rule: DimRule = field(default_factory=ThresholdDim)
    burn_in: int = 1000

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError(f"need reps >= 1, got {self.reps}")
        if self.reps > 1 << 31:
            raise ConfigError("reps too large for the stream layout")


@dataclass(eq=False)
class MonteCarloResult:
    records: dict
    summary: dict


def _study_grid(cells: int = 2048):
    edges = np.linspace(-1.0, 1.0, cells + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    return mids, 2.0 / cells


def _l2(values: np.ndarray, mass: float) -> float:
    return float(np.sqrt(np.sum(values ** 2) * mass))


def run_monte_carlo(cfg: MonteCarloConfig) -> MonteCarloResult:
    """Replicated estimation study on the synthetic process.

    Per replication: simulate a panel, fit a one-component spectral model
    (lag depth cfg.p, Lebesgue[-1,1] geometry), and record

    - theta1, theta2: top eigenvalues
    - d_hat: the dimension cfg.dim_rule would select from the spectrum
    - psi_err: L2 distance of the leading eigenfunction to psi/||psi||,
      with psi_sign the alignment chosen (+1 or -1 applied to the
      estimate before comparing)
    - score_err: max_t |W_hat_t - W_t ||psi|| | at the best sign, i.e.
      the worst score deviation along the path on the scores' own scale
    - recon_err / ecdf_err: L2 distance of the rank-one reconstruction
      / the raw empirical CDF of cycle 0 to the true F_0
    - mean_err: L2 distance of the CDF average to H

    Deterministic for fixed (seed, reps): replication r uses stream
    offset r * 2^32.
    """
    mids, mass = _study_grid()
    shape_norm = float(np.sqrt(SHAPE_NORM_SQ))
    true_psi = cdf_shape(mids) / shape_norm
    true_base = cdf_base(mids)
    est_cfg = SpectralConfig(p=cfg.p, dim_rule=FixedDim(1))

    cols = {name: np.zeros(cfg.reps) for name in MC_RECORD_FIELDS}
    failed = 0
    for rep in range(cfg.reps):
        sim_cfg = SimConfig(n=cfg.n, q=cfg.q, alpha=cfg.alpha, seed=cfg.seed,
                            burn_in=cfg.burn_in, stream_offset=rep << 32)
        lat, cycles = simulate_panel(sim_cfg)
        panel = CyclePanel(cycles)
        try:
            model = fit(panel, STUDY_MEASURE, est_cfg)
        except (DataError, NumericalError):
            # a degenerate replication is recorded, not fatal
            failed += 1
            cols["rep"][rep] = rep
            for name in MC_RECORD_FIELDS[1:]:
                cols[name][rep] = np.nan
            continue

        cdf_mat = panel_cdf_matrix(panel, mids)
        mean_vals = cdf_mat.mean(axis=0)
        true_f0 = latent_cdf_eval(lat.w[0], mids)

        cols["rep"][rep] = rep
        cols["theta1"][rep] = model.theta[0]
        cols["theta2"][rep] = model.theta[1] if len(model.theta) > 1 else 0.0
        cols["d_hat"][rep] = select_dimension(model.theta, cfg.n, cfg.dim_rule)
        if model.d_kept >= 1:
            psi_hat = eigenfunction_eval(model, panel, 0, mids)
            plus = _l2(psi_hat - true_psi, mass)
            minus = _l2(-psi_hat - true_psi, mass)
            cols["psi_err"][rep] = min(plus, minus)
            cols["psi_sign"][rep] = 1.0 if plus <= minus else -1.0
            s = model.scores[:, 0]
            target = lat.w * shape_norm
            cols["score_err"][rep] = min(
                np.max(np.abs(s - target)), np.max(np.abs(s + target))
            )
        else:
            cols["psi_err"][rep] = np.nan
            cols["psi_sign"][rep] = np.nan
            cols["score_err"][rep] = np.nan
        coeffs = reconstruct_cdf(model, panel, 0)
        cols["recon_err"][rep] = _l2(coeffs @ cdf_mat - true_f0, mass)
        cols["ecdf_err"][rep] = _l2(cdf_mat[0] - true_f0, mass)
        cols["mean_err"][rep] = _l2(mean_vals - true_base, mass)

    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(cols["theta2"] > 0, cols["theta1"] / cols["theta2"],
                         np.where(np.isnan(cols["theta1"]), np.nan, np.inf))
        recon_ratio = cols["recon_err"] / cols["ecdf_err"]
    pair_ok = np.isfinite(cols["recon_err"]) & np.isfinite(cols["ecdf_err"])
    dim_ok = np.isfinite(cols["d_hat"])
    summary = {
        "reps": cfg.reps,
        "n": cfg.n,
        "q": cfg.q,
        "alpha": cfg.alpha,
        "p": cfg.p,
        "seed": cfg.seed,
        "failed_reps": failed,
        "median_theta1": float(np.nanmedian(cols["theta1"])),
        "median_theta_ratio": float(np.nanmedian(ratio)),
        "median_psi_err": float(np.nanmedian(cols["psi_err"])),
        "median_score_err": float(np.nanmedian(cols["score_err"])),
        "median_recon_err": float(np.nanmedian(cols["recon_err"])),
        "median_ecdf_err": float(np.nanmedian(cols["ecdf_err"])),
        "median_mean_err": float(np.nanmedian(cols["mean_err"])),
        "median_recon_ratio": float(np.nanmedian(recon_ratio)),
        "frac_recon_better": float(
            np.mean(cols["recon_err"][pair_ok] < cols["ecdf_err"][pair_ok])
        ) if np.any(pair_ok) else float("nan"),
        "frac_d_hat_1": float(np.mean(cols["d_hat"][dim_ok] == 1))
        if np.any(dim_ok) else float("nan"),
    }
    return MonteCarloResult(records=cols, summary=summary)
