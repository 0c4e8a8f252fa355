"""Scalar time-series tools for the score and variance dynamics.

Small, self-contained versions of exactly what the forecasting layer
needs: conditional-sum-of-squares ARMA with Hannan-Rissanen starting
values, one-step forecasts, Ljung-Box diagnostics, least-absolute-
deviation regression, the 5-lag log-variance autoregression used as the
benchmark variance strategy, and the Diebold-Mariano comparison test.
No standard errors are produced anywhere; model choice runs on AIC and
diagnostics on Ljung-Box.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, signal, stats

from .exceptions import ConfigError, DataError, NumericalError

__all__ = [
    "ArmaFit",
    "HarFit",
    "DmResult",
    "fit_arma",
    "forecast_arma",
    "ljung_box",
    "lad_regression",
    "har_forecast",
    "diebold_mariano",
    "DEFAULT_ORDERS",
]

# candidate (p, q) orders tried by the forecasting layer
DEFAULT_ORDERS = ((0, 0), (1, 0), (0, 1), (1, 1), (1, 2), (2, 1), (2, 2))


@dataclass(eq=False)
class ArmaFit:
    """Conditional-sum-of-squares ARMA(p, q) fit.

    `residuals` has the same length as the fitted series; the first p
    entries are 0 (innovations are undefined before the AR lag depth).
    `ar_stationary` records whether all AR roots have modulus > 1 + 1e-6;
    a nonstationary fit is returned with a warning, not rejected.
    """

    order: tuple
    intercept: float
    ar: np.ndarray
    ma: np.ndarray
    sigma2: float
    aic: float
    css: float
    residuals: np.ndarray
    converged: bool
    ar_stationary: bool


def _css_residuals(params: np.ndarray, y: np.ndarray, p: int, q: int) -> np.ndarray:
    """Innovations e_t for t >= p under zero presample conditions."""
    c = params[0]
    phi = params[1:1 + p]
    theta = params[1 + p:]
    z = y[p:] - c
    for i in range(1, p + 1):
        z = z - phi[i - 1] * y[p - i:len(y) - i]
    if q == 0:
        return z
    # e_t + theta_1 e_{t-1} + ... + theta_q e_{t-q} = z_t
    return signal.lfilter([1.0], np.concatenate(([1.0], theta)), z)


def _css(params, y, p, q) -> float:
    e = _css_residuals(params, y, p, q)
    out = float(np.dot(e, e))
    if not np.isfinite(out):
        return 1e300
    return out


def _hr_start(y: np.ndarray, p: int, q: int) -> np.ndarray:
    """Hannan-Rissanen starting values (long AR, then lag regression)."""
    n = len(y)
    if p == 0 and q == 0:
        return np.array([np.mean(y)])
    if q == 0:
        x = np.ones((n - p, 1 + p))
        for i in range(1, p + 1):
            x[:, i] = y[p - i:n - i]
        beta, *_ = np.linalg.lstsq(x, y[p:], rcond=None)
        return beta
    h = max(int(np.ceil(min(n / 10, 20))), p, q)
    xa = np.ones((n - h, 1 + h))
    for i in range(1, h + 1):
        xa[:, i] = y[h - i:n - i]
    ba, *_ = np.linalg.lstsq(xa, y[h:], rcond=None)
    ehat = np.zeros(n)
    ehat[h:] = y[h:] - xa @ ba
    t0 = max(p, h + q)
    x = np.ones((n - t0, 1 + p + q))
    for i in range(1, p + 1):
        x[:, i] = y[t0 - i:n - i]
    for j in range(1, q + 1):
        x[:, p + j] = ehat[t0 - j:n - j]
    beta, *_ = np.linalg.lstsq(x, y[t0:], rcond=None)
    return beta


def fit_arma(series, p: int, q: int) -> ArmaFit:
    """Fit ARMA(p, q) by conditional sum of squares.

    Hannan-Rissanen regressions provide starting values; a Nelder-Mead
    refinement stops on a relative CSS change below 1e-10 or after
    500 (p + q + 1) iterations. sigma2 = CSS / (n - p - (p + q + 1)),
    the mean square over the n - p summed terms corrected for the
    parameter count, and AIC = n log(sigma2) + 2 (p + q + 1) with n the
    full series length. The correction matters for order selection:
    uncorrected variances let overparametrized candidates ride their
    in-sample CSS gain.

    Parameters
    ----------
    series : array_like
        Length at least 10 (p + q + 1), nonconstant.
    p, q : int
        AR and MA orders, >= 0.
    """
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise DataError("series must be 1-d")
    if p < 0 or q < 0:
        raise ConfigError(f"orders must be >= 0, got ({p}, {q})")
    n = len(y)
    if n < 10 * (p + q + 1):
        raise DataError(
            f"series too short for ARMA({p},{q}): need {10 * (p + q + 1)}, got {n}"
        )
    if not np.all(np.isfinite(y)):
        raise DataError("series contains non-finite values")
    if np.ptp(y) == 0:
        raise DataError("series is constant; ARMA fit is degenerate")

    x0 = _hr_start(y, p, q)
    css0 = _css(x0, y, p, q)
    converged = True
    if css0 > 1e-300 and (p + q) > 0:
        res = optimize.minimize(
            _css, x0, args=(y, p, q), method="Nelder-Mead",
            options={
                "fatol": 1e-10 * css0,
                "xatol": 1e-10,
                "maxiter": 500 * (p + q + 1),
                "maxfev": 2000 * (p + q + 1),
            },
        )
        if res.fun <= css0:
            x0 = res.x
        converged = bool(res.success)
    elif p + q == 0:
        # closed form: CSS is minimized by the sample mean
        x0 = np.array([np.mean(y)])

    e = _css_residuals(x0, y, p, q)
    css = float(np.dot(e, e))
    k = p + q + 1
    # residual degrees of freedom: (n - p) summed terms minus k parameters
    sigma2 = css / ((n - p) - k)
    aic = n * np.log(sigma2) + 2 * k
    residuals = np.concatenate((np.zeros(p), e))

    ar = np.asarray(x0[1:1 + p], dtype=float)
    ma = np.asarray(x0[1 + p:], dtype=float)
    ar_stationary = True
    if p > 0:
        roots = np.roots(np.concatenate((-ar[::-1], [1.0])))
        ar_stationary = bool(np.all(np.abs(roots) > 1 + 1e-6))
        if not ar_stationary:
            warnings.warn(
                f"ARMA({p},{q}) fit has AR roots on or inside the unit circle",
                RuntimeWarning,
                stacklevel=2,
            )
    return ArmaFit(
        order=(p, q),
        intercept=float(x0[0]),
        ar=ar,
        ma=ma,
        sigma2=float(sigma2),
        aic=float(aic),
        css=css,
        residuals=residuals,
        converged=converged,
        ar_stationary=ar_stationary,
    )


def forecast_arma(fit: ArmaFit, series) -> float:
    """One-step conditional-expectation forecast.

    y_hat = c + sum_i phi_i y_{n+1-i} + sum_j theta_j e_{n+1-j}, with the
    innovations taken from the fit (zero before the AR lag depth).
    """
    y = np.asarray(series, dtype=float)
    p, q = fit.order
    if len(y) < max(p, q, 1):
        raise DataError(f"series too short to forecast ARMA{fit.order}")
    out = fit.intercept
    for i in range(1, p + 1):
        out += fit.ar[i - 1] * y[-i]
    for j in range(1, q + 1):
        out += fit.ma[j - 1] * fit.residuals[-j]
    return float(out)


def ljung_box(series, lags: int):
    """Ljung-Box portmanteau test on a raw series.

    Q = n (n + 2) sum_{k<=lags} rho_k^2 / (n - k), compared to
    chi-square with `lags` degrees of freedom. Returns (Q, p_value).
    """
    y = np.asarray(series, dtype=float)
    n = len(y)
    if not 1 <= lags < n:
        raise ConfigError(f"lags must satisfy 1 <= lags < n = {n}, got {lags}")
    d = y - np.mean(y)
    g0 = float(np.dot(d, d))
    if g0 == 0:
        raise DataError("series is constant; autocorrelations undefined")
    q_stat = 0.0
    for k in range(1, lags + 1):
        rho = float(np.dot(d[:-k], d[k:])) / g0
        q_stat += rho * rho / (n - k)
    q_stat *= n * (n + 2)
    return q_stat, float(stats.chi2.sf(q_stat, lags))


def lad_regression(x, y, tol: float = 1e-9, max_iter: int = 1000) -> np.ndarray:
    """Least-absolute-deviation (median) regression coefficients.

    Iteratively reweighted least squares with weights 1/max(|r_i|, 1e-8),
    stopping when the largest coefficient change falls below `tol`.
    Requires a full-column-rank design.
    """
    xm = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    if xm.ndim != 2 or len(xm) != len(yv):
        raise DataError("design must be 2-d with one row per response")
    if len(yv) < xm.shape[1]:
        raise DataError("fewer rows than columns in LAD design")
    if np.linalg.matrix_rank(xm) < xm.shape[1]:
        raise DataError("LAD design matrix is rank deficient")
    beta, *_ = np.linalg.lstsq(xm, yv, rcond=None)
    obj = float(np.sum(np.abs(yv - xm @ beta)))
    for _ in range(max_iter):
        r = yv - xm @ beta
        w = 1.0 / np.maximum(np.abs(r), 1e-8)
        sw = np.sqrt(w)
        new, *_ = np.linalg.lstsq(xm * sw[:, None], yv * sw, rcond=None)
        step = float(np.max(np.abs(new - beta)))
        beta = new
        if __debug__:
            # each reweighted step majorizes the L1 objective, so it can
            # only go down (tiny slack for the epsilon clamp and roundoff)
            new_obj = float(np.sum(np.abs(yv - xm @ beta)))
            assert new_obj <= obj * (1 + 1e-7) + 1e-7
            obj = new_obj
        if step < tol:
            break
    return beta


@dataclass(eq=False)
class HarFit:
    """Log-variance autoregression fit and its one-step forecast."""

    beta: np.ndarray
    forecast: float
    log_forecast: float


def har_forecast(variances) -> HarFit:
    """One-step variance forecast from the 5-lag log autoregression.

    Regresses log(s2_{t+1}) on [1, log(s2_t), log(mean of the last five
    s2)] by median (LAD) regression, then forecasts from the most recent
    values. Needs at least 30 strictly positive variances.
    """
    v = np.asarray(variances, dtype=float)
    if v.ndim != 1 or len(v) < 30:
        raise DataError(f"need at least 30 variances, got {v.shape}")
    bad = np.flatnonzero(~(np.isfinite(v) & (v > 0)))
    if len(bad):
        raise DataError(f"cycle {bad[0]}: variance {v[bad[0]]!r} is not positive")
    if np.ptp(v) == 0:
        # constant input: the design is collinear; the regression is
        # degenerate but the forecast is unambiguous
        return HarFit(beta=np.array([np.log(v[-1]), 0.0, 0.0]),
                      forecast=float(v[-1]), log_forecast=float(np.log(v[-1])))
    logv = np.log(v)
    n = len(v)
    rows = np.arange(4, n - 1)
    weekly = np.array([np.mean(v[t - 4:t + 1]) for t in rows])
    x = np.column_stack((np.ones(len(rows)), logv[rows], np.log(weekly)))
    y = logv[rows + 1]
    # a deterministic daily recursion makes the weekly term an affine
    # function of the daily one; drop collinear columns instead of failing
    keep = [0, 1, 2]
    if np.linalg.matrix_rank(x) < 3:
        keep = [0, 1]
        if np.linalg.matrix_rank(x[:, keep]) < 2:
            keep = [0]
    fitted = lad_regression(x[:, keep], y)
    beta = np.zeros(3)
    beta[keep] = fitted
    log_fc = float(beta[0] + beta[1] * logv[-1] + beta[2] * np.log(np.mean(v[-5:])))
    return HarFit(beta=beta, forecast=float(np.exp(log_fc)), log_forecast=log_fc)


@dataclass(frozen=True)
class DmResult:
    """Diebold-Mariano comparison of two squared-error sequences."""

    statistic: float
    p_two_sided: float
    p_one_sided: float


def diebold_mariano(errors_a, errors_b) -> DmResult:
    """Equal-predictive-accuracy test on squared-error losses.

    d_t = e_a^2 - e_b^2; the statistic is mean(d) over a Bartlett
    long-run standard error with window floor(T^(1/3)). The one-sided
    p-value is for the alternative "a more accurate than b" (negative
    statistic small p).
    """
    ea = np.asarray(errors_a, dtype=float)
    eb = np.asarray(errors_b, dtype=float)
    if ea.shape != eb.shape or ea.ndim != 1:
        raise DataError("error sequences must be 1-d and of equal length")
    t_len = len(ea)
    if t_len < 4:
        raise DataError(f"need at least 4 forecast errors, got {t_len}")
    d = ea ** 2 - eb ** 2
    dbar = float(np.mean(d))
    dd = d - dbar
    lag = int(np.floor(t_len ** (1.0 / 3.0)))
    lrv = float(np.dot(dd, dd)) / t_len
    for k in range(1, lag + 1):
        gk = float(np.dot(dd[:-k], dd[k:])) / t_len
        lrv += 2.0 * (1.0 - k / (lag + 1.0)) * gk
    if lrv <= 0:
        raise NumericalError(
            "long-run variance of the loss differential is not positive "
            "(losses may be identical)"
        )
    statistic = dbar / np.sqrt(lrv / t_len)
    return DmResult(
        statistic=float(statistic),
        p_two_sided=float(2.0 * stats.norm.sf(abs(statistic))),
        p_one_sided=float(stats.norm.cdf(statistic)),
    )
