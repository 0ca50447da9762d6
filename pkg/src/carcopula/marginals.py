"""Gamma regression marginals with a standardized time trend.

Per region the observation law is Gamma with shape a and rate
lambda_t = a * b * exp(c * tstar_t), so the mean is exp(-c*tstar_t)/b and
the coefficient of variation a^-1/2 is constant over time. The module
also carries the competing lognormal regression used for marginal model
comparison, maximum-likelihood fitting, and the probability integral
transform.

Special functions (regularized incomplete gamma, its inverse, normal
CDF/quantile) are delegated to scipy.special, which meets the accuracy
targets enforced by the oracle tests (1e-12 absolute in CDFs, 1e-10
relative in quantiles).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special
from scipy.optimize import minimize

PIT_EPS = 1e-12
GRAD_TOL = 1e-8


@dataclass(frozen=True)
class TimeStandardizer:
    """Centering/scaling of the year index 1..T to mean 0, population variance 1."""

    T: int
    m_t: float
    s_t: float
    t_star: np.ndarray


def standardize_time(T: int) -> TimeStandardizer:
    if T < 2:
        raise ValueError(f"need at least two time points, got T={T}")
    t = np.arange(1, T + 1, dtype=float)
    m_t = (T + 1) / 2.0
    s2 = float((t * t).mean() - m_t * m_t)
    s_t = math.sqrt(s2)
    return TimeStandardizer(T=T, m_t=m_t, s_t=s_t, t_star=(t - m_t) / s_t)


@dataclass(frozen=True)
class GammaSvcParams:
    """Per-region gamma regression parameters (shape a, intercept b, trend c)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if not (a.shape == b.shape == c.shape) or a.ndim != 1:
            raise ValueError("a, b, c must be 1-d arrays of equal length")
        if (a <= 0).any() or (b <= 0).any():
            raise ValueError("a and b must be strictly positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def a_star(self) -> np.ndarray:
        return np.log(self.a)

    @property
    def b_star(self) -> np.ndarray:
        return np.log(self.b)


@dataclass(frozen=True)
class LognormalRegionParams:
    """log Y_t ~ Normal(alpha_star + beta_star * t, sigma2) with raw t = 1..T."""

    alpha_star: float
    beta_star: float
    sigma2: float
    n_used: int
    degenerate: bool


class MarginalComponents(NamedTuple):
    mu: float
    lam: float


def gamma_logpdf(y, shape, rate):
    """Gamma log-density in shape/rate form; all arguments must be positive."""
    y = np.asarray(y, dtype=float)
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if (y <= 0).any():
        raise ValueError("gamma_logpdf requires y > 0")
    if (shape <= 0).any() or (rate <= 0).any():
        raise ValueError("gamma_logpdf requires positive shape and rate")
    out = shape * np.log(rate) - special.gammaln(shape) + (shape - 1.0) * np.log(y) - rate * y
    return out if out.ndim else float(out)


def gamma_cdf(y, shape, rate):
    """Regularized lower incomplete gamma P(shape, rate*y)."""
    y = np.asarray(y, dtype=float)
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if (y <= 0).any():
        raise ValueError("gamma_cdf requires y > 0")
    if (shape <= 0).any() or (rate <= 0).any():
        raise ValueError("gamma_cdf requires positive shape and rate")
    out = special.gammainc(shape, rate * y)
    return out if out.ndim else float(out)


def gamma_quantile(u, shape, rate):
    """Inverse of gamma_cdf in y; u must lie strictly inside (0,1)."""
    u = np.asarray(u, dtype=float)
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if (u <= 0).any() or (u >= 1).any():
        raise ValueError("gamma_quantile requires u strictly inside (0,1)")
    if (shape <= 0).any() or (rate <= 0).any():
        raise ValueError("gamma_quantile requires positive shape and rate")
    out = special.gammaincinv(shape, u) / rate
    return out if out.ndim else float(out)


def rate_matrix(params: GammaSvcParams, ts: TimeStandardizer) -> np.ndarray:
    """n-by-T matrix of rates lambda_it = a_i * b_i * exp(c_i * tstar_t)."""
    log_lam = (params.a_star + params.b_star)[:, None] + np.outer(params.c, ts.t_star)
    return np.exp(log_lam)


def marginal_components(
    params: GammaSvcParams, ts: TimeStandardizer, i: int, t: int
) -> MarginalComponents:
    """Mean and rate for region i, year index t (both 0-based)."""
    lam = params.a[i] * params.b[i] * math.exp(params.c[i] * ts.t_star[t])
    return MarginalComponents(mu=params.a[i] / lam, lam=lam)


@dataclass(frozen=True)
class GammaRegionFit:
    a: float
    b: float
    c: float
    se_a: float
    se_b: float
    se_c: float
    loglik: float
    gradient_norm: float
    n_used: int


class FitConvergenceError(RuntimeError):
    """MLE iteration cap reached; ``best`` carries the best iterate found."""

    def __init__(self, message: str, best: GammaRegionFit):
        super().__init__(message)
        self.best = best


def _gamma_negloglik_grad(theta: np.ndarray, y: np.ndarray, tstar: np.ndarray):
    alpha, beta, c = theta
    a = math.exp(alpha)
    u = alpha + beta + c * tstar
    lam = np.exp(u)
    ly = np.log(y)
    ll = float(np.sum(a * u - special.gammaln(a) + (a - 1.0) * ly - lam * y))
    resid = a - lam * y
    g_alpha = float(np.sum(a * (u + 1.0 - special.digamma(a) + ly) - lam * y))
    g_beta = float(resid.sum())
    g_c = float((tstar * resid).sum())
    grad = np.array([g_alpha, g_beta, g_c])
    return -ll, -grad


def _fd_hessian(fun_grad, theta, *args, step=1e-6):
    k = theta.size
    H = np.empty((k, k))
    for j in range(k):
        h = step * max(1.0, abs(theta[j]))
        tp = theta.copy()
        tp[j] += h
        tm = theta.copy()
        tm[j] -= h
        _, gp = fun_grad(tp, *args)
        _, gm = fun_grad(tm, *args)
        H[:, j] = (gp - gm) / (2.0 * h)
    return 0.5 * (H + H.T)


def _moment_start(y: np.ndarray) -> np.ndarray:
    ybar = float(y.mean())
    s2 = float(y.var())
    a0 = ybar * ybar / s2 if s2 > 0 else 10.0
    a0 = min(max(a0, 0.05), 1e4)
    b0 = 1.0 / ybar
    return np.array([math.log(a0), math.log(b0), 0.0])


def fit_region_gamma(
    y: np.ndarray,
    ts: TimeStandardizer,
    min_obs: int = 5,
    max_iter: int = 200,
) -> GammaRegionFit:
    """Maximum-likelihood fit of (a, b, c) for one region's series.

    Missing entries are NaN and skipped. Optimization is quasi-Newton on
    the unconstrained (log a, log b, c) scale from a method-of-moments
    start, polished by Newton steps until the gradient norm drops below
    1e-8; a derivative-free simplex restart covers line-search failures.
    Standard errors come from the inverse finite-difference Hessian,
    delta-method mapped to the natural scale for a and b.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (ts.T,):
        raise ValueError(f"series must have length {ts.T}")
    mask = np.isfinite(y)
    yobs = y[mask]
    if (yobs <= 0).any():
        raise ValueError("series contains non-positive values")
    if yobs.size < min_obs:
        raise ValueError(f"need at least {min_obs} observations, got {yobs.size}")
    tstar = ts.t_star[mask]

    theta = _moment_start(yobs)
    res = minimize(
        _gamma_negloglik_grad,
        theta,
        args=(yobs, tstar),
        jac=True,
        method="BFGS",
        options={"gtol": 1e-10, "maxiter": max_iter},
    )
    theta = res.x
    nll, grad = _gamma_negloglik_grad(theta, yobs, tstar)

    # Newton polish: BFGS line searches stall above the 1e-8 gradient target.
    for _ in range(50):
        if np.linalg.norm(grad) < GRAD_TOL:
            break
        H = _fd_hessian(_gamma_negloglik_grad, theta, yobs, tstar)
        try:
            step_dir = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            break
        step_size = 1.0
        for _ in range(30):
            cand = theta - step_size * step_dir
            nll_c, grad_c = _gamma_negloglik_grad(cand, yobs, tstar)
            if np.isfinite(nll_c) and nll_c <= nll + 1e-12:
                theta, nll, grad = cand, nll_c, grad_c
                break
            step_size *= 0.5
        else:
            break

    if np.linalg.norm(grad) >= GRAD_TOL:
        # simplex fallback, then one more Newton pass
        res2 = minimize(
            lambda th: _gamma_negloglik_grad(th, yobs, tstar)[0],
            theta,
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-12, "maxiter": 5000},
        )
        theta = res2.x
        nll, grad = _gamma_negloglik_grad(theta, yobs, tstar)
        for _ in range(50):
            if np.linalg.norm(grad) < GRAD_TOL:
                break
            H = _fd_hessian(_gamma_negloglik_grad, theta, yobs, tstar)
            try:
                theta = theta - np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                break
            nll, grad = _gamma_negloglik_grad(theta, yobs, tstar)

    H = _fd_hessian(_gamma_negloglik_grad, theta, yobs, tstar)
    try:
        cov = np.linalg.inv(H)
        se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        se = np.full(3, np.nan)

    a, b, c = math.exp(theta[0]), math.exp(theta[1]), theta[2]
    fit = GammaRegionFit(
        a=a,
        b=b,
        c=c,
        se_a=a * se[0],
        se_b=b * se[1],
        se_c=se[2],
        loglik=-nll,
        gradient_norm=float(np.linalg.norm(grad)),
        n_used=int(yobs.size),
    )
    if fit.gradient_norm >= GRAD_TOL:
        raise FitConvergenceError(
            f"gamma MLE did not reach gradient norm {GRAD_TOL} "
            f"(final {fit.gradient_norm:.3e})",
            best=fit,
        )
    return fit


def fit_region_lognormal(y: np.ndarray, ts: TimeStandardizer, min_obs: int = 5) -> LognormalRegionParams:
    """OLS of log y on (1, t) with raw t = 1..T; sigma2 uses the MLE denominator."""
    y = np.asarray(y, dtype=float)
    if y.shape != (ts.T,):
        raise ValueError(f"series must have length {ts.T}")
    mask = np.isfinite(y)
    yobs = y[mask]
    if (yobs <= 0).any():
        raise ValueError("series contains non-positive values")
    if yobs.size < min_obs:
        raise ValueError(f"need at least {min_obs} observations, got {yobs.size}")
    t = np.arange(1, ts.T + 1, dtype=float)[mask]
    X = np.column_stack([np.ones_like(t), t])
    ly = np.log(yobs)
    coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
    resid = ly - X @ coef
    sigma2 = float(resid @ resid) / yobs.size
    return LognormalRegionParams(
        alpha_star=float(coef[0]),
        beta_star=float(coef[1]),
        sigma2=sigma2,
        n_used=int(yobs.size),
        degenerate=sigma2 < 1e-14,
    )


def lognormal_cdf_matrix(
    values: np.ndarray, fits: list[LognormalRegionParams], T: int
) -> np.ndarray:
    """PIT matrix under the per-region lognormal fits, NaN-preserving."""
    vals = np.asarray(values, dtype=float)
    t = np.arange(1, T + 1, dtype=float)
    out = np.full_like(vals, np.nan)
    for i, fit in enumerate(fits):
        mask = np.isfinite(vals[i])
        if fit.degenerate or fit.sigma2 <= 0:
            continue
        mu = fit.alpha_star + fit.beta_star * t[mask]
        out[i, mask] = special.ndtr((np.log(vals[i, mask]) - mu) / math.sqrt(fit.sigma2))
    return out


def pit_transform(
    panel_values, params: GammaSvcParams, ts: TimeStandardizer
) -> tuple[np.ndarray, int]:
    """u_it = F(y_it; a_i, lambda_it), clamped to [1e-12, 1-1e-12], NaN-preserving.

    Returns the PIT matrix and the number of clamped cells. Accepts a raw
    n-by-T array or any object with a ``values`` attribute holding one.
    """
    values = np.asarray(getattr(panel_values, "values", panel_values), dtype=float)
    if values.ndim != 2 or values.shape[0] != params.n:
        raise ValueError(f"expected ({params.n}, T) values, got shape {values.shape}")
    lam = rate_matrix(params, ts)
    mask = np.isfinite(values)
    u = np.full_like(values, np.nan)
    with np.errstate(invalid="ignore"):
        raw = special.gammainc(np.broadcast_to(params.a[:, None], values.shape)[mask],
                               (lam * np.where(mask, values, 1.0))[mask])
    clamped = int(np.sum((raw < PIT_EPS) | (raw > 1.0 - PIT_EPS)))
    u[mask] = np.clip(raw, PIT_EPS, 1.0 - PIT_EPS)
    return u, clamped
