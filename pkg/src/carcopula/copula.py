"""The scaled-CAR Gaussian copula and the data-layer joint likelihood.

Evaluation works entirely in precision form: with the rescaled precision
P = diag(delta)^1/2 (M - rho*W) diag(delta)^1/2 the copula log-density of a
latent standard-normal vector z is

    0.5*(log det(M - rho*W) + sum_i log delta_i) - 0.5 z'Pz + 0.5 z'z,

the normal constants and marginal densities cancelling in the copula
quotient, so no dense inverse is ever formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import special
from scipy.linalg import cholesky, solve_triangular

from .graph import ArealGraph
from .gmrf import ScaledCarCorrelation, sample_gmrf, scaled_correlation
from .marginals import GammaSvcParams, TimeStandardizer, gamma_logpdf, pit_transform, rate_matrix
from .panel import RegionalPanel

RHO_SEARCH_MAX = 1.0 - 1e-6


@dataclass(frozen=True)
class CopulaModel:
    """A CAR copula bound to marginal parameters; caches the scaled correlation."""

    graph: ArealGraph
    params: GammaSvcParams
    ts: TimeStandardizer
    rho: float
    scaled: ScaledCarCorrelation = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "scaled", scaled_correlation(self.graph, self.rho))


class LatentScores(NamedTuple):
    z: np.ndarray  # (n, T), NaN at missing cells
    clamped: int


def latent_scores(panel_values, params: GammaSvcParams, ts: TimeStandardizer) -> LatentScores:
    """Normal scores z = Phi^-1(u) of the PIT-transformed panel."""
    u, clamped = pit_transform(panel_values, params, ts)
    z = np.full_like(u, np.nan)
    obs = np.isfinite(u)
    z[obs] = special.ndtri(u[obs])
    return LatentScores(z=z, clamped=clamped)


def copula_logdensity(z_t: np.ndarray, scaled: ScaledCarCorrelation) -> float:
    """Log copula density at one year's complete latent vector."""
    z = np.asarray(z_t, dtype=float)
    if z.shape != (scaled.n,):
        raise ValueError(f"z_t must have shape ({scaled.n},)")
    quad = float(z @ scaled.precision @ z)
    return 0.5 * (scaled.log_det + scaled.sum_log_delta) - 0.5 * quad + 0.5 * float(z @ z)


def copula_logdensity_by_year(Z: np.ndarray, scaled: ScaledCarCorrelation) -> np.ndarray:
    """Vectorized copula log-density for an (n, T) matrix of complete years."""
    const = 0.5 * (scaled.log_det + scaled.sum_log_delta)
    quad = np.einsum("it,it->t", Z, scaled.precision @ Z)
    return const - 0.5 * quad + 0.5 * (Z * Z).sum(axis=0)


def _subvector_copula_logdensity(z_obs: np.ndarray, R_sub: np.ndarray) -> float:
    # Marginalized copula density of an observed sub-vector: Gaussian with the
    # correlation sub-matrix, divided by independent standard normal margins.
    L = cholesky(R_sub, lower=True)
    w = solve_triangular(L, z_obs, lower=True)
    log_det = 2.0 * float(np.log(np.diag(L)).sum())
    return -0.5 * log_det - 0.5 * float(w @ w) + 0.5 * float(z_obs @ z_obs)


class JointLoglik(NamedTuple):
    total: float
    per_year: np.ndarray


def joint_loglik(
    panel: RegionalPanel,
    params: GammaSvcParams,
    ts: TimeStandardizer,
    graph: ArealGraph,
    rho: float,
) -> JointLoglik:
    """Full-panel log-likelihood: per year, copula term plus gamma margins.

    The panel must be complete (or pre-imputed); the per-year vector is the
    pointwise unit used by WAIC.
    """
    if not panel.mask.all():
        raise ValueError("joint_loglik requires a complete or pre-imputed panel")
    lam = rate_matrix(params, ts)
    a = np.broadcast_to(params.a[:, None], panel.values.shape)
    gamma_year = gamma_logpdf(panel.values, a, lam).sum(axis=0)
    if rho == 0.0:
        per_year = gamma_year
    else:
        scaled = scaled_correlation(graph, rho)
        z, _ = latent_scores(panel.values, params, ts)
        per_year = gamma_year + copula_logdensity_by_year(z, scaled)
    return JointLoglik(total=float(per_year.sum()), per_year=per_year)


def simulate_panel(
    rng: np.random.Generator,
    graph: ArealGraph,
    params: GammaSvcParams,
    ts: TimeStandardizer,
    rho: float,
    T: int | None = None,
    missing_mask: np.ndarray | None = None,
    regions: tuple[str, ...] | None = None,
    years: tuple[int, ...] | None = None,
) -> RegionalPanel:
    """Draw a panel from the model: latent CAR field, PIT, gamma quantile.

    ``missing_mask`` (True = missing) deletes cells after simulation.
    """
    if T is None:
        T = ts.T
    if T != ts.T:
        raise ValueError("T must match the time standardizer")
    n = graph.n
    if params.n != n:
        raise ValueError("params and graph disagree on region count")
    scaled = scaled_correlation(graph, rho)
    inv_sqrt_d = 1.0 / np.sqrt(scaled.delta)
    lam = rate_matrix(params, ts)
    Z = np.empty((n, T))
    for t in range(T):
        x = sample_gmrf(rng, np.zeros(n), scaled.chol_L)
        Z[:, t] = inv_sqrt_d * x
    u = np.clip(special.ndtr(Z), 1e-15, 1.0 - 1e-15)
    values = special.gammaincinv(np.broadcast_to(params.a[:, None], u.shape), u) / lam
    if missing_mask is not None:
        missing_mask = np.asarray(missing_mask, dtype=bool)
        if missing_mask.shape != (n, T):
            raise ValueError(f"missing_mask must have shape ({n}, {T})")
        values = np.where(missing_mask, np.nan, values)
    if regions is None:
        regions = tuple(f"region_{i+1}" for i in range(n))
    if years is None:
        years = tuple(range(1, T + 1))
    return RegionalPanel(regions=regions, years=years, values=values)


def _golden_section_max(fun, lo: float, hi: float, tol: float) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while abs(b - a) > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def yearwise_rho_profile(
    panel: RegionalPanel,
    params: GammaSvcParams,
    ts: TimeStandardizer,
    graph: ArealGraph,
    window: int = 9,
) -> np.ndarray:
    """Smoothed per-year ML estimates of the copula dependence parameter.

    Each year's copula log-density is maximized over rho in [0, 1-1e-6] by
    golden-section search (tolerance 1e-4); the raw series is then smoothed
    with a centered moving average whose window shrinks at the edges.
    Years with missing cells are profiled on their observed sub-vector.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    if window > panel.T:
        raise ValueError(f"window {window} exceeds T={panel.T}")
    z, _ = latent_scores(panel.values, params, ts)
    mask = panel.mask

    cache: dict[float, ScaledCarCorrelation] = {}

    def density_for_year(t: int):
        obs = np.nonzero(mask[:, t])[0]
        z_t = z[obs, t]
        if obs.size == panel.n:
            def fun(rho: float) -> float:
                key = round(rho, 12)
                if key not in cache:
                    cache[key] = scaled_correlation(graph, rho)
                return copula_logdensity(z_t, cache[key])
        else:
            def fun(rho: float) -> float:
                key = round(rho, 12)
                if key not in cache:
                    cache[key] = scaled_correlation(graph, rho)
                sc = cache[key]
                Sig = solve_triangular(
                    sc.chol_L, np.eye(panel.n), lower=True
                )
                Sig = Sig.T @ Sig  # (M - rho W)^-1
                d = np.sqrt(sc.delta)
                R = Sig / np.outer(d, d)
                return _subvector_copula_logdensity(z_t, R[np.ix_(obs, obs)])
        return fun

    raw = np.empty(panel.T)
    for t in range(panel.T):
        raw[t] = _golden_section_max(density_for_year(t), 0.0, RHO_SEARCH_MAX, tol=1e-4)

    half = window // 2
    smoothed = np.empty_like(raw)
    for t in range(panel.T):
        lo = max(0, t - half)
        hi = min(panel.T, t + half + 1)
        smoothed[t] = raw[lo:hi].mean()
    return smoothed
