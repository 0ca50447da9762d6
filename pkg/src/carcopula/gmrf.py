"""CAR precision algebra: factorization, scaling, sampling, conditionals.

The central object is the precision M - rho*W of a conditional
autoregressive field. All factorizations are dense Cholesky; at the region
counts this package targets (tens of regions) sparse machinery would not
pay for itself, and the factorization is isolated here so a sparse backend
could be slotted in later.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular

from .graph import ArealGraph

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class CarPrecision:
    """Precision sigma^-2 (M - rho*W) of a CAR field on ``graph``.

    Positive definite for rho in [0,1); at rho = 1 (intrinsic limit) it is
    rank n-1 with null space spanned by the constant vector.
    """

    graph: ArealGraph
    rho: float
    sigma2: float
    Q: np.ndarray

    @property
    def is_proper(self) -> bool:
        return self.rho < 1.0


def build_precision(graph: ArealGraph, rho: float, sigma2: float) -> CarPrecision:
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must be in [0,1], got {rho}")
    if sigma2 <= 0.0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    Q = (graph.M - rho * graph.W) / sigma2
    Q = 0.5 * (Q + Q.T)
    return CarPrecision(graph=graph, rho=rho, sigma2=sigma2, Q=Q)


@dataclass(frozen=True)
class ScaledCarCorrelation:
    """Cholesky factor, inverse diagonal, and log-determinant of M - rho*W.

    ``delta[i]`` is the i-th diagonal entry of (M - rho*W)^-1, the marginal
    variance the copula divides out; ``precision`` is the precision of the
    rescaled (unit-variance) field, diag(delta)^1/2 (M - rho*W) diag(delta)^1/2.
    """

    rho: float
    chol_L: np.ndarray
    delta: np.ndarray
    log_det: float
    precision: np.ndarray

    @property
    def n(self) -> int:
        return self.delta.shape[0]

    @property
    def sum_log_delta(self) -> float:
        return float(np.log(self.delta).sum())


def scaled_correlation(graph: ArealGraph, rho: float) -> ScaledCarCorrelation:
    """Factor M - rho*W and extract the diagonal of its inverse.

    The diagonal comes from forward-solving L Z = I and summing squares of
    the columns of Z = L^-1; no dense inverse is formed.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must be in [0,1) for a proper correlation, got {rho}")
    A = graph.M - rho * graph.W
    try:
        L = cholesky(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - PD for rho<1
        raise np.linalg.LinAlgError(f"M - rho*W not positive definite at rho={rho}") from exc
    Z = solve_triangular(L, np.eye(graph.n), lower=True, check_finite=False)
    delta = (Z * Z).sum(axis=0)
    log_det = 2.0 * float(np.log(np.diag(L)).sum())
    s = np.sqrt(delta)
    precision = s[:, None] * A * s[None, :]
    return ScaledCarCorrelation(
        rho=rho, chol_L=L, delta=delta, log_det=log_det, precision=precision
    )


class GmrfLogpdf(NamedTuple):
    value: float
    proper: bool


def gmrf_logpdf(x: np.ndarray, mean: np.ndarray, precision: CarPrecision) -> GmrfLogpdf:
    """Log-density of a GMRF with the given CAR precision.

    For rho < 1 this is the normalized multivariate normal log-density. At
    rho = 1 the distribution is improper, and the unnormalized log-kernel
    -0.5 (x-mean)' Q (x-mean) is returned with ``proper=False``.
    """
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    n = precision.graph.n
    if x.shape != (n,) or mean.shape != (n,):
        raise ValueError(f"x and mean must have shape ({n},)")
    d = x - mean
    quad = float(d @ precision.Q @ d)
    if not precision.is_proper:
        return GmrfLogpdf(value=-0.5 * quad, proper=False)
    L = cholesky(precision.Q, lower=True)
    log_det = 2.0 * float(np.log(np.diag(L)).sum())
    return GmrfLogpdf(value=0.5 * log_det - 0.5 * n * LOG_2PI - 0.5 * quad, proper=True)


def sample_gmrf(
    rng: np.random.Generator,
    mean: np.ndarray,
    chol_L: np.ndarray,
    scale: float = 1.0,
) -> np.ndarray:
    """Exact draw from a GMRF whose precision factors as L L'.

    Returns mean + scale * L^-T eps with eps iid standard normal, so the
    covariance of the draw is scale^2 (L L')^-1.
    """
    mean = np.asarray(mean, dtype=float)
    eps = rng.standard_normal(mean.shape[0])
    return mean + scale * solve_triangular(chol_L.T, eps, lower=False, check_finite=False)


def conditional_from_precision(
    P: np.ndarray,
    observed_idx: np.ndarray,
    observed_vals: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Conditional of the unobserved block of a zero-mean Gaussian, from its precision.

    With the precision partitioned over missing set I and observed set O,
    the conditional law is Normal(-P_II^-1 P_IO x_O, P_II^-1); this returns
    (cond_mean, cond_precision) where the second component is P_II itself.
    Indices are 0-based and the missing block is ordered ascending.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    obs = np.asarray(observed_idx, dtype=np.intp)
    if obs.size == 0 or obs.size >= n:
        raise ValueError("observed index set must be a nonempty proper subset")
    vals = np.asarray(observed_vals, dtype=float)
    if vals.shape != (obs.size,):
        raise ValueError("observed_vals must match observed_idx in length")
    miss = np.setdiff1d(np.arange(n), obs)
    P_mm = P[np.ix_(miss, miss)]
    P_mo = P[np.ix_(miss, obs)]
    try:
        factor = cho_factor(P_mm, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular missing-block precision") from exc
    cond_mean = -cho_solve(factor, P_mo @ vals, check_finite=False)
    return cond_mean, P_mm
