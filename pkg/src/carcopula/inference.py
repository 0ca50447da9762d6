"""Metropolis-within-Gibbs sampler for the six model variants.

Model space: the data layer is either independent gamma margins or the
scaled-CAR Gaussian copula; the prior layer on the coefficient fields
(log a, log b, c) is independent, intrinsic CAR, or proper CAR with its
own dependence parameter per coefficient.

Update cycle per iteration: the three coefficient blocks by joint
random-walk Metropolis, the copula dependence parameter by a logit-scale
walk, exact conjugate draws for the prior means and variances, logit
walks for the prior dependence parameters, then imputation of missing
cells on the latent scale from the precision-partitioned conditional.
Proposal scales adapt by Robbins-Monro during burn-in only and are frozen
afterwards, preserving the Markov property of retained draws.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import special
from scipy.linalg import cholesky, solve_triangular

from .copula import copula_logdensity_by_year
from .gmrf import conditional_from_precision, sample_gmrf, scaled_correlation
from .graph import ArealGraph
from .marginals import (
    FitConvergenceError,
    GammaSvcParams,
    TimeStandardizer,
    fit_region_gamma,
    standardize_time,
)
from .panel import RegionalPanel

PIT_EPS = 1e-12
MU_HYPER_PREC = 1e-2  # Normal(0, 10^2) hyperprior on prior means
SIG2_HYPER_SHAPE = 0.01
SIG2_HYPER_RATE = 0.01


class DataLayer(Enum):
    INDEP = "Indep"
    CAR = "CAR"


class PriorLayer(Enum):
    INDEP = "Indep"
    ICAR = "ICAR"
    CAR = "CAR"


@dataclass(frozen=True)
class ModelSpec:
    data_layer: DataLayer
    prior_layer: PriorLayer

    @property
    def name(self) -> str:
        return f"{self.data_layer.value}-{self.prior_layer.value}"

    @classmethod
    def from_name(cls, name: str) -> "ModelSpec":
        try:
            d, p = name.split("-")
            return cls(DataLayer(d), PriorLayer(p))
        except (ValueError, KeyError):
            raise ValueError(
                f"unknown model name {name!r}; expected e.g. 'CAR-ICAR'"
            ) from None


ALL_SPECS = tuple(
    ModelSpec(d, p)
    for d in (DataLayer.INDEP, DataLayer.CAR)
    for p in (PriorLayer.INDEP, PriorLayer.ICAR, PriorLayer.CAR)
)


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 200_000
    burn_in: int = 40_000
    thin: int = 20
    seed: int = 0
    adapt: bool = True
    target_accept_block: float = 0.234
    target_accept_scalar: float = 0.44
    init_scale_block: float = 0.02
    init_scale_scalar: float = 0.5

    def __post_init__(self):
        if self.iterations <= 0 or self.burn_in < 0 or self.thin <= 0:
            raise ValueError("iterations, burn_in, thin must be positive")
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in must be smaller than iterations")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    @classmethod
    def desk_scale(cls, seed: int = 0, **kw) -> "ChainConfig":
        return cls(iterations=20_000, burn_in=4_000, thin=5, seed=seed, **kw)


@dataclass
class HyperState:
    mu_a: float
    mu_b: float
    mu_c: float
    sig2_a: float
    sig2_b: float
    sig2_c: float
    rho_a: float | None = None
    rho_b: float | None = None
    rho_c: float | None = None

    def __post_init__(self):
        for name in ("sig2_a", "sig2_b", "sig2_c"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class ChainOutput:
    """Thinned posterior draws plus the bookkeeping the diagnostics need."""

    spec: ModelSpec
    config: ChainConfig
    regions: tuple[str, ...]
    years: tuple[int, ...]
    param_names: tuple[str, ...]
    draws: dict[str, np.ndarray]
    acceptance_rates: dict[str, float]
    proposal_scales: dict[str, float]
    pointwise_loglik: np.ndarray  # (n_retained, T)
    deviance: np.ndarray  # (n_retained,)
    missing_cells: tuple[tuple[int, int], ...]
    imputed_y: np.ndarray  # (n_retained, n_missing)
    imputed_z: np.ndarray  # (n_retained, n_missing)
    clamp_count: int
    nonfinite_rejects: int
    metadata: dict = field(default_factory=dict)

    @property
    def n_retained(self) -> int:
        return self.deviance.shape[0]

    def flat_columns(self) -> list[tuple[str, np.ndarray]]:
        """Draws as named scalar columns in the canonical export order."""
        cols: list[tuple[str, np.ndarray]] = []
        n = len(self.regions)
        for group in ("a", "b", "c"):
            arr = self.draws[group]
            for i in range(n):
                cols.append((f"{group}_{i+1}", arr[:, i]))
        for name in self.param_names:
            if name in ("a", "b", "c"):
                continue
            cols.append((name, self.draws[name]))
        return cols


class _BlockTerms(NamedTuple):
    Z: np.ndarray | None
    gamma_year: np.ndarray
    copula_year: np.ndarray
    clamps: int


_SVC_BLOCKS = ("a", "b", "c")


class GibbsSampler:
    """One MCMC chain over a fixed panel, graph, and model specification.

    All randomness flows through the ``numpy.random.Generator`` seeded from
    the chain config, so runs are bit-reproducible.
    """

    def __init__(
        self,
        panel: RegionalPanel,
        graph: ArealGraph | None,
        spec: ModelSpec,
        config: ChainConfig,
        ts: TimeStandardizer | None = None,
        init: GammaSvcParams | None = None,
    ):
        self.panel = panel
        self.graph = graph
        self.spec = spec
        self.config = config
        self.ts = ts if ts is not None else standardize_time(panel.T)
        self.n = panel.n
        self.T = panel.T

        needs_graph = (
            spec.data_layer is DataLayer.CAR or spec.prior_layer is not PriorLayer.INDEP
        )
        if needs_graph:
            if graph is None:
                raise ValueError(f"model {spec.name} requires an adjacency graph")
            if graph.n != panel.n:
                raise ValueError("graph and panel disagree on region count")

        self.mask = panel.mask
        self.y = panel.values
        # flattened observed-cell views: the likelihood hot path works on
        # these instead of masked matrices
        obs_i, obs_t = np.nonzero(self.mask)
        self._obs_i = obs_i
        self._obs_t = obs_t
        self._flat_obs = obs_i * self.T + obs_t
        self._y_cells = self.y[self.mask]
        self._logy_cells = np.log(self._y_cells)
        self._missing_cells = tuple(panel.missing_cells())
        self._missing_by_year = [
            np.nonzero(~self.mask[:, t])[0] for t in range(self.T)
        ]
        self._years_with_missing = [
            t for t in range(self.T) if self._missing_by_year[t].size
        ]

        self.rng = np.random.default_rng(np.random.PCG64(config.seed))

        params = init if init is not None else self._initial_params()
        self.astar = np.log(params.a)
        self.bstar = np.log(params.b)
        self.c = params.c.copy()
        self.rho = 0.5 if spec.data_layer is DataLayer.CAR else 0.0

        self.hyper = HyperState(
            mu_a=float(self.astar.mean()),
            mu_b=float(self.bstar.mean()),
            mu_c=float(self.c.mean()),
            sig2_a=max(float(self.astar.var(ddof=1)), 1e-4),
            sig2_b=max(float(self.bstar.var(ddof=1)), 1e-4),
            sig2_c=max(float(self.c.var(ddof=1)), 1e-4),
        )
        if spec.prior_layer is PriorLayer.CAR:
            self.hyper.rho_a = self.hyper.rho_b = self.hyper.rho_c = 0.5
        elif spec.prior_layer is PriorLayer.ICAR:
            self.hyper.rho_a = self.hyper.rho_b = self.hyper.rho_c = 1.0

        self._setup_prior_structure()

        # Latent matrix: PIT scores at observed cells, imputed values elsewhere.
        self._Z = np.zeros((self.n, self.T))
        self._imp_y_indep = np.full(len(self._missing_cells), np.nan)
        self.clamp_count = 0
        self.nonfinite_rejects = 0
        self._refresh_data_terms()
        self._check_finite_start()

        scalar_names = []
        if spec.data_layer is DataLayer.CAR:
            scalar_names.append("rho")
        if spec.prior_layer is PriorLayer.CAR:
            scalar_names += ["rho_a", "rho_b", "rho_c"]
        self._scales = {b: config.init_scale_block for b in _SVC_BLOCKS}
        self._scales.update({s: config.init_scale_scalar for s in scalar_names})
        self._adapt_k = {k: 0 for k in self._scales}
        self._accepts = {k: 0 for k in self._scales}
        self._proposals = {k: 0 for k in self._scales}

    # ------------------------------------------------------------------
    # initialization

    def _initial_params(self) -> GammaSvcParams:
        a = np.empty(self.n)
        b = np.empty(self.n)
        c = np.empty(self.n)
        global_mean = float(self.y[self.mask].mean())
        for i in range(self.n):
            series = self.y[i]
            try:
                fit = fit_region_gamma(series, self.ts)
                a[i], b[i], c[i] = fit.a, fit.b, fit.c
            except FitConvergenceError as exc:
                a[i], b[i], c[i] = exc.best.a, exc.best.b, exc.best.c
            except ValueError:
                obs = series[np.isfinite(series)]
                if obs.size == 0:
                    a[i], b[i], c[i] = 10.0, 1.0 / global_mean, 0.0
                else:
                    ybar = float(obs.mean())
                    s2 = float(obs.var()) if obs.size > 1 else ybar * ybar
                    a[i] = min(max(ybar * ybar / s2 if s2 > 0 else 10.0, 0.05), 1e4)
                    b[i] = 1.0 / ybar
                    c[i] = 0.0
        return GammaSvcParams(a=a, b=b, c=c)

    def _setup_prior_structure(self) -> None:
        # K is the prior quadratic-form precision pattern: None stands for the
        # identity (independent priors); M - W for ICAR; M - rho_x W for CAR
        # with per-coefficient rho_x refreshed on acceptance.
        self._K: dict[str, np.ndarray | None] = {}
        self._K_logdet: dict[str, float] = {}
        if self.spec.prior_layer is PriorLayer.INDEP:
            for blk in _SVC_BLOCKS:
                self._K[blk] = None
        elif self.spec.prior_layer is PriorLayer.ICAR:
            K = self.graph.M - self.graph.W
            for blk in _SVC_BLOCKS:
                self._K[blk] = K
        else:
            for blk in _SVC_BLOCKS:
                rho_x = getattr(self.hyper, f"rho_{blk}")
                self._K[blk] = self.graph.M - rho_x * self.graph.W
                self._K_logdet[blk] = self._logdet_pd(self._K[blk])

    @staticmethod
    def _logdet_pd(K: np.ndarray) -> float:
        L = cholesky(K, lower=True, check_finite=False)
        return 2.0 * float(np.log(np.diag(L)).sum())

    def _check_finite_start(self) -> None:
        if not np.isfinite(self._gamma_year).all():
            raise RuntimeError("non-finite gamma log-likelihood at initialization")
        if not np.isfinite(self._copula_year).all():
            raise RuntimeError("non-finite copula log-density at initialization")
        for blk in _SVC_BLOCKS:
            mu = getattr(self.hyper, f"mu_{blk}")
            sig2 = getattr(self.hyper, f"sig2_{blk}")
            lp = -0.5 / sig2 * self._prior_quad(blk, self._block_vec(blk), mu)
            if not np.isfinite(lp):
                raise RuntimeError(f"non-finite prior kernel for block {blk} at initialization")

    # ------------------------------------------------------------------
    # cached data terms

    def _block_vec(self, which: str) -> np.ndarray:
        return {"a": self.astar, "b": self.bstar, "c": self.c}[which]

    def _rate_at(self, i: int, t: int) -> float:
        return math.exp(self.astar[i] + self.bstar[i] + self.c[i] * self.ts.t_star[t])

    def _set_block_vec(self, which: str, vec: np.ndarray) -> None:
        if which == "a":
            self.astar = vec
        elif which == "b":
            self.bstar = vec
        else:
            self.c = vec

    def _terms_for(self, astar, bstar, c) -> _BlockTerms | None:
        """Likelihood caches implied by a coefficient configuration.

        Returns None when any term is non-finite (overflowing proposals are
        auto-rejected by the caller). All per-cell work happens on the
        flattened observed-cell vectors.
        """
        oi, ot = self._obs_i, self._obs_t
        a = np.exp(astar)
        ab = astar + bstar
        log_lam = ab[oi] + c[oi] * self.ts.t_star[ot]
        with np.errstate(over="ignore", invalid="ignore"):
            rate_y = np.exp(log_lam) * self._y_cells
            a_cells = a[oi]
            terms = (
                a_cells * log_lam
                - special.gammaln(a)[oi]
                + (a_cells - 1.0) * self._logy_cells
                - rate_y
            )
        gamma_year = np.bincount(ot, weights=terms, minlength=self.T)
        if not np.isfinite(gamma_year).all():
            return None
        clamps = 0
        if self.spec.data_layer is DataLayer.CAR:
            with np.errstate(over="ignore", invalid="ignore"):
                u = special.gammainc(a_cells, rate_y)
            if not np.isfinite(u).all():
                return None
            clamps = int(np.count_nonzero((u < PIT_EPS) | (u > 1.0 - PIT_EPS)))
            Z = self._Z.copy()
            Z.ravel()[self._flat_obs] = special.ndtri(np.clip(u, PIT_EPS, 1.0 - PIT_EPS))
            copula_year = copula_logdensity_by_year(Z, self._scaled)
            if not np.isfinite(copula_year).all():
                return None
        else:
            Z = None
            copula_year = np.zeros(self.T)
        return _BlockTerms(Z=Z, gamma_year=gamma_year,
                           copula_year=copula_year, clamps=clamps)

    def _block_terms(self, which: str, vec: np.ndarray) -> _BlockTerms | None:
        trial = {"a": self.astar, "b": self.bstar, "c": self.c}
        trial[which] = vec
        return self._terms_for(trial["a"], trial["b"], trial["c"])

    def _current_terms(self) -> _BlockTerms:
        return _BlockTerms(
            Z=None if self.spec.data_layer is DataLayer.INDEP else self._Z,
            gamma_year=self._gamma_year,
            copula_year=self._copula_year,
            clamps=0,
        )

    def _data_loglik(self, terms: _BlockTerms) -> float:
        return float(terms.gamma_year.sum() + terms.copula_year.sum())

    def _refresh_data_terms(self) -> None:
        if self.spec.data_layer is DataLayer.CAR:
            self._scaled = scaled_correlation(self.graph, self.rho)
        else:
            self._scaled = None
        terms = self._terms_for(self.astar, self.bstar, self.c)
        if terms is None:
            raise RuntimeError("non-finite data log-likelihood at initialization")
        if terms.Z is not None:
            self._Z = terms.Z
        self._gamma_year = terms.gamma_year
        self._copula_year = terms.copula_year
        self.clamp_count += terms.clamps

    # ------------------------------------------------------------------
    # prior algebra

    def _prior_quad(self, which: str, vec: np.ndarray, mu: float) -> float:
        d = vec - mu
        K = self._K[which]
        if K is None:
            return float(d @ d)
        return float(d @ K @ d)

    def _prior_one_K_one(self, which: str) -> float:
        K = self._K[which]
        if K is None:
            return float(self.n)
        return float(K.sum())

    def _prior_one_K_x(self, which: str, vec: np.ndarray) -> float:
        K = self._K[which]
        if K is None:
            return float(vec.sum())
        return float(K.sum(axis=0) @ vec)

    # ------------------------------------------------------------------
    # adaptation

    def _adapt(self, name: str, alpha: float, target: float) -> None:
        if not self.config.adapt:
            return
        self._adapt_k[name] += 1
        gamma = (self._adapt_k[name]) ** -0.6
        new_log = math.log(self._scales[name]) + gamma * (alpha - target)
        self._scales[name] = min(max(math.exp(new_log), 1e-8), 1e4)

    def _tally(self, name: str, accepted: bool, in_burn_in: bool) -> None:
        if not in_burn_in:
            self._proposals[name] += 1
            if accepted:
                self._accepts[name] += 1

    # ------------------------------------------------------------------
    # update steps

    def update_svc_block(self, which: str, rng: np.random.Generator,
                         in_burn_in: bool = False) -> bool:
        vec = self._block_vec(which)
        prop = vec + self._scales[which] * rng.standard_normal(self.n)
        terms = self._block_terms(which, prop)
        mu = getattr(self.hyper, f"mu_{which}")
        sig2 = getattr(self.hyper, f"sig2_{which}")
        if terms is None:
            self.nonfinite_rejects += 1
            alpha, accepted = 0.0, False
        else:
            log_r = (
                self._data_loglik(terms)
                - self._data_loglik(self._current_terms())
                - 0.5 / sig2 * self._prior_quad(which, prop, mu)
                + 0.5 / sig2 * self._prior_quad(which, vec, mu)
            )
            if not np.isfinite(log_r):
                self.nonfinite_rejects += 1
                alpha, accepted = 0.0, False
            else:
                alpha = math.exp(min(0.0, log_r))
                accepted = math.log(rng.uniform()) < log_r if log_r < 0 else True
        if accepted:
            self._set_block_vec(which, prop)
            if terms.Z is not None:
                self._Z = terms.Z
            self._gamma_year = terms.gamma_year
            self._copula_year = terms.copula_year
            self.clamp_count += terms.clamps
        if in_burn_in:
            self._adapt(which, alpha, self.config.target_accept_block)
        self._tally(which, accepted, in_burn_in)
        return accepted

    def update_rho_data(self, rng: np.random.Generator, in_burn_in: bool = False) -> bool:
        if self.spec.data_layer is not DataLayer.CAR:
            raise RuntimeError("rho update only applies to the CAR data layer")
        rho = self.rho
        logit = math.log(rho / (1.0 - rho))
        prop_logit = logit + self._scales["rho"] * rng.standard_normal()
        rho_p = 1.0 / (1.0 + math.exp(-prop_logit))
        accepted = False
        alpha = 0.0
        if 0.0 < rho_p < 1.0:
            scaled_p = scaled_correlation(self.graph, rho_p)
            cop_p = copula_logdensity_by_year(self._Z, scaled_p)
            log_r = (
                float(cop_p.sum() - self._copula_year.sum())
                + math.log(rho_p * (1.0 - rho_p))
                - math.log(rho * (1.0 - rho))
            )
            if np.isfinite(log_r):
                alpha = math.exp(min(0.0, log_r))
                accepted = math.log(rng.uniform()) < log_r if log_r < 0 else True
            else:
                self.nonfinite_rejects += 1
            if accepted:
                self.rho = rho_p
                self._scaled = scaled_p
                self._copula_year = cop_p
        if in_burn_in:
            self._adapt("rho", alpha, self.config.target_accept_scalar)
        self._tally("rho", accepted, in_burn_in)
        return accepted

    def update_mu(self, which: str, rng: np.random.Generator) -> float:
        vec = self._block_vec(which)
        sig2 = getattr(self.hyper, f"sig2_{which}")
        prec = self._prior_one_K_one(which) / sig2 + MU_HYPER_PREC
        mean = (self._prior_one_K_x(which, vec) / sig2) / prec
        draw = mean + math.sqrt(1.0 / prec) * rng.standard_normal()
        setattr(self.hyper, f"mu_{which}", draw)
        return draw

    def update_sigma2(self, which: str, rng: np.random.Generator) -> float:
        vec = self._block_vec(which)
        mu = getattr(self.hyper, f"mu_{which}")
        quad = self._prior_quad(which, vec, mu)
        if quad < -1e-9:
            raise AssertionError("negative prior quadratic form for a PSD precision")
        shape = 0.5 * self.n + SIG2_HYPER_SHAPE
        rate = 0.5 * max(quad, 0.0) + SIG2_HYPER_RATE
        draw = 1.0 / rng.gamma(shape, 1.0 / rate)
        setattr(self.hyper, f"sig2_{which}", draw)
        return draw

    def update_rho_prior(self, which: str, rng: np.random.Generator,
                         in_burn_in: bool = False) -> bool:
        if self.spec.prior_layer is not PriorLayer.CAR:
            raise RuntimeError("rho prior update only applies to CAR priors")
        name = f"rho_{which}"
        rho_x = getattr(self.hyper, name)
        vec = self._block_vec(which)
        mu = getattr(self.hyper, f"mu_{which}")
        sig2 = getattr(self.hyper, f"sig2_{which}")
        logit = math.log(rho_x / (1.0 - rho_x))
        prop_logit = logit + self._scales[name] * rng.standard_normal()
        rho_p = 1.0 / (1.0 + math.exp(-prop_logit))
        accepted = False
        alpha = 0.0
        if 0.0 < rho_p < 1.0:
            K_p = self.graph.M - rho_p * self.graph.W
            try:
                logdet_p = self._logdet_pd(K_p)
            except np.linalg.LinAlgError:
                logdet_p = None
            if logdet_p is not None:
                d = vec - mu
                quad_p = float(d @ K_p @ d)
                quad_cur = self._prior_quad(which, vec, mu)
                log_r = (
                    0.5 * (logdet_p - self._K_logdet[which])
                    - 0.5 / sig2 * (quad_p - quad_cur)
                    + math.log(rho_p * (1.0 - rho_p))
                    - math.log(rho_x * (1.0 - rho_x))
                )
                if np.isfinite(log_r):
                    alpha = math.exp(min(0.0, log_r))
                    accepted = math.log(rng.uniform()) < log_r if log_r < 0 else True
                else:
                    self.nonfinite_rejects += 1
                if accepted:
                    setattr(self.hyper, name, rho_p)
                    self._K[which] = K_p
                    self._K_logdet[which] = logdet_p
        if in_burn_in:
            self._adapt(name, alpha, self.config.target_accept_scalar)
        self._tally(name, accepted, in_burn_in)
        return accepted

    def impute_missing(self, rng: np.random.Generator) -> None:
        """Draw missing cells; latent-scale conditional under the CAR layer."""
        if not self._years_with_missing:
            return
        if self.spec.data_layer is DataLayer.INDEP:
            # Independent margins: missing values are plain gamma draws. They
            # do not feed back into the likelihood.
            for k, (i, t) in enumerate(self._missing_cells):
                self._imp_y_indep[k] = rng.gamma(
                    math.exp(self.astar[i]), 1.0 / self._rate_at(i, t)
                )
            return
        P = self._scaled.precision
        for t in self._years_with_missing:
            miss = self._missing_by_year[t]
            obs = np.nonzero(self.mask[:, t])[0]
            if obs.size == 0:
                x = sample_gmrf(rng, np.zeros(self.n), self._scaled.chol_L)
                self._Z[:, t] = x / np.sqrt(self._scaled.delta)
            else:
                cond_mean, cond_prec = conditional_from_precision(P, obs, self._Z[obs, t])
                L = cholesky(cond_prec, lower=True, check_finite=False)
                eps = rng.standard_normal(miss.size)
                self._Z[miss, t] = cond_mean + solve_triangular(L.T, eps, lower=False, check_finite=False)
            # refresh the copula term for this year
            z_t = self._Z[:, t]
            quad = float(z_t @ P @ z_t)
            self._copula_year[t] = (
                0.5 * (self._scaled.log_det + self._scaled.sum_log_delta)
                - 0.5 * quad
                + 0.5 * float(z_t @ z_t)
            )

    # ------------------------------------------------------------------
    # main loop

    def _imputed_values(self) -> tuple[np.ndarray, np.ndarray]:
        """Current missing-cell draws on the data and latent scales."""
        if not self._missing_cells:
            return np.empty(0), np.empty(0)
        if self.spec.data_layer is DataLayer.INDEP:
            return self._imp_y_indep.copy(), np.full(len(self._missing_cells), np.nan)
        ys = np.empty(len(self._missing_cells))
        zs = np.empty(len(self._missing_cells))
        for k, (i, t) in enumerate(self._missing_cells):
            z = self._Z[i, t]
            u = min(max(special.ndtr(z), 1e-15), 1.0 - 1e-15)
            ys[k] = special.gammaincinv(math.exp(self.astar[i]), u) / self._rate_at(i, t)
            zs[k] = z
        return ys, zs

    def run(self) -> ChainOutput:
        cfg = self.config
        n_ret = cfg.n_retained
        draws: dict[str, np.ndarray] = {
            "a": np.empty((n_ret, self.n)),
            "b": np.empty((n_ret, self.n)),
            "c": np.empty((n_ret, self.n)),
            "mu_a": np.empty(n_ret),
            "mu_b": np.empty(n_ret),
            "mu_c": np.empty(n_ret),
            "sig2_a": np.empty(n_ret),
            "sig2_b": np.empty(n_ret),
            "sig2_c": np.empty(n_ret),
        }
        param_names = ["a", "b", "c"]
        if self.spec.data_layer is DataLayer.CAR:
            draws["rho"] = np.empty(n_ret)
            param_names.append("rho")
        param_names += ["mu_a", "mu_b", "mu_c", "sig2_a", "sig2_b", "sig2_c"]
        if self.spec.prior_layer is PriorLayer.CAR:
            for blk in _SVC_BLOCKS:
                draws[f"rho_{blk}"] = np.empty(n_ret)
                param_names.append(f"rho_{blk}")

        pointwise = np.empty((n_ret, self.T))
        deviance = np.empty(n_ret)
        imp_y = np.empty((n_ret, len(self._missing_cells)))
        imp_z = np.empty((n_ret, len(self._missing_cells)))

        rng = self.rng
        rec = 0
        for it in range(cfg.iterations):
            in_burn_in = it < cfg.burn_in
            for blk in _SVC_BLOCKS:
                self.update_svc_block(blk, rng, in_burn_in)
            if self.spec.data_layer is DataLayer.CAR:
                self.update_rho_data(rng, in_burn_in)
            for blk in _SVC_BLOCKS:
                self.update_mu(blk, rng)
            for blk in _SVC_BLOCKS:
                self.update_sigma2(blk, rng)
            if self.spec.prior_layer is PriorLayer.CAR:
                for blk in _SVC_BLOCKS:
                    self.update_rho_prior(blk, rng, in_burn_in)
            self.impute_missing(rng)

            if not in_burn_in and (it - cfg.burn_in + 1) % cfg.thin == 0:
                draws["a"][rec] = np.exp(self.astar)
                draws["b"][rec] = np.exp(self.bstar)
                draws["c"][rec] = self.c
                if self.spec.data_layer is DataLayer.CAR:
                    draws["rho"][rec] = self.rho
                for blk in _SVC_BLOCKS:
                    draws[f"mu_{blk}"][rec] = getattr(self.hyper, f"mu_{blk}")
                    draws[f"sig2_{blk}"][rec] = getattr(self.hyper, f"sig2_{blk}")
                if self.spec.prior_layer is PriorLayer.CAR:
                    for blk in _SVC_BLOCKS:
                        draws[f"rho_{blk}"][rec] = getattr(self.hyper, f"rho_{blk}")
                per_year = self._gamma_year + self._copula_year
                pointwise[rec] = per_year
                deviance[rec] = -2.0 * float(per_year.sum())
                if self._missing_cells:
                    ys, zs = self._imputed_values()
                    imp_y[rec] = ys
                    imp_z[rec] = zs
                rec += 1

        acceptance = {
            k: (self._accepts[k] / self._proposals[k]) if self._proposals[k] else float("nan")
            for k in self._scales
        }
        metadata = {}
        if self.spec.prior_layer is PriorLayer.ICAR:
            metadata["icar_note"] = (
                "under the intrinsic prior the coefficient vectors carry no "
                "information about the prior means (row sums of M - W vanish); "
                "their conditionals reduce to the Normal(0, 100) hyperprior"
            )
        return ChainOutput(
            spec=self.spec,
            config=cfg,
            regions=self.panel.regions,
            years=self.panel.years,
            param_names=tuple(param_names),
            draws=draws,
            acceptance_rates=acceptance,
            proposal_scales=dict(self._scales),
            pointwise_loglik=pointwise,
            deviance=deviance,
            missing_cells=self._missing_cells,
            imputed_y=imp_y,
            imputed_z=imp_z,
            clamp_count=self.clamp_count,
            nonfinite_rejects=self.nonfinite_rejects,
            metadata=metadata,
        )


def run_chain(
    panel: RegionalPanel,
    graph: ArealGraph | None,
    spec: ModelSpec,
    config: ChainConfig,
    ts: TimeStandardizer | None = None,
    init: GammaSvcParams | None = None,
) -> ChainOutput:
    """Run one Metropolis-within-Gibbs chain and return the thinned output."""
    sampler = GibbsSampler(panel, graph, spec, config, ts=ts, init=init)
    try:
        # The factorizations here are tiny; threaded BLAS only adds
        # synchronization overhead to the sampling loop.
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return sampler.run()
    with threadpool_limits(limits=1):
        return sampler.run()


# ----------------------------------------------------------------------
# draw import/export


def write_draws_csv(output: ChainOutput, path) -> None:
    """One row per retained draw; full-precision floats for exact round trips."""
    cols = output.flat_columns()
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([name for name, _ in cols])
        for r in range(output.n_retained):
            writer.writerow([repr(float(arr[r])) for _, arr in cols])


def read_draws_csv(path) -> dict[str, np.ndarray]:
    """Read a draws CSV back into named columns."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in rec] for rec in reader if rec]
    data = np.array(rows)
    return {name: data[:, j] for j, name in enumerate(header)}
