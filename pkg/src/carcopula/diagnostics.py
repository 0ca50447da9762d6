"""Convergence, fit, and model-comparison metrics for chain output."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .copula import simulate_panel
from .graph import ArealGraph
from .inference import ChainOutput, DataLayer
from .marginals import GammaSvcParams, TimeStandardizer
from .panel import RegionalPanel


def _batch_means_lrv(x: np.ndarray) -> float:
    """Long-run variance estimate by nonoverlapping batch means.

    Batch size floor(sqrt(len)); requires at least two batches.
    """
    m = x.shape[0]
    b = int(math.isqrt(m))
    k = m // b
    if k < 2:
        raise ValueError(f"chain segment of length {m} too short for batch means")
    means = x[: k * b].reshape(k, b).mean(axis=1)
    return b * float(means.var(ddof=1))


def geweke(chain: np.ndarray, frac_first: float = 0.1, frac_last: float = 0.5) -> float:
    """Geweke convergence z-score comparing early and late segment means.

    Standard errors use the batch-means spectral estimate within each
    segment; the default segments are the first 10% and last 50%.
    """
    x = np.asarray(chain, dtype=float)
    if x.ndim != 1:
        raise ValueError("chain must be one-dimensional")
    m = x.shape[0]
    n1 = int(frac_first * m)
    n2 = int(frac_last * m)
    if n1 < 4 or n2 < 4 or n1 + n2 > m:
        raise ValueError("segments too short or overlapping")
    first, last = x[:n1], x[m - n2:]
    if first.var() == 0.0 or last.var() == 0.0:
        raise ValueError("Geweke undefined for a constant segment")
    se2_first = _batch_means_lrv(first) / n1
    se2_last = _batch_means_lrv(last) / n2
    return float((first.mean() - last.mean()) / math.sqrt(se2_first + se2_last))


def ess_batch_means(chain: np.ndarray) -> float:
    """Effective sample size from the batch-means long-run variance, capped at M."""
    x = np.asarray(chain, dtype=float)
    if x.ndim != 1:
        raise ValueError("chain must be one-dimensional")
    m = x.shape[0]
    if m < 100:
        raise ValueError(f"need at least 100 draws, got {m}")
    s2 = float(x.var(ddof=1))
    if s2 == 0.0:
        raise ValueError("ESS undefined for a constant chain")
    lrv = _batch_means_lrv(x)
    return float(min(m, m * s2 / lrv))


class DicResult(NamedTuple):
    dic: float
    p_d: float
    d_bar: float


def dic(deviance_series: np.ndarray, theta_hat_deviance: float) -> DicResult:
    """DIC = D_bar + p_D with p_D = D_bar - D(theta_hat)."""
    d = np.asarray(deviance_series, dtype=float)
    d_bar = float(d.mean())
    p_d = d_bar - float(theta_hat_deviance)
    return DicResult(dic=d_bar + p_d, p_d=p_d, d_bar=d_bar)


class WaicResult(NamedTuple):
    waic: float
    p_w: float
    fit_term: float  # -2 * sum of the per-unit location terms


def waic(pointwise_loglik: np.ndarray, lppd: bool = False) -> WaicResult:
    """WAIC from a draws-by-units pointwise log-likelihood matrix.

    By default each unit's location term m_i is the posterior mean of the
    log-density; with ``lppd=True`` it is the log of the posterior mean
    density (computed by a stable log-mean-exp), the usual log pointwise
    predictive density. p_W is the summed posterior variance of the
    log-density either way.
    """
    ll = np.asarray(pointwise_loglik, dtype=float)
    if ll.ndim != 2 or ll.shape[0] < 2:
        raise ValueError("need a (draws >= 2, units) matrix")
    if lppd:
        m = logsumexp(ll, axis=0) - math.log(ll.shape[0])
    else:
        m = ll.mean(axis=0)
    v = ll.var(axis=0, ddof=1)
    p_w = float(v.sum())
    fit = -2.0 * float(m.sum())
    return WaicResult(waic=fit + 2.0 * p_w, p_w=p_w, fit_term=fit)


class QqDiscrepancy(NamedTuple):
    rmse_u: float
    mae_u: float


def qq_discrepancy(u_values: np.ndarray) -> QqDiscrepancy:
    """RMSE and MAE of PIT order statistics against i/(n+1) plotting positions."""
    u = np.asarray(u_values, dtype=float).ravel()
    u = u[np.isfinite(u)]
    if u.size == 0:
        raise ValueError("empty input")
    srt = np.sort(u)
    pos = np.arange(1, u.size + 1) / (u.size + 1.0)
    diff = srt - pos
    return QqDiscrepancy(
        rmse_u=float(np.sqrt(np.mean(diff * diff))),
        mae_u=float(np.mean(np.abs(diff))),
    )


# ----------------------------------------------------------------------
# posterior predictive checks

PPC_STATISTICS = (
    "mean",
    "sd",
    "minimum",
    "maximum",
    "site_mean",
    "site_sd",
    "site_minimum",
    "site_maximum",
    "neighbor_correlation",
)


@dataclass
class PpcResult:
    p_values: dict[str, float | None]
    observed: dict[str, float | None]
    coverage: float
    n_replicates: int
    warning: str | None = None


def _panel_statistics(values: np.ndarray, mask: np.ndarray,
                      graph: ArealGraph | None) -> dict[str, float | None]:
    obs = values[mask]
    stats: dict[str, float | None] = {
        "mean": float(obs.mean()),
        "sd": float(obs.std(ddof=1)),
        "minimum": float(obs.min()),
        "maximum": float(obs.max()),
    }
    site_means, site_sds, site_mins, site_maxs = [], [], [], []
    for i in range(values.shape[0]):
        row = values[i][mask[i]]
        if row.size == 0:
            continue
        site_means.append(row.mean())
        site_sds.append(row.std(ddof=1) if row.size > 1 else 0.0)
        site_mins.append(row.min())
        site_maxs.append(row.max())
    stats["site_mean"] = float(np.mean(site_means))
    stats["site_sd"] = float(np.mean(site_sds))
    stats["site_minimum"] = float(np.mean(site_mins))
    stats["site_maximum"] = float(np.mean(site_maxs))
    if graph is not None:
        corrs = []
        for i, j in graph.edges:
            both = mask[i - 1] & mask[j - 1]
            if both.sum() >= 3:
                xi = values[i - 1][both]
                xj = values[j - 1][both]
                sx, sy = xi.std(), xj.std()
                if sx > 0 and sy > 0:
                    corrs.append(float(np.corrcoef(xi, xj)[0, 1]))
        stats["neighbor_correlation"] = float(np.mean(corrs)) if corrs else None
    else:
        stats["neighbor_correlation"] = None
    return stats


def posterior_predictive_check(
    panel: RegionalPanel,
    output: ChainOutput,
    graph: ArealGraph | None,
    ts: TimeStandardizer,
    rng: np.random.Generator,
    max_draws: int | None = None,
) -> PpcResult:
    """One-sided posterior predictive p-values and data coverage.

    One replicated panel is simulated per retained draw (same missingness
    mask; statistics use observed cells only). p = P(T_rep >= T_obs). The
    neighbor-correlation statistic is reported for CAR data-layer models
    only. Coverage is the share of observed cells inside the central 95%
    predictive interval.
    """
    car_layer = output.spec.data_layer is DataLayer.CAR
    use_graph = graph if car_layer else None
    obs_stats = _panel_statistics(panel.values, panel.mask, use_graph)

    n_draws = output.n_retained
    if max_draws is not None and max_draws < n_draws:
        idx = np.linspace(0, n_draws - 1, max_draws).astype(int)
    else:
        idx = np.arange(n_draws)
    missing = ~panel.mask

    rep_stats: dict[str, list[float]] = {k: [] for k in PPC_STATISTICS}
    rep_cells = np.empty((idx.size, int(panel.mask.sum())))
    cell_sel = panel.mask
    for r, s in enumerate(idx):
        params = GammaSvcParams(
            a=output.draws["a"][s], b=output.draws["b"][s], c=output.draws["c"][s]
        )
        rho = float(output.draws["rho"][s]) if car_layer else 0.0
        if car_layer:
            rep = simulate_panel(rng, graph, params, ts, rho, missing_mask=missing)
        else:
            lam = params.a[:, None] * params.b[:, None] * np.exp(
                np.outer(params.c, ts.t_star)
            )
            vals = rng.gamma(np.broadcast_to(params.a[:, None], lam.shape), 1.0 / lam)
            vals = np.where(missing, np.nan, vals)
            rep = RegionalPanel(regions=panel.regions, years=panel.years, values=vals)
        stats = _panel_statistics(rep.values, panel.mask, use_graph)
        for k in PPC_STATISTICS:
            if stats.get(k) is not None:
                rep_stats[k].append(stats[k])
        rep_cells[r] = rep.values[cell_sel]

    p_values: dict[str, float | None] = {}
    for k in PPC_STATISTICS:
        if obs_stats.get(k) is None or not rep_stats[k]:
            p_values[k] = None
            continue
        reps = np.array(rep_stats[k])
        p_values[k] = float(np.mean(reps >= obs_stats[k]))

    lo = np.quantile(rep_cells, 0.025, axis=0)
    hi = np.quantile(rep_cells, 0.975, axis=0)
    observed_cells = panel.values[cell_sel]
    coverage = float(np.mean((observed_cells >= lo) & (observed_cells <= hi)))

    warning = None
    if idx.size < 100:
        warning = f"only {idx.size} retained draws; predictive p-values are coarse"
    return PpcResult(
        p_values=p_values,
        observed=obs_stats,
        coverage=coverage,
        n_replicates=int(idx.size),
        warning=warning,
    )


# ----------------------------------------------------------------------
# model comparison report


@dataclass
class ModelComparisonRow:
    model: str
    avg_sd_a: float
    avg_sd_b: float
    avg_sd_c: float
    sd_rho: float | None
    dic: float
    p_d: float
    waic: float
    p_w: float


@dataclass
class ComparisonReport:
    rows: list[ModelComparisonRow] = field(default_factory=list)

    def by_model(self) -> dict[str, ModelComparisonRow]:
        return {r.model: r for r in self.rows}


def deviance_at_posterior_mean(
    output: ChainOutput,
    panel: RegionalPanel,
    graph: ArealGraph | None,
    ts: TimeStandardizer,
    log_scale_plugin: bool = False,
) -> float:
    """Deviance at the plug-in parameter for DIC.

    The plug-in is the posterior mean of (a, b, c, rho) on the natural
    scale by default, or of (log a, log b, c, rho) with
    ``log_scale_plugin=True``. Missing cells are fixed at the posterior
    means of their imputed latent scores.
    """
    from .copula import copula_logdensity_by_year, latent_scores
    from .gmrf import scaled_correlation
    from .marginals import gamma_logpdf, rate_matrix

    if log_scale_plugin:
        a_hat = np.exp(np.log(output.draws["a"]).mean(axis=0))
        b_hat = np.exp(np.log(output.draws["b"]).mean(axis=0))
    else:
        a_hat = output.draws["a"].mean(axis=0)
        b_hat = output.draws["b"].mean(axis=0)
    c_hat = output.draws["c"].mean(axis=0)
    params = GammaSvcParams(a=a_hat, b=b_hat, c=c_hat)
    lam = rate_matrix(params, ts)
    mask = panel.mask
    a_mat = np.broadcast_to(params.a[:, None], panel.values.shape)
    terms = np.where(
        mask,
        gamma_logpdf(np.where(mask, panel.values, 1.0), a_mat, lam),
        0.0,
    )
    total = float(terms.sum())
    if output.spec.data_layer is DataLayer.CAR:
        rho_hat = float(output.draws["rho"].mean())
        scaled = scaled_correlation(graph, rho_hat)
        z, _ = latent_scores(panel.values, params, ts)
        if output.missing_cells:
            z_imp = output.imputed_z.mean(axis=0)
            for k, (i, t) in enumerate(output.missing_cells):
                z[i, t] = z_imp[k]
        total += float(copula_logdensity_by_year(np.nan_to_num(z), scaled).sum())
    return -2.0 * total


def compare_models(
    outputs: list[ChainOutput],
    panel: RegionalPanel,
    graph: ArealGraph | None,
    ts: TimeStandardizer,
    lppd: bool = False,
) -> ComparisonReport:
    """Assemble the posterior-SD / DIC / WAIC comparison table."""
    report = ComparisonReport()
    for out in outputs:
        d_hat = deviance_at_posterior_mean(out, panel, graph, ts)
        dic_res = dic(out.deviance, d_hat)
        waic_res = waic(out.pointwise_loglik, lppd=lppd)
        sd_rho = (
            float(out.draws["rho"].std(ddof=1))
            if out.spec.data_layer is DataLayer.CAR
            else None
        )
        report.rows.append(
            ModelComparisonRow(
                model=out.spec.name,
                avg_sd_a=float(out.draws["a"].std(axis=0, ddof=1).mean()),
                avg_sd_b=float(out.draws["b"].std(axis=0, ddof=1).mean()),
                avg_sd_c=float(out.draws["c"].std(axis=0, ddof=1).mean()),
                sd_rho=sd_rho,
                dic=dic_res.dic,
                p_d=dic_res.p_d,
                waic=waic_res.waic,
                p_w=waic_res.p_w,
            )
        )
    return report
