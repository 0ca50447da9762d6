"""Command-line surface: explore, fit, compare, study.

All artifacts are deterministic given the seed: CSV floats use shortest
round-trip representation and JSON keys are sorted. Wall-clock timing goes
to a plain-text ``runtime.log`` sidecar so the CSV/JSON outputs stay
byte-reproducible.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import datasets
from .copula import latent_scores
from .diagnostics import (
    compare_models,
    ess_batch_means,
    geweke,
    posterior_predictive_check,
    qq_discrepancy,
    PPC_STATISTICS,
)
from .graph import moran_i_by_year
from .inference import (
    ALL_SPECS,
    ChainConfig,
    ChainOutput,
    ModelSpec,
    run_chain,
    write_draws_csv,
)
from .marginals import (
    FitConvergenceError,
    GammaSvcParams,
    fit_region_gamma,
    fit_region_lognormal,
    lognormal_cdf_matrix,
    pit_transform,
    standardize_time,
)
from .panel import read_adjacency_csv, read_panel_csv
from .sim import StudyConfig, run_study

USAGE_ERROR = 1
NUMERICAL_ERROR = 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _fmt(x) -> str:
    """Full-precision, round-trip-stable cell formatting."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    v = float(x)
    if not np.isfinite(v):
        return repr(v)
    return repr(v)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {p} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _resolve_seed(args, cfg: dict) -> tuple[int, bool]:
    if args.seed is not None:
        return int(args.seed), False
    if "seed" in cfg:
        return int(cfg["seed"]), False
    return int(np.random.SeedSequence().entropy % (2**63)), True


def _load_inputs(cfg: dict):
    panel_path = cfg.get("panel_csv")
    adj_path = cfg.get("adjacency_csv")
    try:
        panel = read_panel_csv(panel_path) if panel_path else datasets.load_india_rainfall()
        if adj_path:
            graph = read_adjacency_csv(adj_path, cfg.get("n_regions", panel.n))
        elif panel_path:
            raise ConfigError("adjacency_csv is required when panel_csv is given")
        else:
            graph = datasets.load_india_adjacency()
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if graph.n != panel.n:
        raise ConfigError(
            f"adjacency has {graph.n} regions but panel has {panel.n}"
        )
    return panel, graph


def _chain_config(cfg: dict, seed: int, paper_scale: bool) -> ChainConfig:
    chain = dict(cfg.get("chain", {}))
    if paper_scale:
        defaults = {"iterations": 200_000, "burn_in": 40_000, "thin": 20}
    else:
        defaults = {"iterations": 20_000, "burn_in": 4_000, "thin": 5}
    defaults.update(chain)
    try:
        return ChainConfig(
            iterations=int(defaults["iterations"]),
            burn_in=int(defaults["burn_in"]),
            thin=int(defaults["thin"]),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _common_manifest(args, cfg: dict, seed: int, generated: bool) -> dict:
    return {
        "command": args.command,
        "seed": seed,
        "seed_generated": generated,
        "paper_scale": bool(args.paper_scale),
        "paper_tables": bool(args.paper_tables),
        "config_file": args.config,
        "config": cfg,
    }


# ----------------------------------------------------------------------
# explore


def _fit_all_margins(panel, ts):
    gamma_fits, lognormal_fits = [], []
    for i in range(panel.n):
        gamma_fits.append(fit_region_gamma(panel.values[i], ts))
        lognormal_fits.append(fit_region_lognormal(panel.values[i], ts))
    return gamma_fits, lognormal_fits


def cmd_explore(args) -> int:
    cfg = _load_config(args.config)
    seed, generated = _resolve_seed(args, cfg)
    panel, graph = _load_inputs(cfg)
    out = _out_dir(args)
    t0 = time.perf_counter()

    ts = standardize_time(panel.T)
    gamma_fits, lognormal_fits = _fit_all_margins(panel, ts)

    _write_csv(
        out / "gamma_mle.csv",
        ["region", "a", "b", "c", "se_a", "se_b", "se_c", "loglik", "n_obs"],
        [
            [panel.regions[i], f.a, f.b, f.c, f.se_a, f.se_b, f.se_c, f.loglik, f.n_used]
            for i, f in enumerate(gamma_fits)
        ],
    )
    _write_csv(
        out / "lognormal_mle.csv",
        ["region", "alpha_star", "beta_star", "sigma2", "n_obs", "degenerate"],
        [
            [panel.regions[i], f.alpha_star, f.beta_star, f.sigma2, f.n_used, f.degenerate]
            for i, f in enumerate(lognormal_fits)
        ],
    )

    params = GammaSvcParams(
        a=np.array([f.a for f in gamma_fits]),
        b=np.array([f.b for f in gamma_fits]),
        c=np.array([f.c for f in gamma_fits]),
    )
    u_gamma, clamped = pit_transform(panel.values, params, ts)
    u_lognormal = lognormal_cdf_matrix(panel.values, lognormal_fits, panel.T)
    qq_gamma = qq_discrepancy(u_gamma)
    qq_lognormal = qq_discrepancy(u_lognormal)

    rows = []
    for label, u in (("gamma", u_gamma), ("lognormal", u_lognormal)):
        vals = np.sort(u[np.isfinite(u)])
        pos = np.arange(1, vals.size + 1) / (vals.size + 1.0)
        rows += [[label, q, p] for q, p in zip(vals, pos)]
    _write_csv(out / "qq_pairs.csv", ["model", "u_order_statistic", "plotting_position"], rows)

    z, _ = latent_scores(panel.values, params, ts)
    complete = np.isfinite(z).all(axis=0)
    moran = moran_i_by_year(z[:, complete], graph)
    years_used = [panel.years[t] for t in np.nonzero(complete)[0]]
    _write_csv(
        out / "moran.csv",
        ["year", "moran_i", "z_score", "p_value"],
        [[y, r.I, r.z_score, r.p_value] for y, r in zip(years_used, moran.per_year)],
    )

    summary = _common_manifest(args, cfg, seed, generated)
    summary.update(
        {
            "n_regions": panel.n,
            "n_years": panel.T,
            "n_missing_cells": panel.n_missing,
            "pit_clamped_cells": clamped,
            "qq": {
                "gamma": {"rmse_u": qq_gamma.rmse_u, "mae_u": qq_gamma.mae_u},
                "lognormal": {"rmse_u": qq_lognormal.rmse_u, "mae_u": qq_lognormal.mae_u},
            },
            "moran": {
                "average_i": moran.mean_I,
                "combined_z": moran.z_score,
                "p_value": moran.p_value,
                "test": "two-sided normal approximation; years combined by "
                        "Stouffer sum of z-scores over complete years",
                "years_used": years_used,
            },
        }
    )
    _write_json(out / "explore_summary.json", summary)
    (out / "runtime.log").write_text(f"wall_time_seconds={time.perf_counter() - t0:.3f}\n")
    return 0


# ----------------------------------------------------------------------
# fit


def _posterior_summary_rows(output: ChainOutput):
    rows = []
    for name, col in output.flat_columns():
        mean = float(col.mean())
        sd = float(col.std(ddof=1))
        lo, hi = np.quantile(col, [0.025, 0.975])
        row = [name, mean, sd, float(lo), float(hi)]
        if name.startswith("c_"):
            row.append(bool(lo > 0 or hi < 0))
        else:
            row.append("")
        rows.append(row)
    return rows


def _convergence_rows(output: ChainOutput):
    rows = []
    for name, col in output.flat_columns():
        try:
            ess = ess_batch_means(col)
        except ValueError:
            ess = float("nan")
        try:
            z = geweke(col)
        except ValueError:
            z = float("nan")
        rows.append([name, ess, z])
    return rows


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    seed, generated = _resolve_seed(args, cfg)
    panel, graph = _load_inputs(cfg)
    out = _out_dir(args)
    spec = ModelSpec.from_name(cfg.get("model", "CAR-ICAR"))
    chain_cfg = _chain_config(cfg, seed, args.paper_scale)
    t0 = time.perf_counter()

    ts = standardize_time(panel.T)
    output = run_chain(panel, graph, spec, chain_cfg, ts=ts)

    write_draws_csv(output, out / "draws.csv")
    summary_rows = _posterior_summary_rows(output)
    _write_csv(
        out / "posterior_summary.csv",
        ["param", "mean", "sd", "q2.5", "q97.5", "trend_significant"],
        summary_rows,
    )
    _write_csv(out / "convergence.csv", ["param", "ess", "geweke_z"], _convergence_rows(output))

    imp_rows = []
    for k, (i, t) in enumerate(output.missing_cells):
        col = output.imputed_y[:, k]
        lo, hi = np.quantile(col, [0.025, 0.975])
        imp_rows.append(
            [panel.regions[i], panel.years[t], float(col.mean()),
             float(col.std(ddof=1)), float(lo), float(hi)]
        )
    _write_csv(
        out / "imputed.csv",
        ["region", "year", "mean", "sd", "q2.5", "q97.5"],
        imp_rows,
    )

    flagged = [
        panel.regions[int(name.split("_")[1]) - 1]
        for name, *rest in summary_rows
        if name.startswith("c_") and rest[-1] is True
    ]
    manifest = _common_manifest(args, cfg, seed, generated)
    manifest.update(
        {
            "model": spec.name,
            "iterations": chain_cfg.iterations,
            "burn_in": chain_cfg.burn_in,
            "thin": chain_cfg.thin,
            "retained_draws": output.n_retained,
            "acceptance_rates": output.acceptance_rates,
            "proposal_scales": output.proposal_scales,
            "clamp_count": output.clamp_count,
            "nonfinite_rejects": output.nonfinite_rejects,
            "n_missing_cells": len(output.missing_cells),
            "trend_significant_regions": flagged,
            "notes": output.metadata,
        }
    )
    _write_json(out / "fit_metadata.json", manifest)
    (out / "runtime.log").write_text(f"wall_time_seconds={time.perf_counter() - t0:.3f}\n")
    return 0


# ----------------------------------------------------------------------
# compare


def cmd_compare(args) -> int:
    cfg = _load_config(args.config)
    seed, generated = _resolve_seed(args, cfg)
    panel, graph = _load_inputs(cfg)
    out = _out_dir(args)
    model_names = cfg.get("models")
    if model_names is None:
        model_names = [s.name for s in ALL_SPECS]
    elif not model_names:
        raise ConfigError("empty model list")
    specs = [ModelSpec.from_name(m) for m in model_names]
    chain_cfg = _chain_config(cfg, seed, args.paper_scale)
    ppc_max = cfg.get("ppc", {}).get("max_draws")
    t0 = time.perf_counter()

    ts = standardize_time(panel.T)
    outputs = [run_chain(panel, graph, spec, chain_cfg, ts=ts) for spec in specs]
    report = compare_models(outputs, panel, graph, ts)

    sd_scale = 100.0 if args.paper_tables else 1.0
    sd_suffix = "_x100" if args.paper_tables else ""
    _write_csv(
        out / "comparison.csv",
        ["model", "avg_sd_a", f"avg_sd_b{sd_suffix}", f"avg_sd_c{sd_suffix}",
         f"sd_rho{sd_suffix}", "dic", "p_d", "waic", "p_w"],
        [
            [r.model, r.avg_sd_a, r.avg_sd_b * sd_scale, r.avg_sd_c * sd_scale,
             None if r.sd_rho is None else r.sd_rho * sd_scale,
             r.dic, r.p_d, r.waic, r.p_w]
            for r in report.rows
        ],
    )

    ppc_results = {}
    for idx, output in enumerate(outputs):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(7, idx))
        )
        ppc_results[output.spec.name] = posterior_predictive_check(
            panel, output, graph, ts, rng, max_draws=ppc_max
        )
    header = ["statistic"] + [s.name for s in specs]
    rows = []
    for stat in PPC_STATISTICS:
        rows.append([stat] + [ppc_results[s.name].p_values.get(stat) for s in specs])
    rows.append(["coverage_95"] + [ppc_results[s.name].coverage for s in specs])
    _write_csv(out / "ppc.csv", header, rows)

    manifest = _common_manifest(args, cfg, seed, generated)
    manifest.update(
        {
            "models": [s.name for s in specs],
            "iterations": chain_cfg.iterations,
            "burn_in": chain_cfg.burn_in,
            "thin": chain_cfg.thin,
            "retained_draws": outputs[0].n_retained,
            "ppc_replicates": {k: v.n_replicates for k, v in ppc_results.items()},
            "ppc_warnings": {k: v.warning for k, v in ppc_results.items() if v.warning},
            "acceptance_rates": {o.spec.name: o.acceptance_rates for o in outputs},
            "clamp_counts": {o.spec.name: o.clamp_count for o in outputs},
        }
    )
    _write_json(out / "compare_metadata.json", manifest)
    (out / "runtime.log").write_text(f"wall_time_seconds={time.perf_counter() - t0:.3f}\n")
    return 0


# ----------------------------------------------------------------------
# study


def cmd_study(args) -> int:
    cfg = _load_config(args.config)
    seed, generated = _resolve_seed(args, cfg)
    panel, graph = _load_inputs(cfg)
    out = _out_dir(args)
    study_cfg = dict(cfg.get("study", {}))
    rho_grid = tuple(study_cfg.get("rho_grid", (0.0, 0.5, 0.9)))
    for r in rho_grid:
        if not 0.0 <= float(r) < 1.0:
            raise ConfigError(f"invalid rho in grid: {r}")
    variant_names = study_cfg.get("variants")
    if variant_names is None:
        variant_names = [s.name for s in ALL_SPECS]
    elif not variant_names:
        raise ConfigError("empty variant list")
    variants = tuple(ModelSpec.from_name(m) for m in variant_names)
    replicates = int(study_cfg.get("replicates", 100 if args.paper_scale else 10))
    workers = int(study_cfg.get("workers", 1))
    chain_cfg = _chain_config(cfg, 0, args.paper_scale)
    t0 = time.perf_counter()

    ts = standardize_time(panel.T)
    gamma_fits = [fit_region_gamma(panel.values[i], ts) for i in range(panel.n)]
    true_params = GammaSvcParams(
        a=np.array([f.a for f in gamma_fits]),
        b=np.array([f.b for f in gamma_fits]),
        c=np.array([f.c for f in gamma_fits]),
    )
    config = StudyConfig(
        graph=graph,
        true_params=true_params,
        T=int(study_cfg.get("T", panel.T)),
        rho_grid=tuple(float(r) for r in rho_grid),
        replicates=replicates,
        variants=variants,
        chain=chain_cfg,
        seed=seed,
        workers=workers,
    )
    tables = run_study(config)

    mse_scale = 1000.0 if args.paper_tables else 1.0
    sd_scale = 100.0 if args.paper_tables else 1.0
    suffix_m = "_x1000" if args.paper_tables else ""
    suffix_s = "_x100" if args.paper_tables else ""
    rows = []
    for r in tables.params:
        scaled_groups = ("b", "c", "rho")
        mse = r.mse * mse_scale if r.group in scaled_groups else r.mse
        sd = r.avg_sd * sd_scale if r.group in scaled_groups else r.avg_sd
        rows.append([r.rho_true, r.model, r.group, mse, sd, r.covp])
    _write_csv(
        out / "study_params.csv",
        ["rho_true", "model", "group", f"mse{suffix_m}", f"avg_sd{suffix_s}", "covp"],
        rows,
    )
    _write_csv(
        out / "study_ic.csv",
        ["rho_true", "model", "dic_mean", "dic_se", "waic_mean", "waic_se"],
        [
            [r.rho_true, r.model, r.dic_mean, r.dic_se, r.waic_mean, r.waic_se]
            for r in tables.information
        ],
    )
    manifest = _common_manifest(args, cfg, seed, generated)
    manifest.update(tables.config_summary)
    manifest["exclusions"] = tables.exclusions
    manifest["presentation_scaling"] = bool(args.paper_tables)
    _write_json(out / "study_manifest.json", manifest)
    (out / "runtime.log").write_text(f"wall_time_seconds={time.perf_counter() - t0:.3f}\n")
    return 0


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="carcopula", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("explore", cmd_explore),
        ("fit", cmd_fit),
        ("compare", cmd_compare),
        ("study", cmd_study),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--paper-scale", action="store_true",
                       help="full-length chains (200k iterations) and 100 replicates")
        p.add_argument("--paper-tables", action="store_true",
                       help="apply presentation scaling to emitted tables")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (FitConvergenceError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
