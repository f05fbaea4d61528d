"""Experiment drivers behind the command-line runner.

Each driver takes an ExperimentConfig and returns an ExperimentOutput:
the report (inputs echo, per-scale results, pass/fail checks with their
numeric evidence), named CSV tables, and named figures.

Replica fan-out: experiments whose replica loop lives here (lln,
mean-field-equivalence) chunk replica ranges across a process pool sized
by ``output.workers``.  Per-replica values depend only on (seed, replica),
and aggregation runs over arrays assembled in replica order, so results
are independent of worker scheduling.  Tail experiments delegate the
replica loop to ``tail_probability`` so the reported numbers are the
library's own, and the clt experiment delegates to ``clt_check`` for the
same reason; both run in-process.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .config import ExperimentConfig, build_model
from .deviations import ConstraintSpec, TailEstimate, minimize_rate, tail_probability
from .errors import ConfigurationError
from .fluctuation import _decreasing_check, clt_check
from .limit import solve_limit
from .model import IntensityFn, Kernel, audit_assumptions
from .paths import GridPath
from .report import ExperimentReport, make_check
from .simulate import SimConfig, simulate_mean_field, simulate_scaled_hawkes
from .svg import Figure

REQUIRED_ASSUMPTIONS = {
    "lln": ("A1",),
    "clt": ("A1", "A2", "A4"),
    "ldp": ("A1", "A3", "A5"),
    "mdp": ("A1", "A2", "A4", "A5"),
    "mean-field-equivalence": ("A1",),
}


def required_assumptions(cfg: ExperimentConfig) -> tuple:
    if cfg.kind == "rate-minimize":
        if cfg.functional == "I":
            return ("A1", "A3", "A5")
        return ("A1", "A2", "A4", "A5")
    return REQUIRED_ASSUMPTIONS[cfg.kind]


def audit_for(cfg: ExperimentConfig):
    """(audit, failed-required-assumption names) for a config."""
    audit = audit_assumptions(cfg.kernel, cfg.phi, cfg.horizon)
    failed = tuple(a for a in required_assumptions(cfg) if not audit.flags.get(a))
    return audit, failed


@dataclass
class ExperimentOutput:
    report: ExperimentReport
    tables: dict = field(default_factory=dict)   # name -> (header, rows)
    figures: dict = field(default_factory=dict)  # name -> Figure


# ---------------------------------------------------------------------------
# worker pool


def _ranges(total: int, chunk: int):
    return [(r0, min(r0 + chunk, total)) for r0 in range(0, total, chunk)]


def _map_replicas(worker, common: dict, replicas: int, workers: int | None):
    """Apply ``worker((common, r0, r1))`` over replica ranges; concatenate
    results along the replica axis in index order."""
    import os

    nw = workers if workers is not None else (os.cpu_count() or 1)
    if nw <= 1:
        parts = [worker((common, 0, replicas))]
    else:
        chunk = max(1, math.ceil(replicas / (4 * nw)))
        rngs = _ranges(replicas, chunk)
        parts = [None] * len(rngs)
        with ProcessPoolExecutor(max_workers=nw) as pool:
            futures = {
                pool.submit(worker, (common, r0, r1)): i
                for i, (r0, r1) in enumerate(rngs)
            }
            for fut, i in futures.items():
                parts[i] = fut.result()
    return np.concatenate(parts, axis=-1)


def sup_deviation(times: np.ndarray, eps: float, grid: np.ndarray,
                  reference: np.ndarray) -> float:
    """Exact sup over [0, horizon] of |eps * count(t) - reference(t)| for a
    jump path against a nondecreasing piecewise-linear reference.

    Between jumps the difference is monotone, so the supremum is attained
    at a jump time (from either side) or at the endpoints.
    """
    n = times.size
    best = 0.0
    if n:
        ref_at = np.interp(times, grid, reference)
        post = np.arange(1, n + 1) * eps - ref_at
        best = float(max(np.abs(post).max(), np.abs(post - eps).max()))
    return max(best, abs(eps * n - float(reference[-1])))


def _lln_worker(args):
    common, r0, r1 = args
    kernel, phi, horizon = build_model(dict(common["model_items"]))
    cfg = SimConfig(
        epsilon=common["eps"],
        horizon=horizon,
        seed=common["seed"],
        max_events=common["max_events"],
    )
    grid = common["z0_grid"]
    vals = common["z0_values"]
    out = np.empty(r1 - r0)
    for i, r in enumerate(range(r0, r1)):
        ep = simulate_scaled_hawkes(kernel, phi, cfg, replica=r)
        out[i] = sup_deviation(ep.times, common["eps"], grid, vals)
    return out


def _mfe_worker(args):
    common, r0, r1 = args
    kernel, phi, horizon = build_model(dict(common["model_items"]))
    n_nodes = common["n_nodes"]
    eps = 1.0 / n_nodes
    half = horizon / 2.0
    cfg = SimConfig(
        epsilon=eps,
        horizon=horizon,
        seed=common["seed"],
        max_events=common["max_events"],
    )
    m = r1 - r0
    out = np.empty((4, m))
    for i, r in enumerate(range(r0, r1)):
        mf = simulate_mean_field(kernel, phi, n_nodes, cfg, replica=r)
        out[0, i] = mf.mean_terminal
        # eps * count, not count / n_nodes: keeps both samples on the same
        # float lattice so the KS statistic is not inflated by label mismatch
        out[1, i] = eps * np.searchsorted(mf.all_times, half, side="right")
        ep = simulate_scaled_hawkes(kernel, phi, cfg, replica=r)
        out[2, i] = ep.terminal
        out[3, i] = eps * np.searchsorted(ep.times, half, side="right")
    return out


# ---------------------------------------------------------------------------
# experiments


def _ratio_check(name: str, values, slack: float):
    """Largest adjacent ratio v[i+1]/v[i] must stay below ``slack``."""
    vals = [float(v) for v in values]
    ratios = [b / a if a > 0 else float("inf") for a, b in zip(vals[:-1], vals[1:])]
    worst = max(ratios) if ratios else 0.0
    return make_check(name, worst, slack, "<")


def lln_experiment(cfg: ExperimentConfig) -> ExperimentOutput:
    """Median sup-distance between simulated paths and the deterministic
    limit, per scale parameter; medians must shrink as eps does."""
    t0 = time.perf_counter()
    z0, _ = solve_limit(cfg.kernel, cfg.phi, cfg.horizon, n=cfg.grid_n)
    eps_desc = sorted(cfg.epsilons, reverse=True)
    per_eps = []
    rows_detail = []
    for eps in eps_desc:
        common = {
            "model_items": cfg.model_items,
            "eps": eps,
            "seed": cfg.seed,
            "max_events": cfg.max_events,
            "z0_grid": z0.grid,
            "z0_values": z0.values,
        }
        sups = _map_replicas(_lln_worker, common, cfg.replicas, cfg.workers)
        per_eps.append(
            {
                "eps": eps,
                "replicas": cfg.replicas,
                "median_sup": float(np.median(sups)),
                "mean_sup": float(sups.mean()),
                "p90_sup": float(np.quantile(sups, 0.9)),
            }
        )
        rows_detail.extend(
            (eps, r, float(s)) for r, s in enumerate(sups)
        )
    medians = [row["median_sup"] for row in per_eps]
    checks = [
        _ratio_check("sup_median_decreasing", medians, cfg.threshold("lln.decrease_slack"))
    ]
    report = ExperimentReport(
        kind="lln",
        inputs=cfg.inputs_echo(),
        results={"per_eps": per_eps, "terminal_limit": float(z0.values[-1])},
        checks=checks,
        wall_time_s=time.perf_counter() - t0,
    )
    tables = {
        "lln_summary": (
            ("eps", "replicas", "median_sup", "mean_sup", "p90_sup"),
            [
                (r["eps"], r["replicas"], r["median_sup"], r["mean_sup"], r["p90_sup"])
                for r in per_eps
            ],
        ),
        "lln_sup_distance": (("eps", "replica", "sup_distance"), rows_detail),
    }
    fig = Figure(
        title="sup distance to the deterministic limit",
        xlabel="eps",
        ylabel="median sup distance",
        logy=True,
    )
    fig.add_line(eps_desc, medians, label="median")
    fig.add_scatter(eps_desc, medians)
    figures = {"lln_median": fig, "lln_paths": _paths_figure(cfg, z0, eps_desc[-1])}
    return ExperimentOutput(report=report, tables=tables, figures=figures)


def _paths_figure(cfg: ExperimentConfig, z0: GridPath, eps: float, samples: int = 3):
    fig = Figure(title="sample paths against the limit", xlabel="t", ylabel="Z")
    fig.add_line(z0.grid, z0.values, label="limit")
    sim_cfg = SimConfig(
        epsilon=eps, horizon=cfg.horizon, seed=cfg.seed, max_events=cfg.max_events
    )
    for r in range(samples):
        ep = simulate_scaled_hawkes(cfg.kernel, cfg.phi, sim_cfg, replica=r)
        counts = np.searchsorted(ep.times, z0.grid, side="right")
        fig.add_line(z0.grid, eps * counts, label=f"replica {r}")
    return fig


def clt_experiment(cfg: ExperimentConfig) -> ExperimentOutput:
    """Standardized marginals against the Gaussian limit (delegates to
    clt_check, then adds the covariance-error threshold from config)."""
    z0, _ = solve_limit(cfg.kernel, cfg.phi, cfg.horizon, n=cfg.grid_n)
    report = clt_check(
        cfg.kernel,
        cfg.phi,
        z0,
        cfg.epsilons,
        replicas=cfg.replicas,
        seed=cfg.seed,
        probe_times=cfg.probe_times,
        ks_alpha=cfg.threshold("clt.ks_alpha"),
        max_events=cfg.max_events,
    )
    per_eps = report.results["per_eps"]
    report.checks.append(
        make_check(
            "var_err_smallest_eps",
            per_eps[-1]["var_rel_err_terminal"],
            cfg.threshold("clt.cov_rel_err_max"),
            "<=",
        )
    )
    report.inputs = {**cfg.inputs_echo(), **report.inputs}

    probes = report.inputs["probe_times"]
    model_cov = np.asarray(report.inputs["model_cov"])
    rows = []
    for entry in per_eps:
        emp = np.asarray(entry["empirical_cov"])
        for k, ks in enumerate(entry["ks"]):
            rows.append(
                (
                    entry["eps"],
                    ks["t"],
                    ks["stat"],
                    ks["pvalue"],
                    float(emp[k, k]),
                    float(model_cov[k, k]),
                    entry["cov_rel_err"],
                )
            )
    tables = {
        "clt_summary": (
            ("eps", "probe_t", "ks_stat", "ks_pvalue", "empirical_var",
             "model_var", "cov_rel_err"),
            rows,
        )
    }
    eps_axis = [e["eps"] for e in per_eps]
    fig_err = Figure(
        title="covariance error against the Gaussian limit",
        xlabel="eps",
        ylabel="max relative error",
        logy=True,
    )
    fig_err.add_line(eps_axis, [e["cov_rel_err"] for e in per_eps], label="cov error")
    fig_err.add_scatter(eps_axis, [e["cov_rel_err"] for e in per_eps])
    fig_var = Figure(
        title="terminal variance: empirical vs model",
        xlabel="eps",
        ylabel="variance",
    )
    emp_var = [float(np.asarray(e["empirical_cov"])[-1, -1]) for e in per_eps]
    model_var = float(model_cov[-1, -1])
    fig_var.add_line(eps_axis, emp_var, label="empirical")
    fig_var.add_scatter(eps_axis, emp_var)
    fig_var.add_line(
        [min(eps_axis), max(eps_axis)], [model_var, model_var], label="model"
    )
    figures = {"clt_cov_err": fig_err, "clt_var_terminal": fig_var}
    return ExperimentOutput(report=report, tables=tables, figures=figures)


def _resolve_tail_method(cfg: ExperimentConfig) -> str:
    if cfg.tail_method != "auto":
        return cfg.tail_method
    from .deviations import _unexcited_rate

    return "exact" if _unexcited_rate(cfg.kernel, cfg.phi) is not None else "importance"


def tail_experiment(cfg: ExperimentConfig) -> ExperimentOutput:
    """Scaled log tail probabilities per eps against the optimal-path cost
    (regimes: ldp on Z_T >= x, mdp on the centered rescaled terminal)."""
    t0 = time.perf_counter()
    regime = cfg.kind
    method = _resolve_tail_method(cfg)
    z0, _ = solve_limit(cfg.kernel, cfg.phi, cfg.horizon, n=cfg.grid_n)
    functional = "I" if regime == "ldp" else "J"
    opt = minimize_rate(
        functional,
        cfg.kernel,
        cfg.phi,
        ConstraintSpec(kind="endpoint-at-least", x=cfg.x),
        cfg.horizon,
        z0=z0,
        n=cfg.optimizer_n,
        seed=cfg.seed,
        gtol=cfg.threshold("rate.gtol"),
    )
    asymptote = -opt.value
    eps_desc = sorted(cfg.epsilons, reverse=True)
    estimates: list[TailEstimate] = []
    for eps in eps_desc:
        estimates.append(
            tail_probability(
                cfg.kernel,
                cfg.phi,
                cfg.horizon,
                eps,
                cfg.x,
                regime=regime,
                a_eps=cfg.a_eps(eps) if regime == "mdp" else None,
                method=method,
                replicas=cfg.replicas,
                seed=cfg.seed,
                z0=z0,
                optimizer_n=cfg.optimizer_n,
                max_events=cfg.max_events,
            )
        )
    gaps = [abs(te.log_scale_value - asymptote) for te in estimates]
    gap_key = "ldp.gap_max" if regime == "ldp" else "mdp.gap_max"
    checks = [make_check("gap_smallest_eps", gaps[-1], cfg.threshold(gap_key), "<=")]
    if len(gaps) > 1:
        checks.append(_decreasing_check("gap_decreasing", gaps))
    per_eps = [
        {**te.as_dict(), "gap": float(g)} for te, g in zip(estimates, gaps)
    ]
    report = ExperimentReport(
        kind=regime,
        inputs={**cfg.inputs_echo(), "method": method},
        results={
            "per_eps": per_eps,
            "rate_value": opt.value,
            "asymptote": asymptote,
            "optimizer": {
                "iterations": opt.report.iterations,
                "grad_norm": opt.report.grad_norm,
                "converged": opt.report.converged,
            },
        },
        checks=checks,
        wall_time_s=time.perf_counter() - t0,
    )
    rows = [
        (
            te.eps,
            te.a_eps if te.a_eps is not None else "",
            te.method,
            te.replicas,
            te.hits,
            te.p_hat,
            te.se,
            te.log_scale_value,
            asymptote,
            float(g),
        )
        for te, g in zip(estimates, gaps)
    ]
    tables = {
        "tail_summary": (
            ("eps", "a_eps", "method", "replicas", "hits", "p_hat", "se",
             "scaled_log_p", "asymptote", "gap"),
            rows,
        )
    }
    fig = Figure(
        title=f"scaled log tail probability, x = {cfg.x:g}",
        xlabel="eps",
        ylabel="scaled log p",
    )
    finite = [
        (te.eps, te.log_scale_value)
        for te in estimates
        if math.isfinite(te.log_scale_value)
    ]
    if finite:
        fig.add_line([p[0] for p in finite], [p[1] for p in finite], label="estimate")
        fig.add_scatter([p[0] for p in finite], [p[1] for p in finite])
    fig.add_line(
        [min(eps_desc), max(eps_desc)], [asymptote, asymptote],
        label="optimal-path cost",
    )
    return ExperimentOutput(
        report=report, tables=tables, figures={"tail_scaled_log": fig}
    )


def mean_field_experiment(cfg: ExperimentConfig) -> ExperimentOutput:
    """Two-sample agreement of the N-node mean path with the scaled process
    at eps = 1/N, tested on the marginals at the horizon and half-horizon."""
    t0 = time.perf_counter()
    alpha = cfg.threshold("mfe.ks_alpha")
    m = cfg.replicas
    # two-sample critical value at level alpha for equal sample sizes
    crit = math.sqrt(-math.log(alpha / 2.0) / 2.0) * math.sqrt(2.0 / m)
    per_n = []
    rows_detail = []
    samples_for_fig = None
    for n_nodes in sorted(cfg.n_nodes):
        common = {
            "model_items": cfg.model_items,
            "n_nodes": n_nodes,
            "seed": cfg.seed,
            "max_events": cfg.max_events,
        }
        arr = _map_replicas(_mfe_worker, common, m, cfg.workers)
        mf_T, mf_half, sc_T, sc_half = arr
        ks_T = float(stats.ks_2samp(mf_T, sc_T).statistic)
        ks_half = float(stats.ks_2samp(mf_half, sc_half).statistic)
        per_n.append(
            {
                "n_nodes": n_nodes,
                "replicas": m,
                "ks_T": ks_T,
                "ks_half": ks_half,
                "critical": crit,
                "mean_field_mean_T": float(mf_T.mean()),
                "scaled_mean_T": float(sc_T.mean()),
                "mean_field_var_T": float(mf_T.var(ddof=1)),
                "scaled_var_T": float(sc_T.var(ddof=1)),
            }
        )
        rows_detail.extend(
            (n_nodes, r, float(mf_T[r]), float(sc_T[r]), float(mf_half[r]),
             float(sc_half[r]))
            for r in range(m)
        )
        samples_for_fig = (n_nodes, np.sort(mf_T), np.sort(sc_T))
    checks = []
    for entry in per_n:
        checks.append(
            make_check(f"ks_T_n{entry['n_nodes']}", entry["ks_T"], crit, "<")
        )
        checks.append(
            make_check(f"ks_half_n{entry['n_nodes']}", entry["ks_half"], crit, "<")
        )
    report = ExperimentReport(
        kind="mean-field-equivalence",
        inputs=cfg.inputs_echo(),
        results={"per_n": per_n},
        checks=checks,
        wall_time_s=time.perf_counter() - t0,
    )
    tables = {
        "mfe_summary": (
            ("n_nodes", "replicas", "ks_T", "ks_half", "critical",
             "mean_field_mean_T", "scaled_mean_T", "mean_field_var_T",
             "scaled_var_T"),
            [
                (
                    e["n_nodes"], e["replicas"], e["ks_T"], e["ks_half"],
                    e["critical"], e["mean_field_mean_T"], e["scaled_mean_T"],
                    e["mean_field_var_T"], e["scaled_var_T"],
                )
                for e in per_n
            ],
        ),
        "mfe_terminals": (
            ("n_nodes", "replica", "mean_field_T", "scaled_T",
             "mean_field_half", "scaled_half"),
            rows_detail,
        ),
    }
    n_fig, mf_sorted, sc_sorted = samples_for_fig
    fig = Figure(
        title=f"terminal quantiles, N = {n_fig}",
        xlabel="mean-field quantile",
        ylabel="scaled-process quantile",
    )
    fig.add_scatter(mf_sorted, sc_sorted, label="quantile pairs")
    lo = float(min(mf_sorted[0], sc_sorted[0]))
    hi = float(max(mf_sorted[-1], sc_sorted[-1]))
    fig.add_line([lo, hi], [lo, hi], label="equality")
    return ExperimentOutput(
        report=report, tables=tables, figures={"mfe_qq": fig}
    )


def rate_minimize_experiment(cfg: ExperimentConfig) -> ExperimentOutput:
    """Optimal-path search for the configured functional and constraint."""
    t0 = time.perf_counter()
    z0, _ = solve_limit(cfg.kernel, cfg.phi, cfg.horizon, n=cfg.grid_n)
    if cfg.constraint == "tube":
        spec = ConstraintSpec(kind="tube", reference=z0, radius=cfg.tube_radius)
    else:
        spec = ConstraintSpec(kind=cfg.constraint, x=cfg.x)
    gtol = cfg.threshold("rate.gtol")
    opt = minimize_rate(
        cfg.functional,
        cfg.kernel,
        cfg.phi,
        spec,
        cfg.horizon,
        z0=z0,
        n=cfg.optimizer_n,
        seed=cfg.seed,
        gtol=gtol,
    )
    rep = opt.report
    viol_tol = 1e-6 * max(1.0, abs(cfg.x) if cfg.x is not None else 1.0)
    checks = [
        make_check("grad_norm", rep.grad_norm, gtol, "<="),
        make_check("constraint_violation", rep.constraint_violation, viol_tol, "<="),
    ]
    report = ExperimentReport(
        kind="rate-minimize",
        inputs=cfg.inputs_echo(),
        results={
            "value": opt.value,
            "iterations": rep.iterations,
            "grad_norm": rep.grad_norm,
            "converged": rep.converged,
            "starts": rep.starts,
            "start_values": list(rep.start_values),
            "line_search_failures": rep.line_search_failures,
            "gradient_check_rel_err": rep.gradient_check_rel_err,
            "penalty_rounds": rep.penalty_rounds,
            "constraint_violation": rep.constraint_violation,
        },
        checks=checks,
        wall_time_s=time.perf_counter() - t0,
    )
    path = opt.path
    tables = {
        "optimal_path": (
            ("t", "value", "velocity"),
            list(zip(path.grid, path.values, path.derivative)),
        ),
        "optimizer_summary": (
            ("value", "iterations", "grad_norm", "converged",
             "constraint_violation"),
            [(opt.value, rep.iterations, rep.grad_norm, int(rep.converged),
              rep.constraint_violation)],
        ),
    }
    fig = Figure(title="optimal path", xlabel="t", ylabel="path value")
    fig.add_line(path.grid, path.values, label="optimal")
    if cfg.functional == "I":
        fig.add_line(z0.grid, z0.values, label="limit")
    figures = {"optimal_path": fig}
    return ExperimentOutput(report=report, tables=tables, figures=figures)


_DRIVERS = {
    "lln": lln_experiment,
    "clt": clt_experiment,
    "ldp": tail_experiment,
    "mdp": tail_experiment,
    "mean-field-equivalence": mean_field_experiment,
    "rate-minimize": rate_minimize_experiment,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentOutput:
    driver = _DRIVERS.get(cfg.kind)
    if driver is None:
        raise ConfigurationError(f"no driver for experiment kind {cfg.kind!r}")
    return driver(cfg)
