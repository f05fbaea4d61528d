import math

import numpy as np
import pytest

import hawkeslim as hl
from conftest import minimal_sections


def _load(ini_config, name="e.ini", **overrides):
    return hl.load_config(ini_config(name=name, **minimal_sections(**overrides)))


# ---------------------------------------------------------------------------
# helpers


def test_sup_deviation_matches_dense_scan(linexp_limit):
    rng = np.random.default_rng(7)
    times = np.sort(rng.uniform(0.0, 1.0, size=40))
    eps = 0.07
    exact = hl.sup_deviation(times, eps, linexp_limit.grid, linexp_limit.values)
    dense = np.linspace(0.0, 1.0, 200_001)
    counts = np.searchsorted(times, dense, side="right")
    ref = np.interp(dense, linexp_limit.grid, linexp_limit.values)
    scan = float(np.max(np.abs(eps * counts - ref)))
    max_slope = float(linexp_limit.derivative.max())
    assert exact >= scan - 1e-12
    assert exact <= scan + max_slope * (dense[1] - dense[0]) + 1e-12


def test_sup_deviation_no_jumps_hits_endpoint(linexp_limit):
    val = hl.sup_deviation(np.empty(0), 0.1, linexp_limit.grid, linexp_limit.values)
    assert val == pytest.approx(float(linexp_limit.values[-1]))


def test_required_assumptions_by_kind(ini_config):
    cases = {
        "lln": ("A1",),
        "clt": ("A1", "A2", "A4"),
        "mean-field-equivalence": ("A1",),
    }
    cfg = _load(ini_config)
    assert hl.required_assumptions(cfg) == cases["lln"]
    clt_cfg = _load(ini_config, name="c.ini",
                    experiment={"kind": "clt", "replicas": "1000"})
    assert hl.required_assumptions(clt_cfg) == cases["clt"]
    rm_I = _load(ini_config, name="ri.ini",
                 experiment={"kind": "rate-minimize", "x": "2.0"})
    assert hl.required_assumptions(rm_I) == ("A1", "A3", "A5")
    rm_J = _load(ini_config, name="rj.ini",
                 experiment={"kind": "rate-minimize", "x": "2.0",
                             "functional": "J"})
    assert hl.required_assumptions(rm_J) == ("A1", "A2", "A4", "A5")


def test_audit_for_clean_model(ini_config):
    audit, failed = hl.audit_for(_load(ini_config))
    assert failed == ()
    assert audit.flags["A1"]


# ---------------------------------------------------------------------------
# drivers


def test_lln_experiment_structure_and_decrease(ini_config):
    cfg = _load(ini_config, experiment={"epsilon": "0.2, 0.05", "replicas": "48"},
                output={"seed": "9"})
    out = hl.run_experiment(cfg)
    rep = out.report
    assert rep.kind == "lln"
    per = rep.results["per_eps"]
    assert [e["eps"] for e in per] == [0.2, 0.05]
    assert all(e["median_sup"] > 0 for e in per)
    assert per[1]["median_sup"] < per[0]["median_sup"]
    assert [c.name for c in rep.checks] == ["sup_median_decreasing"]
    assert rep.passed
    assert set(out.tables) == {"lln_summary", "lln_sup_distance"}
    header, rows = out.tables["lln_sup_distance"]
    assert len(rows) == 2 * 48
    assert set(out.figures) == {"lln_median", "lln_paths"}


def test_worker_pool_matches_inline(ini_config):
    base = {"experiment": {"epsilon": "0.2, 0.1", "replicas": "24"}}
    inline = hl.run_experiment(
        _load(ini_config, name="w1.ini", output={"workers": "1"}, **base)
    )
    pooled = hl.run_experiment(
        _load(ini_config, name="w2.ini", output={"workers": "2"}, **base)
    )
    assert inline.report.results["per_eps"] == pooled.report.results["per_eps"]
    assert inline.tables["lln_sup_distance"][1] == pooled.tables["lln_sup_distance"][1]


def test_mean_field_experiment_two_sample_agreement(ini_config):
    cfg = _load(ini_config,
                experiment={"kind": "mean-field-equivalence", "n_nodes": "8",
                            "replicas": "300"},
                output={"seed": "20260825"})
    out = hl.run_experiment(cfg)
    rep = out.report
    assert [c.name for c in rep.checks] == ["ks_T_n8", "ks_half_n8"]
    assert rep.passed
    entry = rep.results["per_n"][0]
    # the superposed N-node system and the scaled process share one law
    assert abs(entry["mean_field_mean_T"] - entry["scaled_mean_T"]) < 0.5
    assert set(out.tables) == {"mfe_summary", "mfe_terminals"}
    assert set(out.figures) == {"mfe_qq"}
    assert len(out.tables["mfe_terminals"][1]) == 300


def test_tail_experiment_exact_oracle(ini_config):
    cfg = _load(ini_config,
                model={"builtin": "poisson-unit"},
                experiment={"kind": "ldp", "epsilon": "0.1, 0.05", "x": "1.5",
                            "tail_method": "exact", "optimizer_n": "128",
                            "grid_n": "512"})
    out = hl.run_experiment(cfg)
    rep = out.report
    assert rep.inputs["method"] == "exact"
    assert rep.results["rate_value"] == pytest.approx(hl.ell(1.5, 1.0), abs=1e-6)
    assert rep.results["asymptote"] == -rep.results["rate_value"]
    gaps = [e["gap"] for e in rep.results["per_eps"]]
    assert gaps[1] < gaps[0]
    assert [c.name for c in rep.checks] == ["gap_smallest_eps", "gap_decreasing"]
    assert rep.passed
    header, rows = out.tables["tail_summary"]
    assert header[7] == "scaled_log_p"
    assert set(out.figures) == {"tail_scaled_log"}


def test_tail_method_auto_resolution(ini_config):
    exact_cfg = _load(ini_config, name="a.ini",
                      model={"builtin": "poisson-unit"},
                      experiment={"kind": "ldp", "epsilon": "0.1", "x": "1.5"})
    assert hl.run_experiment(exact_cfg).report.inputs["method"] == "exact"
    imp_cfg = _load(ini_config, name="b.ini",
                    experiment={"kind": "ldp", "epsilon": "0.2", "x": "2.0",
                                "replicas": "200", "optimizer_n": "64",
                                "grid_n": "256"})
    out = hl.run_experiment(imp_cfg)
    assert out.report.inputs["method"] == "importance"
    entry = out.report.results["per_eps"][0]
    assert entry["method"] == "importance"
    assert entry["p_hat"] >= 0.0


def test_mdp_experiment_runs_exact(ini_config):
    cfg = _load(ini_config,
                model={"builtin": "poisson-unit"},
                experiment={"kind": "mdp", "epsilon": "0.01, 0.001", "x": "0.5",
                            "a_eps_exponent": "0.25", "tail_method": "exact",
                            "optimizer_n": "128", "grid_n": "512"})
    out = hl.run_experiment(cfg)
    rep = out.report
    # J* for the flat model: x^2 / (2 c T)
    assert rep.results["rate_value"] == pytest.approx(0.125, abs=1e-6)
    assert rep.results["per_eps"][0]["a_eps"] == pytest.approx(0.01 ** 0.25)
    assert [c.name for c in rep.checks] == ["gap_smallest_eps", "gap_decreasing"]


def test_rate_minimize_experiment_driver(ini_config):
    cfg = _load(ini_config,
                model={"builtin": "poisson-unit"},
                experiment={"kind": "rate-minimize", "x": "2.0",
                            "optimizer_n": "128", "grid_n": "512"})
    out = hl.run_experiment(cfg)
    rep = out.report
    assert rep.results["value"] == pytest.approx(2.0 * math.log(2.0) - 1.0, abs=1e-6)
    assert rep.results["converged"]
    assert [c.name for c in rep.checks] == ["grad_norm", "constraint_violation"]
    assert rep.passed
    header, rows = out.tables["optimal_path"]
    assert header == ("t", "value", "velocity")
    assert rows[-1][1] == pytest.approx(2.0, abs=1e-8)
    assert set(out.figures) == {"optimal_path"}


def test_clt_experiment_structure(ini_config):
    cfg = _load(ini_config,
                experiment={"kind": "clt", "epsilon": "0.1", "replicas": "1000",
                            "grid_n": "256"},
                output={"seed": "20260825"})
    out = hl.run_experiment(cfg)
    rep = out.report
    assert rep.kind == "clt"
    names = [c.name for c in rep.checks]
    assert "ks_terminal_smallest_eps" in names
    assert "var_err_smallest_eps" in names
    assert "clt_summary" in out.tables
    assert set(out.figures) == {"clt_cov_err", "clt_var_terminal"}
    per = rep.results["per_eps"]
    assert len(per[0]["ks"]) == 3
