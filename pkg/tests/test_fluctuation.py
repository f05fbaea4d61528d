import numpy as np
import pytest
from scipy import stats

import hawkeslim as hl
from conftest import LINEXP_VAR_T


@pytest.fixture(scope="module")
def linexp_gm(linexp, linexp_limit):
    kernel, phi = linexp
    return hl.build_gaussian_model(kernel, phi, linexp_limit)


def test_unexcited_covariance_is_brownian(poisson):
    kernel, phi = poisson
    z0, _ = hl.solve_limit(kernel, phi, 1.0, n=128)
    gm = hl.build_gaussian_model(kernel, phi, z0)
    cov = hl.covariance_by_resolvent(gm).matrix
    t = z0.grid
    expected = np.minimum(t[:, None], t[None, :])
    assert np.allclose(cov, expected, atol=1e-12)


def test_zero_gain_covariance_scales_with_level():
    # a constant rate level c with no excitation gives C(s, t) = c * min(s, t)
    kernel = hl.exponential_kernel(beta=1.0)
    phi = hl.constant_intensity(3.0)
    z0, _ = hl.solve_limit(kernel, phi, 2.0, n=128)
    gm = hl.build_gaussian_model(kernel, phi, z0)
    cov = hl.covariance_by_resolvent(gm).matrix
    t = z0.grid
    # phi' is not identically zero (tiny declared slope) but is ~1e-12, so
    # the Brownian form holds to float accuracy
    assert np.allclose(cov, 3.0 * np.minimum(t[:, None], t[None, :]), atol=1e-9)


def test_terminal_variance_closed_form_converges(linexp):
    kernel, phi = linexp
    errs = []
    for n in (512, 2048):
        z0, _ = hl.solve_limit(kernel, phi, 1.0, n=n)
        gm = hl.build_gaussian_model(kernel, phi, z0)
        cov = hl.covariance_by_resolvent(gm).matrix
        errs.append(abs(cov[-1, -1] - LINEXP_VAR_T) / LINEXP_VAR_T)
    assert errs[0] <= 1e-3
    assert errs[1] <= 3e-4
    assert errs[1] < errs[0]


def test_covariance_symmetric_psd(linexp_gm):
    cov = hl.covariance_by_resolvent(linexp_gm).matrix
    assert np.array_equal(cov, cov.T)
    eigs = np.linalg.eigvalsh(cov)
    assert eigs.min() >= -1e-10 * eigs.max()
    # pinned start: zero variance at t = 0, increasing marginal variance
    assert cov[0, 0] == 0.0
    assert np.all(np.diff(np.diag(cov)) > 0.0)


def test_gaussian_sampler_matches_covariance(linexp):
    kernel, phi = linexp
    z0, _ = hl.solve_limit(kernel, phi, 1.0, n=256)
    gm = hl.build_gaussian_model(kernel, phi, z0)
    cov = hl.covariance_by_resolvent(gm).matrix
    paths = hl.simulate_gaussian_limit(gm, replicas=20_000, seed=71)
    assert paths.shape == (20_000, 257)
    assert np.all(paths[:, 0] == 0.0)
    v_model = cov[-1, -1]
    term = paths[:, -1]
    se_mean = term.std(ddof=1) / np.sqrt(term.size)
    assert abs(term.mean()) <= 3.5 * se_mean
    v_emp = term.var(ddof=1)
    assert abs(v_emp - v_model) <= 3.5 * v_model * np.sqrt(2.0 / term.size)
    mid = paths[:, 128]
    assert abs(mid.var(ddof=1) - cov[128, 128]) <= 3.5 * cov[128, 128] * np.sqrt(2.0 / term.size)


def test_gaussian_sampler_deterministic(linexp_gm):
    a = hl.simulate_gaussian_limit(linexp_gm, replicas=8, seed=5)
    b = hl.simulate_gaussian_limit(linexp_gm, replicas=8, seed=5)
    assert np.array_equal(a, b)
    c = hl.simulate_gaussian_limit(linexp_gm, replicas=8, seed=6)
    assert not np.array_equal(a, c)


def test_phi_derivative_fallback_and_refusal():
    phi = hl.IntensityFn(kind="table", fn=lambda x: np.tanh(x) + 2.0,
                         lipschitz_alpha=1.0, inf_value=1.0, deriv=None,
                         second_deriv_bound=None, params={})
    x = np.array([-1.0, 0.0, 0.5, 2.0])
    fd = hl.phi_derivative_values(phi, x)
    assert np.allclose(fd, 1.0 - np.tanh(x) ** 2, atol=1e-8)
    with pytest.raises(hl.CapabilityError):
        hl.phi_derivative_values(phi, x, allow_fd=False)


def test_build_gaussian_model_needs_kernel_derivative(linexp_limit):
    table = hl.table_kernel([0.0, 0.5, 1.0], [1.0, 0.5, 0.0])
    phi = hl.linear_intensity(nu=1.0, slope=1.0)
    with pytest.raises(hl.CapabilityError):
        hl.build_gaussian_model(table, phi, linexp_limit)


def test_clt_check_report_structure(poisson):
    kernel, phi = poisson
    z0, _ = hl.solve_limit(kernel, phi, 1.0, n=256)
    report = hl.clt_check(kernel, phi, z0, eps_list=[0.05], replicas=1000,
                          seed=20260825)
    assert report.kind == "clt"
    per = report.results["per_eps"]
    assert len(per) == 1 and per[0]["eps"] == 0.05
    assert [k["t"] for k in per[0]["ks"]] == [0.25, 0.5, 1.0]
    assert 0.0 <= per[0]["cov_rel_err"] <= 1.0
    names = [c.name for c in report.checks]
    assert names == ["ks_terminal_smallest_eps", "var_err_decreasing"]
    # with a single scale the decrease check is vacuous
    assert report.checks[1].passed
    assert report.inputs["ks_critical"] == pytest.approx(
        float(stats.kstwobign.isf(0.01)) / np.sqrt(1000.0)
    )
    model_cov = np.asarray(report.inputs["model_cov"])
    assert model_cov.shape == (3, 3)
    emp = np.asarray(per[0]["empirical_cov"])
    assert np.allclose(emp, emp.T)


def test_clt_check_rejects_thin_ensembles(poisson):
    kernel, phi = poisson
    z0, _ = hl.solve_limit(kernel, phi, 1.0, n=64)
    with pytest.raises(hl.ConfigurationError):
        hl.clt_check(kernel, phi, z0, eps_list=[0.1], replicas=200, seed=1)
    with pytest.raises(hl.ConfigurationError):
        hl.clt_check(kernel, phi, z0, eps_list=[0.1], replicas=1000, seed=1,
                     probe_times=(2.5,))
