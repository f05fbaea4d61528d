import math

import numpy as np
import pytest

import hawkeslim as hl
from conftest import LINEXP_PATH, LINEXP_RATE, LINEXP_TERMINAL


def test_constant_phi_limit_is_linear(poisson):
    _, phi = poisson
    kernel = hl.exponential_kernel(beta=1.0)
    z0, _ = hl.solve_limit(kernel, phi, 2.0, n=256)
    assert np.allclose(z0.values, z0.grid * 1.0, atol=1e-12)


def test_zero_kernel_limit_is_phi0_times_t():
    z0, _ = hl.solve_limit(hl.zero_kernel(), hl.linear_intensity(nu=1.5), 2.0, n=128)
    assert np.allclose(z0.values, 1.5 * z0.grid, atol=1e-12)


def test_linexp_terminal_closed_form(linexp):
    kernel, phi = linexp
    z0, _ = hl.solve_limit(kernel, phi, 1.0, n=4096)
    assert abs(z0.values[-1] - LINEXP_TERMINAL) <= 1e-6
    assert np.max(np.abs(z0.values - LINEXP_PATH(z0.grid))) <= 2e-6


def test_linexp_rate_closed_form(linexp, linexp_limit):
    kernel, phi = linexp
    lam = hl.limit_intensity(linexp_limit, kernel, phi)
    half = np.searchsorted(lam.grid, 0.5)
    assert lam.grid[half] == pytest.approx(0.5)
    assert abs(lam.values[half] - (2.0 - math.exp(-0.5))) <= 1e-6
    assert np.max(np.abs(lam.values - LINEXP_RATE(lam.grid))) <= 1e-6


def test_trapezoid_error_decays_second_order(linexp):
    kernel, phi = linexp
    errs = []
    for n in (256, 512, 1024):
        z0, _ = hl.solve_limit(kernel, phi, 1.0, n=n)
        errs.append(np.max(np.abs(z0.values - LINEXP_PATH(z0.grid))))
    assert errs[0] / errs[1] > 3.0
    assert errs[1] / errs[2] > 3.0


def test_picard_residuals_eventually_monotone(linexp):
    kernel, phi = linexp
    _, report = hl.solve_limit(kernel, phi, 1.0, n=512)
    tail = report.residual_history[-5:]
    assert all(b < a for a, b in zip(tail[:-1], tail[1:]))
    assert report.residual <= report.tol


def test_solve_limit_divergence_reports_residual(linexp):
    kernel, phi = linexp
    with pytest.raises(hl.DivergenceError) as err:
        hl.solve_limit(kernel, phi, 1.0, n=128, tol=0.0, max_iter=10)
    assert err.value.residual >= 0.0


def test_limit_intensity_on_single_atom_step_path():
    kernel = hl.exponential_kernel(beta=2.0)
    phi = hl.linear_intensity(nu=1.0, slope=1.0)
    grid = hl.uniform_grid(1.0, 200)
    tau, eps = 0.3, 0.25
    values = np.where(grid >= tau, eps, 0.0)
    path = hl.GridPath(grid=grid, values=values, atoms=(np.array([tau]), np.array([eps])),
                       nondecreasing=True)
    lam = hl.limit_intensity(path, kernel, phi)
    after = grid > tau
    expected = 1.0 + eps * np.exp(-2.0 * (grid[after] - tau))
    assert np.allclose(lam.values[after], expected, atol=1e-12)
    before = grid < tau
    assert np.allclose(lam.values[before], 1.0, atol=1e-12)


def test_excitation_input_derivative_vs_increment_routes(linexp_limit):
    kernel = hl.exponential_kernel(beta=2.0)
    with_deriv = hl.excitation_input(linexp_limit, kernel)
    stripped = hl.GridPath(grid=linexp_limit.grid, values=linexp_limit.values,
                           nondecreasing=True)
    without = hl.excitation_input(stripped, kernel)
    assert np.max(np.abs(with_deriv - without)) <= 5e-3
    assert with_deriv[0] == 0.0


def test_trapezoid_convolution_matches_quadrature():
    n = 1024
    dt = 1.0 / n
    t = np.arange(n + 1) * dt
    h = np.exp(-2.0 * t)
    f = np.sin(t)
    # int_0^t e^{-2(t-s)} sin(s) ds = (2 sin t - cos t + e^{-2t}) / 5
    exact = (2.0 * np.sin(t) - np.cos(t) + np.exp(-2.0 * t)) / 5.0
    conv = hl.trapezoid_convolution(h, f, dt)
    assert np.max(np.abs(conv - exact)) <= 5e-7


def test_solve_limit_rejects_bad_grid(linexp):
    kernel, phi = linexp
    with pytest.raises(ValueError):
        hl.solve_limit(kernel, phi, 1.0, n=1)
    with pytest.raises(ValueError):
        hl.solve_limit(kernel, phi, -1.0, n=64)


def test_gridpath_validation():
    grid = hl.uniform_grid(1.0, 4)
    with pytest.raises(ValueError):
        hl.GridPath(grid=grid, values=np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        hl.GridPath(grid=grid, values=np.array([0.0, 1.0, 0.5, 2.0, 3.0]),
                    nondecreasing=True)
    path = hl.GridPath(grid=grid, values=np.arange(5.0))
    assert path.horizon == 1.0 and path.n_steps == 4
    assert path.value_at(0.625) == pytest.approx(2.5)
