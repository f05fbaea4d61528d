import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import hawkeslim as hl


# ---------------------------------------------------------------------------
# pointwise cost


def test_ell_known_values():
    assert hl.ell(1.0, 1.0) == 0.0
    assert hl.ell(0.0, 2.5) == 2.5
    assert hl.ell(2.0, 1.0) == pytest.approx(2.0 * math.log(2.0) - 1.0, abs=1e-14)


def test_ell_rejects_bad_arguments():
    with pytest.raises(hl.DomainError):
        hl.ell(1.0, 0.0)
    with pytest.raises(hl.DomainError):
        hl.ell(1.0, -2.0)
    with pytest.raises(hl.DomainError):
        hl.ell(-0.5, 1.0)
    with pytest.raises(hl.DomainError):
        hl.RatePoint(x=1.0, y=-1.0)
    assert hl.RatePoint(x=3.0, y=2.0).cost() == pytest.approx(hl.ell(3.0, 2.0))


@settings(max_examples=60, deadline=None)
@given(
    x=st.floats(min_value=0.0, max_value=50.0),
    y=st.floats(min_value=1e-6, max_value=50.0),
)
def test_ell_nonnegative_zero_only_on_diagonal(x, y):
    v = hl.ell(x, y)
    assert v >= 0.0
    if abs(x - y) > 1e-6 * (1.0 + y):
        assert v > 0.0


@settings(max_examples=60, deadline=None)
@given(
    a=st.floats(min_value=0.0, max_value=20.0),
    b=st.floats(min_value=0.0, max_value=20.0),
    y=st.floats(min_value=1e-3, max_value=20.0),
)
def test_ell_convex_in_velocity(a, b, y):
    mid = hl.ell(0.5 * (a + b), y)
    assert mid <= 0.5 * (hl.ell(a, y) + hl.ell(b, y)) + 1e-9


# ---------------------------------------------------------------------------
# path functionals


def test_rate_I_zero_on_limit_path(linexp, linexp_limit):
    kernel, phi = linexp
    assert hl.rate_I(linexp_limit, kernel, phi) <= 1e-12


def test_rate_I_infinite_off_domain(linexp, linexp_limit):
    kernel, phi = linexp
    grid = linexp_limit.grid
    no_deriv = hl.GridPath(grid=grid, values=linexp_limit.values, nondecreasing=True)
    assert hl.rate_I(no_deriv, kernel, phi) == float("inf")
    untagged = hl.GridPath(grid=grid, values=linexp_limit.values,
                           derivative=linexp_limit.derivative)
    assert hl.rate_I(untagged, kernel, phi) == float("inf")
    shifted = hl.GridPath(grid=grid, values=linexp_limit.values + 1.0,
                          derivative=linexp_limit.derivative, nondecreasing=True)
    assert hl.rate_I(shifted, kernel, phi) == float("inf")


def test_rate_I_linear_path_closed_form(poisson):
    kernel, phi = poisson
    grid = hl.uniform_grid(1.0, 200)
    for x in (0.5, 1.0, 2.0, 3.7):
        path = hl.GridPath(grid=grid, values=x * grid,
                           derivative=np.full(grid.shape, x), nondecreasing=True)
        assert hl.rate_I(path, kernel, phi) == pytest.approx(hl.ell(x, 1.0), abs=1e-12)


def test_rate_J_linear_path_closed_form(poisson):
    kernel, phi = poisson
    z0, _ = hl.solve_limit(kernel, phi, 1.0, n=200)
    grid = z0.grid
    for x in (0.5, 1.0, -2.0):
        path = hl.GridPath(grid=grid, values=x * grid,
                           derivative=np.full(grid.shape, x))
        val = hl.rate_J(path, kernel, phi, z0)
        assert val == pytest.approx(x * x / 2.0, rel=1e-9)


def test_rate_J_infinite_without_derivative(poisson):
    kernel, phi = poisson
    z0, _ = hl.solve_limit(kernel, phi, 1.0, n=64)
    path = hl.GridPath(grid=z0.grid, values=z0.grid * 1.0)
    assert hl.rate_J(path, kernel, phi, z0) == float("inf")


def test_rate_I_domain_error_on_nonpositive_rate():
    # a negative-scale kernel can push a small linear rate below zero
    kernel = hl.exponential_kernel(beta=1.0, scale=-5.0)
    phi = hl.linear_intensity(nu=0.1, slope=1.0)
    grid = hl.uniform_grid(2.0, 100)
    path = hl.GridPath(grid=grid, values=2.0 * grid,
                       derivative=np.full(grid.shape, 2.0), nondecreasing=True)
    with pytest.raises(hl.DomainError):
        hl.rate_I(path, kernel, phi)


# ---------------------------------------------------------------------------
# discretized functionals and gradients


def _fd(fun, v):
    out = np.empty_like(v)
    for j in range(v.size):
        h = 1e-6 * (1.0 + abs(v[j]))
        vp, vm = v.copy(), v.copy()
        vp[j] += h
        vm[j] -= h
        out[j] = (fun(vp) - fun(vm)) / (2.0 * h)
    return out


def test_discrete_gradient_matches_fd_I(linexp):
    kernel, phi = linexp
    dr = hl.discretize_rate("I", kernel, phi, 1.0, 24)
    rng = np.random.default_rng(42)
    for _ in range(5):
        v = rng.uniform(0.3, 3.0, size=24)
        g = dr.gradient(v)
        g_fd = _fd(dr.value, v)
        assert np.max(np.abs(g - g_fd)) <= 1e-5 * max(1.0, np.max(np.abs(g)))


def test_discrete_gradient_matches_fd_J(linexp, linexp_limit):
    kernel, phi = linexp
    dr = hl.discretize_rate("J", kernel, phi, 1.0, 24, z0=linexp_limit)
    rng = np.random.default_rng(43)
    for _ in range(5):
        v = rng.normal(0.0, 2.0, size=24)
        g = dr.gradient(v)
        g_fd = _fd(dr.value, v)
        assert np.max(np.abs(g - g_fd)) <= 1e-5 * max(1.0, np.max(np.abs(g)))


def test_discrete_value_agrees_with_path_functional(linexp, linexp_limit):
    kernel, phi = linexp
    n = 256
    dr = hl.discretize_rate("I", kernel, phi, 1.0, n)
    v = np.full(n, 1.5)
    path = dr.path(v)
    assert path.values[-1] == pytest.approx(1.5)
    direct = hl.rate_I(path, kernel, phi)
    assert dr.value(v) == pytest.approx(direct, rel=5e-3)


# ---------------------------------------------------------------------------
# optimizer


def test_minimize_I_unexcited_endpoint(poisson):
    kernel, phi = poisson
    res = hl.minimize_rate("I", kernel, phi,
                           hl.ConstraintSpec(kind="endpoint-equal", x=2.0), 1.0,
                           n=128, seed=0)
    assert res.value == pytest.approx(2.0 * math.log(2.0) - 1.0, abs=1e-6)
    assert res.report.converged
    assert res.report.grad_norm <= 1e-8
    assert len(res.report.start_values) >= 1
    assert res.path.values[-1] == pytest.approx(2.0, abs=1e-9)
    # the optimal path is the straight line
    assert np.max(np.abs(res.path.values - 2.0 * res.path.grid)) <= 1e-4


def test_minimize_J_unexcited_endpoint(poisson):
    kernel, phi = poisson
    res = hl.minimize_rate("J", kernel, phi,
                           hl.ConstraintSpec(kind="endpoint-equal", x=1.0), 1.0,
                           n=128, seed=0)
    assert res.value == pytest.approx(0.5, abs=1e-6)
    assert res.report.converged
    assert np.max(np.abs(res.path.values - res.path.grid)) <= 1e-4


def test_minimize_I_at_least_reduces_to_boundary(linexp, linexp_limit):
    kernel, phi = linexp
    z_T = float(linexp_limit.values[-1])
    res = hl.minimize_rate("I", kernel, phi,
                           hl.ConstraintSpec(kind="endpoint-at-least", x=1.5 * z_T),
                           1.0, z0=linexp_limit, n=64, seed=0)
    assert res.value > 0.0
    assert res.path.values[-1] == pytest.approx(1.5 * z_T, abs=1e-8)
    equal = hl.minimize_rate("I", kernel, phi,
                             hl.ConstraintSpec(kind="endpoint-equal", x=1.5 * z_T),
                             1.0, z0=linexp_limit, n=64, seed=0)
    assert res.value == pytest.approx(equal.value, rel=1e-9)


def test_minimize_I_slack_at_least_costs_nothing(linexp, linexp_limit):
    kernel, phi = linexp
    z_T = float(linexp_limit.values[-1])
    res = hl.minimize_rate("I", kernel, phi,
                           hl.ConstraintSpec(kind="endpoint-at-least", x=0.5 * z_T),
                           1.0, z0=linexp_limit, n=64, seed=0)
    assert res.value <= 1e-8
    assert res.path.values[-1] == pytest.approx(z_T, abs=1e-6)


def test_minimize_tube_on_reference_is_free(linexp, linexp_limit):
    kernel, phi = linexp
    spec = hl.ConstraintSpec(kind="tube", reference=linexp_limit, radius=0.1)
    res = hl.minimize_rate("I", kernel, phi, spec, 1.0, z0=linexp_limit,
                           n=64, seed=0)
    assert res.value <= 1e-6
    assert res.report.constraint_violation <= 1e-6


def test_minimize_tube_away_from_limit_costs(linexp, linexp_limit):
    kernel, phi = linexp
    ref = hl.GridPath(grid=linexp_limit.grid, values=1.6 * linexp_limit.values,
                      derivative=1.6 * linexp_limit.derivative, nondecreasing=True)
    spec = hl.ConstraintSpec(kind="tube", reference=ref, radius=0.05)
    res = hl.minimize_rate("I", kernel, phi, spec, 1.0, z0=linexp_limit,
                           n=64, seed=0)
    assert res.value > 0.01
    assert res.report.constraint_violation <= 1e-6
    assert res.report.penalty_rounds >= 1
    gap = np.abs(res.path.values - np.interp(res.path.grid, ref.grid, ref.values))
    assert gap.max() <= 0.05 + 1e-6


def test_constraint_spec_validation(linexp_limit):
    with pytest.raises(hl.ConstraintError):
        hl.ConstraintSpec(kind="endpoint-equal", x=None)
    with pytest.raises(hl.ConstraintError):
        hl.ConstraintSpec(kind="endpoint-equal", x=float("nan"))
    with pytest.raises(hl.ConstraintError):
        hl.ConstraintSpec(kind="tube", reference=linexp_limit, radius=0.0)
    with pytest.raises(hl.ConstraintError):
        hl.ConstraintSpec(kind="corridor", x=1.0)


def test_negative_endpoint_rejected_for_I(poisson):
    kernel, phi = poisson
    with pytest.raises(hl.ConstraintError):
        hl.minimize_rate("I", kernel, phi,
                         hl.ConstraintSpec(kind="endpoint-equal", x=-1.0), 1.0, n=32)


def test_unreachable_tolerance_raises_stagnation(linexp, linexp_limit):
    kernel, phi = linexp
    with pytest.raises(hl.StagnationError) as err:
        hl.minimize_rate("I", kernel, phi,
                         hl.ConstraintSpec(kind="endpoint-equal", x=2.0), 1.0,
                         z0=linexp_limit, n=32, seed=0, starts=1, gtol=0.0)
    assert err.value.best_value is not None
    assert err.value.best_path is not None


# ---------------------------------------------------------------------------
# tail probabilities


def test_exact_tail_matches_direct_sum(poisson):
    kernel, phi = poisson
    te = hl.tail_probability(kernel, phi, 1.0, eps=0.1, x=1.5, method="exact")
    mu, m = 10.0, 15
    direct = sum(math.exp(-mu) * mu ** k / math.factorial(k) for k in range(m, 60))
    assert te.p_hat == pytest.approx(direct, rel=1e-10)
    assert te.se == 0.0
    assert te.log_scale_value == pytest.approx(0.1 * math.log(direct), rel=1e-9)
    assert te.details["threshold_count"] == m


def test_plain_tail_agrees_with_exact(poisson):
    kernel, phi = poisson
    exact = hl.tail_probability(kernel, phi, 1.0, eps=0.1, x=1.5, method="exact")
    plain = hl.tail_probability(kernel, phi, 1.0, eps=0.1, x=1.5, method="plain",
                                replicas=4000, seed=20260825)
    assert plain.hits == round(plain.p_hat * 4000)
    assert abs(plain.p_hat - exact.p_hat) <= 4.0 * plain.se


def test_importance_tail_agrees_with_exact(poisson):
    kernel, phi = poisson
    exact = hl.tail_probability(kernel, phi, 1.0, eps=0.05, x=1.5, method="exact")
    imp = hl.tail_probability(kernel, phi, 1.0, eps=0.05, x=1.5,
                              method="importance", replicas=2000,
                              seed=20260825, optimizer_n=128)
    assert imp.se > 0.0
    assert abs(imp.p_hat - exact.p_hat) <= 4.0 * imp.se
    assert imp.hits > 0


def test_importance_tail_deep_regime(poisson):
    # threshold far in the tail: plain sampling would see nothing, the
    # tilted proposal still lands unbiased estimates
    kernel, phi = poisson
    exact = hl.tail_probability(kernel, phi, 1.0, eps=0.02, x=3.0, method="exact")
    assert exact.p_hat < 1e-12
    imp = hl.tail_probability(kernel, phi, 1.0, eps=0.02, x=3.0,
                              method="importance", replicas=4000,
                              seed=20260825, optimizer_n=128)
    assert abs(imp.p_hat - exact.p_hat) <= 4.0 * imp.se
    assert imp.p_hat > 0.0


def test_mdp_exact_and_importance(poisson):
    kernel, phi = poisson
    a = 0.01 ** 0.25
    exact = hl.tail_probability(kernel, phi, 1.0, eps=0.01, x=1.0,
                                regime="mdp", a_eps=a, method="exact")
    m = math.ceil((1.0 + a * 1.0) / 0.01 - 1e-9)
    assert exact.details["threshold_count"] == m
    direct = float(stats.poisson.sf(m - 1, 100.0))
    assert exact.p_hat == pytest.approx(direct, rel=1e-10)
    imp = hl.tail_probability(kernel, phi, 1.0, eps=0.01, x=1.0,
                              regime="mdp", a_eps=a, method="importance",
                              replicas=3000, seed=20260825, optimizer_n=128)
    assert abs(imp.p_hat - exact.p_hat) <= 4.0 * imp.se


def test_plain_tail_degenerate_warns(poisson):
    kernel, phi = poisson
    with pytest.warns(hl.DegenerateEstimateWarning):
        te = hl.tail_probability(kernel, phi, 1.0, eps=0.05, x=3.0,
                                 method="plain", replicas=50, seed=1)
    assert te.p_hat == 0.0
    assert te.log_scale_value == float("-inf")


def test_tail_configuration_errors(linexp, poisson):
    kernel, phi = poisson
    with pytest.raises(hl.ConfigurationError):
        hl.tail_probability(kernel, phi, 1.0, eps=0.1, x=1.5, regime="xdp")
    with pytest.raises(hl.ConfigurationError):
        hl.tail_probability(kernel, phi, 1.0, eps=0.1, x=1.5, method="magic")
    with pytest.raises(hl.ConfigurationError):
        hl.tail_probability(kernel, phi, 1.0, eps=0.1, x=1.5, regime="mdp")
    ek, ep = linexp
    with pytest.raises(hl.ConfigurationError):
        hl.tail_probability(ek, ep, 1.0, eps=0.1, x=2.0, method="exact")


def test_tail_estimate_as_dict_serializes(poisson):
    kernel, phi = poisson
    te = hl.tail_probability(kernel, phi, 1.0, eps=0.1, x=1.5, method="exact")
    d = te.as_dict()
    assert d["schema_version"] == "hawkeslim.tail.v1"
    out = json.dumps(d)
    assert "p_hat" in out
