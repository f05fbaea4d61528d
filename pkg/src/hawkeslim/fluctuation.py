"""Gaussian fluctuation limit around the deterministic path.

Centered and scaled by the square root of the scale parameter, the gap
between the simulated path and the deterministic limit converges to a
Gaussian process X solving a linear stochastic Volterra equation

    dX_t = a(t) * ( h(0) X_t + integral_0^t X_u h'(t-u) du ) dt + sigma(t) dW_t

with a(t) = phi'(excitation input along the limit path) and sigma(t) the
square root of the limit rate.  The Euler scheme below is linear in the
noise, so writing one step after another as a lower-triangular solve gives
both a path sampler and the exact covariance of the discretized process
(positive semidefinite by construction).
"""

from __future__ import annotations

import time
import weakref
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.linalg import solve_triangular

from .errors import CapabilityError, ConfigurationError, ModelViolationError
from .limit import excitation_input
from .model import IntensityFn, Kernel
from .paths import GridPath
from .report import ExperimentReport, make_check
from .rng import replica_rng
from .simulate import SimConfig, simulate_mean_field, simulate_scaled_hawkes

_FD_STEP = 1e-5  # phi' fallback: central difference with step 1e-5 * (1 + |x|)


@dataclass(frozen=True, eq=False)
class GaussianLimitModel:
    """Coefficients of the fluctuation equation sampled on a uniform grid."""

    grid: np.ndarray
    drift_gain: np.ndarray   # a(t) = phi' along the limit path
    sigma: np.ndarray        # sqrt of the limit rate
    h0: float                # kernel at 0
    hprime: np.ndarray       # kernel derivative on the grid
    rate: np.ndarray         # limit rate (sigma squared)

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0])


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Symmetric PSD covariance of the fluctuation process on its grid."""

    grid: np.ndarray
    matrix: np.ndarray


def phi_derivative_values(phi: IntensityFn, x: np.ndarray, allow_fd: bool = True) -> np.ndarray:
    """phi' at the given points: analytic when attached, else central FD."""
    if phi.deriv is not None:
        return np.asarray(phi.deriv(x), dtype=float)
    if not allow_fd:
        raise CapabilityError("phi has no derivative and finite differences are disabled")
    step = _FD_STEP * (1.0 + np.abs(x))
    return (np.asarray(phi.fn(x + step), dtype=float)
            - np.asarray(phi.fn(x - step), dtype=float)) / (2.0 * step)


def build_gaussian_model(
    kernel: Kernel, phi: IntensityFn, limit_path: GridPath, allow_fd: bool = True
) -> GaussianLimitModel:
    """Assemble the fluctuation coefficients along a solved limit path.

    Needs the kernel derivative (the drift integrates X against h'); raises
    CapabilityError when it is missing.
    """
    if kernel.deriv is None:
        raise CapabilityError("kernel has no derivative; the fluctuation drift needs h'")
    grid = limit_path.grid
    u0 = excitation_input(limit_path, kernel)
    rate = np.asarray(phi.fn(u0), dtype=float)
    if np.any(rate < 0.0):
        raise ModelViolationError("limit rate is negative; phi must map into R+")
    gain = phi_derivative_values(phi, u0, allow_fd=allow_fd)
    return GaussianLimitModel(
        grid=grid,
        drift_gain=gain,
        sigma=np.sqrt(rate),
        h0=float(np.asarray(kernel.fn(0.0))),
        hprime=np.asarray(kernel.deriv(grid), dtype=float),
        rate=rate,
    )


_PROPAGATOR_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _propagator(gm: GaussianLimitModel) -> np.ndarray:
    """Lower-triangular map from per-step noise to the path at nodes 1..n.

    The Euler step X_{i+1} = X_i + dt * a_i (h0 X_i + dt * sum_{j<i}
    h'_{i-j} X_j) + noise_i is linear with unit diagonal, so the map is the
    inverse of a unit lower-triangular matrix, obtained by one triangular
    solve.
    """
    cached = _PROPAGATOR_CACHE.get(gm)
    if cached is not None:
        return cached
    n = gm.grid.size - 1
    dt = gm.dt
    m = np.eye(n)
    a = gm.drift_gain
    hp = gm.hprime
    for r in range(1, n):
        # row r is the equation for X_{r+1} (Euler step i = r)
        m[r, r - 1] = -(1.0 + dt * a[r] * gm.h0)
        if r >= 2:
            # coefficient of X_j, 1 <= j <= r-1: -dt^2 * a_r * h'((r - j) dt)
            m[r, 0 : r - 1] -= dt * dt * a[r] * hp[r - 1 : 0 : -1]
    prop = solve_triangular(m, np.eye(n), lower=True, unit_diagonal=False)
    _PROPAGATOR_CACHE[gm] = prop
    return prop


def covariance_by_resolvent(gm: GaussianLimitModel) -> CovarianceMatrix:
    """Exact covariance of the Euler-discretized fluctuation process.

    C = L diag(rate * dt) L^T over nodes 1..n, embedded with a zero row and
    column for the pinned start.  Symmetric and PSD by construction.
    """
    prop = _propagator(gm)
    n = gm.grid.size - 1
    w = gm.rate[:n] * gm.dt
    core = (prop * w) @ prop.T
    full = np.zeros((n + 1, n + 1))
    full[1:, 1:] = core
    full = 0.5 * (full + full.T)
    return CovarianceMatrix(grid=gm.grid, matrix=full)


def simulate_gaussian_limit(gm: GaussianLimitModel, replicas: int, seed: int) -> np.ndarray:
    """Euler paths of the fluctuation process; one row per replica.

    Noise is drawn as one block from the (seed, 0, stream=2) generator, so
    row r is deterministic given (seed, replicas >= r).
    """
    if replicas < 1:
        raise ValueError("need at least one replica")
    n = gm.grid.size - 1
    rng = replica_rng(seed, 0, stream=2)
    noise = rng.standard_normal((replicas, n))
    noise *= gm.sigma[:n] * np.sqrt(gm.dt)
    prop = _propagator(gm)
    paths = noise @ prop.T
    return np.hstack([np.zeros((replicas, 1)), paths])


def _probe_indices(grid: np.ndarray, probe_times) -> np.ndarray:
    dt = grid[1] - grid[0]
    idx = np.asarray([int(round(p / dt)) for p in probe_times])
    if np.any(idx < 1) or np.any(idx > grid.size - 1):
        raise ConfigurationError("probe times must lie in (0, horizon]")
    return idx


def clt_check(
    kernel: Kernel,
    phi: IntensityFn,
    limit_path: GridPath,
    eps_list,
    replicas: int,
    seed: int,
    probe_times=None,
    use_mean_field: bool = False,
    ks_alpha: float = 0.01,
    max_events: int = 10_000_000,
) -> ExperimentReport:
    """Compare simulated standardized marginals against the Gaussian limit.

    For each scale parameter: simulate ``replicas`` paths, standardize the
    gap to the limit path at the probe times (defaults: quarter, half, full
    horizon), and report per-probe KS statistics against the model normal
    plus the worst relative error between empirical and model covariance
    across probes.  Passes when the KS statistic at the full horizon for
    the smallest scale is below the critical value at ``ks_alpha`` and the
    covariance error decreases as the scale shrinks.

    With ``use_mean_field`` the samples come from the N-node system at
    N = round(1/eps) instead of the scaled process.
    """
    if replicas < 1000:
        raise ConfigurationError("clt comparisons need at least 1000 replicas")
    t0 = time.perf_counter()
    horizon = limit_path.horizon
    if probe_times is None:
        probe_times = (horizon / 4.0, horizon / 2.0, horizon)
    idx = _probe_indices(limit_path.grid, probe_times)
    probe_times = limit_path.grid[idx]
    z0_at = limit_path.values[idx]

    gm = build_gaussian_model(kernel, phi, limit_path)
    cov = covariance_by_resolvent(gm).matrix[np.ix_(idx, idx)]
    crit = float(stats.kstwobign.isf(ks_alpha)) / np.sqrt(replicas)

    eps_sorted = sorted(float(e) for e in eps_list)
    results = []
    for eps in reversed(eps_sorted):  # largest first; smallest last
        cfg = SimConfig(epsilon=eps, horizon=horizon, seed=seed, max_events=max_events)
        marg = np.empty((replicas, idx.size))
        for r in range(replicas):
            if use_mean_field:
                mf = simulate_mean_field(kernel, phi, int(round(1.0 / eps)), cfg, replica=r)
                times = mf.all_times
                scale = 1.0 / mf.n_nodes
            else:
                ep = simulate_scaled_hawkes(kernel, phi, cfg, replica=r)
                times = ep.times
                scale = eps
            counts = np.searchsorted(times, probe_times, side="right")
            marg[r] = (scale * counts - z0_at) / np.sqrt(eps)
        ks = []
        for k in range(idx.size):
            sd = float(np.sqrt(cov[k, k]))
            stat, pval = stats.kstest(marg[:, k], "norm", args=(0.0, sd))
            ks.append({"t": float(probe_times[k]), "stat": float(stat), "pvalue": float(pval)})
        emp = np.cov(marg.T, ddof=1)
        cov_err = float(np.max(np.abs(emp - cov)) / np.max(np.abs(cov)))
        var_err = float(abs(emp[-1, -1] - cov[-1, -1]) / cov[-1, -1])
        results.append(
            {
                "eps": eps,
                "ks": ks,
                "cov_rel_err": cov_err,
                "var_rel_err_terminal": var_err,
                "empirical_cov": emp.tolist(),
            }
        )

    checks = [
        make_check(
            "ks_terminal_smallest_eps",
            results[-1]["ks"][-1]["stat"],
            crit,
            "<",
        )
    ]
    errs = [r["var_rel_err_terminal"] for r in results]
    checks.append(_decreasing_check("var_err_decreasing", errs))
    report = ExperimentReport(
        kind="clt",
        inputs={
            "eps_list": eps_sorted,
            "replicas": replicas,
            "seed": seed,
            "probe_times": [float(p) for p in probe_times],
            "use_mean_field": use_mean_field,
            "ks_alpha": ks_alpha,
            "model_cov": cov.tolist(),
            "ks_critical": crit,
        },
        results={"per_eps": results},
        checks=checks,
        wall_time_s=time.perf_counter() - t0,
    )
    return report


def _decreasing_check(name: str, values):
    """Check that a sequence strictly decreases; evidence is last vs best prior."""
    from .report import Check

    vals = [float(v) for v in values]
    monotone = all(b < a for a, b in zip(vals[:-1], vals[1:]))
    return Check(
        name=name,
        value=vals[-1],
        threshold=min(vals[:-1]) if len(vals) > 1 else float("inf"),
        comparator="<",
        passed=bool(monotone),
    )
