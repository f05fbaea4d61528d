"""Rare-event machinery: path costs, optimal paths, and tail estimates.

Two path-space cost functionals measure how expensive it is for the scaled
process to track a given path:

* ``rate_I`` (large deviations, speed 1/eps): the Poisson-type integrand
  ell(velocity; model rate along the path) integrated over the horizon, on
  nondecreasing absolutely continuous paths from 0.

* ``rate_J`` (moderate deviations): a quadratic form in the centered path,
  (velocity - phi' * excitation input of the path)^2 / (2 * limit rate),
  on absolutely continuous paths from 0 of either sign.

``minimize_rate`` discretizes a functional by piecewise-constant segment
velocities and runs projected gradient descent with Armijo backtracking,
multi-start to hedge against non-convexity.  ``tail_probability`` estimates
terminal tail probabilities by plain Monte Carlo, by importance sampling
along the optimal path, or by the exact Poisson formula for unexcited
models.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import (
    ConfigurationError,
    ConstraintError,
    DegenerateEstimateWarning,
    DomainError,
    InternalLogicError,
    StagnationError,
    UnstableISWarning,
)
from .fluctuation import phi_derivative_values
from .limit import excitation_input, solve_limit
from .model import IntensityFn, Kernel
from .paths import GridPath, uniform_grid
from .rng import replica_rng
from .simulate import SimConfig, integrated_intensity, simulate_scaled_hawkes

_ARMIJO_C1 = 1e-4
_ARMIJO_FACTOR = 0.5
_MAX_HALVINGS = 60
_MAX_LS_FAILURES = 50
_X_FLOOR = 1e-300  # keeps log finite at the v >= 0 boundary


# ---------------------------------------------------------------------------
# pointwise cost


def ell(x: float, y: float) -> float:
    """Pointwise cost x log(x/y) - x + y of running at velocity x against
    rate y; ell(0; y) = y.  Nonnegative, zero exactly at x = y."""
    if not y > 0.0:
        raise DomainError("rate argument must be positive")
    if x < 0.0:
        raise DomainError("velocity argument must be nonnegative")
    if x == 0.0:
        return float(y)
    return float(x * math.log(x / y) - x + y)


@dataclass(frozen=True)
class RatePoint:
    """A validated (velocity, rate) pair."""

    x: float
    y: float

    def __post_init__(self):
        if not self.y > 0.0:
            raise DomainError("rate must be positive")
        if self.x < 0.0:
            raise DomainError("velocity must be nonnegative")

    def cost(self) -> float:
        return ell(self.x, self.y)


def _ell_vec(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > 0.0, x * np.log(np.maximum(x, _X_FLOOR) / y) - x + y, y)
    return out


# ---------------------------------------------------------------------------
# path functionals (node-based trapezoid, shared grid semantics with limit)


def rate_I(eta: GridPath, kernel: Kernel, phi: IntensityFn) -> float:
    """Large-deviation cost of a path; +inf when the path is not tagged
    nondecreasing absolutely continuous from 0."""
    if eta.derivative is None or not eta.nondecreasing:
        return float("inf")
    if abs(eta.values[0]) > 1e-12:
        return float("inf")
    scale = max(1.0, float(np.abs(eta.derivative).max()))
    if np.any(eta.derivative < -1e-12 * scale):
        return float("inf")
    vel = np.maximum(eta.derivative, 0.0)
    y = np.asarray(phi.fn(excitation_input(eta, kernel)), dtype=float)
    if np.any(y <= 0.0):
        raise DomainError("phi is nonpositive along the path; positive rates required")
    return float(np.trapezoid(_ell_vec(vel, y), eta.grid))


def rate_J(
    eta: GridPath,
    kernel: Kernel,
    phi: IntensityFn,
    z0: GridPath,
    allow_fd: bool = True,
) -> float:
    """Moderate-deviation cost of a centered path; +inf when the path is
    not absolutely continuous from 0."""
    if eta.derivative is None:
        return float("inf")
    if abs(eta.values[0]) > 1e-12:
        return float("inf")
    u0 = excitation_input(z0, kernel)
    if not np.array_equal(z0.grid, eta.grid):
        u0 = np.interp(eta.grid, z0.grid, u0)
    p = np.asarray(phi.fn(u0), dtype=float)
    if np.any(p <= 0.0):
        raise DomainError("limit rate is nonpositive; positive rates required")
    q = phi_derivative_values(phi, u0, allow_fd=allow_fd)
    c = excitation_input(eta, kernel)
    resid = eta.derivative - q * c
    return float(np.trapezoid(resid * resid / (2.0 * p), eta.grid))


# ---------------------------------------------------------------------------
# discretized functionals for optimization


@dataclass(frozen=True, eq=False)
class DiscreteRate:
    """A rate functional discretized by segment velocities on [0, horizon].

    Paths are piecewise linear: eta(t_i) = dt * (v_1 + ... + v_i).  The
    excitation input at segment midpoints is a discrete convolution of the
    velocities with midpoint kernel weights.  ``value`` and ``gradient``
    operate on velocity vectors of length n; the analytic gradient matches
    central finite differences of ``value`` (verified at the optimizer's
    first iterate).
    """

    functional: str  # "I" or "J"
    kernel: Kernel
    phi: IntensityFn
    horizon: float
    n: int
    weights: np.ndarray                  # midpoint kernel weights, length n
    p_mid: np.ndarray | None = None      # J only: limit rate at midpoints
    q_mid: np.ndarray | None = None      # J only: phi' at midpoints
    allow_fd: bool = True

    @property
    def dt(self) -> float:
        return self.horizon / self.n

    def conv_input(self, v: np.ndarray) -> np.ndarray:
        return self.dt * np.convolve(self.weights, v)[: self.n]

    def value(self, v: np.ndarray) -> float:
        dt = self.dt
        if self.functional == "I":
            if np.any(v < 0.0):
                return float("inf")
            y = np.asarray(self.phi.fn(self.conv_input(v)), dtype=float)
            if np.any(y <= 0.0):
                return float("inf")
            return float(dt * np.sum(_ell_vec(v, y)))
        c = self.conv_input(v)
        r = v - self.q_mid * c
        return float(dt * np.sum(0.5 * r * r / self.p_mid))

    def gradient(self, v: np.ndarray) -> np.ndarray:
        dt = self.dt
        if self.functional == "I":
            c = self.conv_input(v)
            y = np.asarray(self.phi.fn(c), dtype=float)
            yp = phi_derivative_values(self.phi, c, allow_fd=self.allow_fd)
            gx = np.log(np.maximum(v, _X_FLOOR) / y)
            gy = 1.0 - v / y
            s = gy * yp
            adj = np.convolve(s[::-1], self.weights)[: self.n][::-1]
            return dt * gx + dt * dt * adj
        c = self.conv_input(v)
        r = (v - self.q_mid * c) / self.p_mid
        adj = np.convolve((r * self.q_mid)[::-1], self.weights)[: self.n][::-1]
        return dt * r - dt * dt * adj

    def path(self, v: np.ndarray) -> GridPath:
        grid = uniform_grid(self.horizon, self.n)
        values = np.concatenate(([0.0], self.dt * np.cumsum(v)))
        node_vel = np.empty(self.n + 1)
        node_vel[0] = v[0]
        node_vel[-1] = v[-1]
        node_vel[1:-1] = 0.5 * (v[:-1] + v[1:])
        return GridPath(
            grid=grid,
            values=values,
            derivative=node_vel,
            nondecreasing=bool(np.all(v >= 0.0)),
        )


def discretize_rate(
    functional: str,
    kernel: Kernel,
    phi: IntensityFn,
    horizon: float,
    n: int,
    z0: GridPath | None = None,
    allow_fd: bool = True,
) -> DiscreteRate:
    """Build the segment-velocity discretization of rate_I or rate_J."""
    if functional not in ("I", "J"):
        raise ValueError("functional must be 'I' or 'J'")
    if n < 2:
        raise ValueError("need at least 2 segments")
    dt = horizon / n
    lags = np.arange(n) * dt
    weights = np.asarray(kernel.fn(lags), dtype=float).copy()
    # own-segment contribution: integral over half a segment of the kernel,
    # approximated by its midpoint value
    weights[0] = 0.5 * float(np.asarray(kernel.fn(dt / 4.0)))
    p_mid = q_mid = None
    if functional == "J":
        if z0 is None:
            raise ValueError("rate_J discretization needs the limit path z0")
        mid = (np.arange(n) + 0.5) * dt
        u0 = excitation_input(z0, kernel)
        u0_mid = np.interp(mid, z0.grid, u0)
        p_mid = np.asarray(phi.fn(u0_mid), dtype=float)
        if np.any(p_mid <= 0.0):
            raise DomainError("limit rate is nonpositive; positive rates required")
        q_mid = phi_derivative_values(phi, u0_mid, allow_fd=allow_fd)
    return DiscreteRate(
        functional=functional,
        kernel=kernel,
        phi=phi,
        horizon=float(horizon),
        n=int(n),
        weights=weights,
        p_mid=p_mid,
        q_mid=q_mid,
        allow_fd=allow_fd,
    )


# ---------------------------------------------------------------------------
# constraints


@dataclass(frozen=True)
class ConstraintSpec:
    """Terminal or tube constraint for the path optimizer.

    kinds: ``endpoint-equal`` (eta(T) = x, handled by eliminating the last
    segment velocity), ``endpoint-at-least`` (eta(T) >= x, exterior
    penalty), ``tube`` (|eta - reference| <= radius at the nodes, exterior
    penalty).
    """

    kind: str
    x: float | None = None
    reference: GridPath | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.kind in ("endpoint-equal", "endpoint-at-least"):
            if self.x is None or not np.isfinite(self.x):
                raise ConstraintError(f"{self.kind} needs a finite target x")
        elif self.kind == "tube":
            if self.reference is None or self.radius is None or not self.radius > 0:
                raise ConstraintError("tube needs a reference path and a positive radius")
        else:
            raise ConstraintError(f"unknown constraint kind {self.kind!r}")


@dataclass
class OptimReport:
    """Convergence diagnostics for one minimize_rate call."""

    iterations: int
    grad_norm: float
    converged: bool
    starts: int
    start_values: tuple
    line_search_failures: int
    gradient_check_rel_err: float | None
    penalty_rounds: int
    constraint_violation: float
    segment_velocities: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class OptimResult:
    path: GridPath
    value: float
    report: OptimReport


def _fd_gradient(fun, v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    for j in range(v.size):
        h = 1e-6 * (1.0 + abs(v[j]))
        vp = v.copy()
        vm = v.copy()
        vp[j] += h
        vm[j] -= h
        out[j] = (fun(vp) - fun(vm)) / (2.0 * h)
    return out


def _project_gradient_descent(
    fun, grad, project, v0, gtol, max_iter
):
    """Spectral projected gradient with Armijo backtracking.

    The trial step follows the Barzilai-Borwein quotient <s,s>/<s,y>,
    which adapts to the dt-scaled curvature of discretized path costs.
    Returns (v, value, iterations, pg_norm, converged, ls_failures).
    Raises StagnationError after repeated line searches fail to decrease.
    """
    v = project(np.array(v0, dtype=float))
    f = fun(v)
    if not np.isfinite(f):
        raise ConstraintError("infeasible starting point for the optimizer")
    g = grad(v)
    failures = 0
    pg_norm = float("inf")
    step = None
    prev = None
    for it in range(1, max_iter + 1):
        pg = v - project(v - g)
        pg_norm = float(np.linalg.norm(pg))
        if pg_norm <= gtol:
            return v, f, it, pg_norm, True, failures
        if prev is not None:
            s = v - prev[0]
            y = g - prev[1]
            sy = float(np.dot(s, y))
            if sy > 1e-30:
                step = float(np.dot(s, s)) / sy
        if step is None:
            step = max(1.0, 1.0 / max(pg_norm, 1e-12))
        step = min(max(step, 1e-12), 1e12)
        accepted = False
        trial = step
        for _ in range(_MAX_HALVINGS):
            vn = project(v - trial * g)
            fn = fun(vn)
            # strict decrease on top of the Armijo bound: once the predicted
            # decrease underflows, accepting fn == f would cycle forever and
            # mask stagnation
            if (
                np.isfinite(fn)
                and fn < f
                and fn <= f - _ARMIJO_C1 * float(np.dot(g, v - vn))
            ):
                accepted = True
                break
            trial *= _ARMIJO_FACTOR
        if not accepted:
            failures += 1
            if failures >= _MAX_LS_FAILURES:
                raise StagnationError(
                    f"line search failed {failures} times (pg norm {pg_norm:.3g})",
                    best_path=v,
                    best_value=f,
                    grad_norm=pg_norm,
                    iterations=it,
                )
            continue
        prev = (v, g)
        v, f = vn, fn
        g = grad(v)
    return v, f, max_iter, pg_norm, False, failures


def minimize_rate(
    functional: str,
    kernel: Kernel,
    phi: IntensityFn,
    constraint: ConstraintSpec,
    horizon: float,
    z0: GridPath | None = None,
    n: int = 512,
    seed: int = 0,
    starts: int = 5,
    gtol: float = 1e-8,
    max_iter: int = 5000,
    check_gradient: bool = True,
    allow_fd: bool = True,
) -> OptimResult:
    """Minimize a discretized rate functional subject to a constraint.

    Multi-start projected gradient descent; the first start is a
    deterministic feasible path (the limit path reshaped to meet the
    constraint when available, else constant velocity), the rest are
    seeded random perturbations of it.  The analytic gradient is verified
    against central finite differences at the first iterate.
    """
    if z0 is None:
        z0, _ = solve_limit(kernel, phi, horizon, n=max(512, n))
    dr = discretize_rate(functional, kernel, phi, horizon, n, z0=z0, allow_fd=allow_fd)
    dt = dr.dt
    nonneg = functional == "I"

    if constraint.kind == "endpoint-at-least":
        # The cost-free path (limit path for I, flat path for J) is the
        # unconstrained minimum; when it satisfies the constraint it is the
        # answer, otherwise the optimum sits on the boundary.  Either way
        # the problem reduces to endpoint-equal, which the eliminated
        # formulation solves far faster than an exterior penalty.
        free_end = float(z0.values[-1]) if functional == "I" else 0.0
        constraint = ConstraintSpec(
            kind="endpoint-equal", x=max(float(constraint.x), free_end)
        )

    if constraint.kind == "endpoint-equal" and nonneg and constraint.x < 0:
        raise ConstraintError("nondecreasing paths cannot reach a negative endpoint")

    base = _initial_velocities(dr, constraint, z0)
    rng = replica_rng(seed, 0, stream=3)
    inits = [base]
    for _ in range(max(0, starts - 1)):
        noise = rng.standard_normal(dr.n)
        if nonneg:
            cand = base * np.exp(0.3 * noise)
        else:
            scale = max(1.0, float(np.abs(base).max()))
            cand = base + 0.3 * scale * noise
        inits.append(_refit_endpoint(cand, constraint, dt, nonneg))

    best = None
    start_values = []
    grad_check_err = None
    total_iters = 0
    total_failures = 0
    for si, v0 in enumerate(inits):
        try:
            out = _solve_one_start(
                dr, constraint, v0, gtol, max_iter, nonneg,
                do_check=(check_gradient and si == 0),
            )
        except StagnationError:
            if best is None and si == len(inits) - 1:
                raise
            continue
        v, raw_value, iters, pg_norm, converged, failures, check_err, rounds, viol = out
        if check_err is not None:
            grad_check_err = check_err
        total_iters += iters
        total_failures += failures
        start_values.append(raw_value)
        if best is None or raw_value < best[1]:
            best = (v, raw_value, pg_norm, converged, rounds, viol)
    if best is None:
        raise ConstraintError("no start produced a feasible optimum")
    v, value, pg_norm, converged, rounds, viol = best
    report = OptimReport(
        iterations=total_iters,
        grad_norm=pg_norm,
        converged=converged,
        starts=len(inits),
        start_values=tuple(start_values),
        line_search_failures=total_failures,
        gradient_check_rel_err=grad_check_err,
        penalty_rounds=rounds,
        constraint_violation=viol,
        segment_velocities=v,
    )
    return OptimResult(path=dr.path(v), value=value, report=report)


def _initial_velocities(dr: DiscreteRate, constraint: ConstraintSpec, z0) -> np.ndarray:
    n, dt, T = dr.n, dr.dt, dr.horizon
    if z0 is not None and z0.derivative is not None:
        mid = (np.arange(n) + 0.5) * dt
        lam = np.interp(mid, z0.grid, z0.derivative)
    else:
        lam = np.full(n, max(float(np.asarray(dr.phi.fn(0.0))), 1e-6))
    if dr.functional == "J":
        lam = np.zeros(n)  # centered paths start from the flat path
    if constraint.kind in ("endpoint-equal", "endpoint-at-least"):
        target = constraint.x
        if dr.functional == "J":
            base = np.full(n, target / T)
            return base
        total = dt * lam.sum()
        if constraint.kind == "endpoint-equal" or total < target:
            if total > 0:
                return lam * (target / total)
            return np.full(n, max(target, 0.0) / T)
        return lam
    # tube: start on the reference
    ref = constraint.reference
    vals = np.interp(uniform_grid(T, n), ref.grid, ref.values)
    return np.diff(vals) / dt


def _refit_endpoint(v: np.ndarray, constraint: ConstraintSpec, dt: float, nonneg: bool) -> np.ndarray:
    if nonneg:
        v = np.maximum(v, 0.0)
    if constraint.kind == "endpoint-equal":
        total = dt * v.sum()
        target = constraint.x
        if nonneg and target >= 0 and total > 0:
            return v * (target / total)
        return v + (target - total) / (dt * v.size)
    return v


def _solve_one_start(dr, constraint, v0, gtol, max_iter, nonneg, do_check):
    if constraint.kind == "endpoint-equal":
        return _solve_equal(dr, constraint, v0, gtol, max_iter, nonneg, do_check)
    return _solve_penalized(dr, constraint, v0, gtol, max_iter, nonneg, do_check)


def _solve_equal(dr, constraint, v0, gtol, max_iter, nonneg, do_check):
    """Elimination of the last segment velocity to pin the endpoint."""
    dt = dr.dt
    target = constraint.x / dt

    def expand(w):
        return np.concatenate([w, [target - w.sum()]])

    def fun(w):
        v = expand(w)
        if nonneg and v[-1] < 0.0:
            return float("inf")
        return dr.value(v)

    def grad(w):
        g = dr.gradient(expand(w))
        return g[:-1] - g[-1]

    project = (lambda w: np.maximum(w, 0.0)) if nonneg else (lambda w: w)
    w0 = np.asarray(v0[:-1], dtype=float)
    check_err = _run_gradient_check(fun, grad, project(w0)) if do_check else None
    w, f, iters, pg, conv, failures = _project_gradient_descent(
        fun, grad, project, w0, gtol, max_iter
    )
    v = expand(w)
    viol = abs(dt * v.sum() - constraint.x)
    return v, dr.value(v), iters, pg, conv, failures, check_err, 0, viol


def _solve_penalized(dr, constraint, v0, gtol, max_iter, nonneg, do_check):
    """Exterior penalty with growing weight for inequality constraints."""
    dt = dr.dt
    kind = constraint.kind
    if kind == "tube":
        ref = np.interp(uniform_grid(dr.horizon, dr.n), constraint.reference.grid,
                        constraint.reference.values)[1:]
        radius = constraint.radius

    def violation(v):
        if kind == "endpoint-at-least":
            return max(0.0, constraint.x - dt * v.sum())
        eta = dt * np.cumsum(v)
        return float(np.max(np.maximum(np.abs(eta - ref) - radius, 0.0), initial=0.0))

    project = (lambda v: np.maximum(v, 0.0)) if nonneg else (lambda v: v)
    tol_c = 1e-8 * max(1.0, abs(constraint.x) if constraint.x is not None else 1.0)
    mu = 10.0
    v = np.asarray(v0, dtype=float)
    check_err = None
    total_iters = 0
    total_failures = 0
    rounds = 0
    for rounds in range(1, 13):
        def fun(vv, mu=mu):
            base = dr.value(vv)
            if not np.isfinite(base):
                return base
            if kind == "endpoint-at-least":
                d = max(0.0, constraint.x - dt * vv.sum())
                return base + mu * d * d
            eta = dt * np.cumsum(vv)
            e = np.maximum(np.abs(eta - ref) - radius, 0.0)
            return base + mu * float(np.sum(e * e))

        def grad(vv, mu=mu):
            g = dr.gradient(vv)
            if kind == "endpoint-at-least":
                d = max(0.0, constraint.x - dt * vv.sum())
                return g - 2.0 * mu * d * dt
            eta = dt * np.cumsum(vv)
            diff = eta - ref
            e = np.maximum(np.abs(diff) - radius, 0.0)
            s = 2.0 * mu * e * np.sign(diff)
            return g + dt * np.cumsum(s[::-1])[::-1]

        if do_check and check_err is None:
            check_err = _run_gradient_check(fun, grad, project(v))
        try:
            v, f, iters, pg, conv, failures = _project_gradient_descent(
                fun, grad, project, v, gtol, max_iter
            )
        except StagnationError as exc:
            # With a large penalty weight the objective decrease underflows
            # before the projected gradient reaches gtol.  Inside a penalty
            # round that is a terminal state, not a failure: keep the best
            # iterate and let the remaining rounds drive feasibility.
            v = np.asarray(exc.best_path, dtype=float)
            pg = exc.grad_norm if exc.grad_norm is not None else float("nan")
            conv = False
            iters = exc.iterations if exc.iterations is not None else max_iter
            failures = _MAX_LS_FAILURES
        total_iters += iters
        total_failures += failures
        if violation(v) <= tol_c:
            break
        mu *= 10.0
    viol = violation(v)
    if viol > 100 * tol_c:
        raise ConstraintError(
            f"penalty method left constraint violation {viol:.3g} after {rounds} rounds"
        )
    return v, dr.value(v), total_iters, pg, conv, total_failures, check_err, rounds, viol


def _run_gradient_check(fun, grad, v):
    g = grad(v)
    g_fd = _fd_gradient(fun, v)
    scale = max(float(np.max(np.abs(g))), float(np.max(np.abs(g_fd))))
    if scale < 1e-7:
        return 0.0  # stationary start: both gradients are roundoff-level zero
    err = float(np.max(np.abs(g - g_fd)))
    # absolute floor: near-stationary starts leave the finite-difference
    # noise (~1e-8) visible in the relative error without indicating a bug
    if err > 1e-5 * scale + 1e-8:
        raise InternalLogicError(
            f"analytic gradient disagrees with finite differences "
            f"(err {err:.3g} at gradient scale {scale:.3g})"
        )
    return err / scale


# ---------------------------------------------------------------------------
# tail probabilities


@dataclass(frozen=True)
class TailEstimate:
    """One tail-probability estimate with its scaled log value.

    ``log_scale_value`` is eps * log(p) for the large-deviation regime and
    (eps / a^2) * log(p) for the moderate regime; -inf when the estimate
    is identically zero.
    """

    regime: str
    x: float
    eps: float
    a_eps: float | None
    p_hat: float
    se: float
    log_scale_value: float
    method: str
    replicas: int
    hits: int
    weight_rel_var: float | None = None
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        from .report import _jsonable

        return {
            "schema_version": "hawkeslim.tail.v1",
            "regime": self.regime,
            "x": self.x,
            "eps": self.eps,
            "a_eps": self.a_eps,
            "p_hat": _jsonable(self.p_hat),
            "se": _jsonable(self.se),
            "log_scale_value": _jsonable(self.log_scale_value),
            "method": self.method,
            "replicas": self.replicas,
            "hits": self.hits,
            "weight_rel_var": _jsonable(self.weight_rel_var),
            "details": _jsonable(self.details),
        }


def _ceil_count(ratio: float) -> int:
    """Smallest integer >= ratio, robust to float representation error."""
    return int(math.ceil(ratio - 1e-9 * max(1.0, abs(ratio))))


def _unexcited_rate(kernel: Kernel, phi: IntensityFn) -> float | None:
    """Constant jump rate when excitation cannot move phi, else None."""
    if phi.kind == "constant":
        return float(phi.params["level"])
    if kernel.kind == "zero" or (kernel.kind == "constant" and kernel.params.get("value") == 0.0):
        return float(np.asarray(phi.fn(0.0)))
    return None


def _log_scale(regime: str, eps: float, a_eps: float | None, log_p: float) -> float:
    if regime == "mdp":
        return (eps / (a_eps * a_eps)) * log_p
    return eps * log_p


def tail_probability(
    kernel: Kernel,
    phi: IntensityFn,
    horizon: float,
    eps: float,
    x: float,
    regime: str = "ldp",
    a_eps: float | None = None,
    method: str = "plain",
    replicas: int = 10_000,
    seed: int = 0,
    z0: GridPath | None = None,
    proposal_velocities: np.ndarray | None = None,
    optimizer_n: int = 256,
    floor_fraction: float = 0.05,
    max_events: int = 10_000_000,
) -> TailEstimate:
    """Estimate P(terminal value >= threshold) in the chosen scaling regime.

    regimes: ``ldp`` targets Z_T >= x; ``mdp`` targets
    (Z_T - Z0_T) / a_eps >= x and needs ``a_eps``.

    methods: ``plain`` Monte Carlo over the thinning simulator;
    ``importance`` simulates an unexcited proposal whose rate follows the
    minimize_rate optimal path (floored away from zero to keep the
    likelihood ratio meaningful) and reweights exactly; ``exact`` uses the
    Poisson formula, available only when the model is effectively
    unexcited (phi constant, or a kernel that is identically zero).
    """
    if regime not in ("ldp", "mdp"):
        raise ConfigurationError(f"unknown regime {regime!r}")
    if regime == "mdp":
        if a_eps is None or not a_eps > 0:
            raise ConfigurationError("mdp regime needs a positive a_eps")
    if method not in ("plain", "importance", "exact"):
        raise ConfigurationError(f"unknown method {method!r}")

    if regime == "mdp" and z0 is None:
        z0, _ = solve_limit(kernel, phi, horizon, n=2048)
    z0_T = float(z0.values[-1]) if z0 is not None else None

    if method == "exact":
        c = _unexcited_rate(kernel, phi)
        if c is None:
            raise ConfigurationError(
                "exact method needs an unexcited model (constant phi or zero kernel)"
            )
        mu = c * horizon / eps
        if regime == "ldp":
            m = _ceil_count(x / eps)
        else:
            m = _ceil_count((c * horizon + a_eps * x) / eps)
        log_p = float(stats.poisson.logsf(m - 1, mu))
        p = float(math.exp(log_p)) if log_p > -700 else 0.0
        return TailEstimate(
            regime=regime, x=x, eps=eps, a_eps=a_eps,
            p_hat=p, se=0.0,
            log_scale_value=_log_scale(regime, eps, a_eps, log_p),
            method="exact", replicas=0, hits=0,
            details={"threshold_count": m, "poisson_mean": mu},
        )

    if method == "plain":
        cfg = SimConfig(epsilon=eps, horizon=horizon, seed=seed, max_events=max_events)
        hits = 0
        for r in range(replicas):
            ep = simulate_scaled_hawkes(kernel, phi, cfg, replica=r)
            if _indicator(ep.terminal, x, regime, a_eps, z0_T):
                hits += 1
        p = hits / replicas
        se = math.sqrt(p * (1.0 - p) / replicas)
        if hits == 0:
            warnings.warn(
                "no replica hit the target event; estimate is degenerate",
                DegenerateEstimateWarning,
            )
            lsv = float("-inf")
        else:
            lsv = _log_scale(regime, eps, a_eps, math.log(p))
        return TailEstimate(
            regime=regime, x=x, eps=eps, a_eps=a_eps, p_hat=p, se=se,
            log_scale_value=lsv, method="plain", replicas=replicas, hits=hits,
        )

    return _importance_estimate(
        kernel, phi, horizon, eps, x, regime, a_eps, replicas, seed, z0,
        proposal_velocities, optimizer_n, floor_fraction,
    )


def _indicator(terminal, x, regime, a_eps, z0_T) -> bool:
    slack = 1e-12 * max(1.0, abs(x))
    if regime == "ldp":
        return terminal >= x - slack
    return (terminal - z0_T) / a_eps >= x - slack


def _importance_estimate(
    kernel, phi, horizon, eps, x, regime, a_eps, replicas, seed, z0,
    proposal_velocities, optimizer_n, floor_fraction,
):
    n = optimizer_n
    if proposal_velocities is None:
        if regime == "ldp":
            opt = minimize_rate(
                "I", kernel, phi,
                ConstraintSpec(kind="endpoint-at-least", x=x),
                horizon, z0=z0, n=n, seed=seed,
            )
            vel = opt.report.segment_velocities
            rate_value = opt.value
        else:
            if z0 is None:
                z0, _ = solve_limit(kernel, phi, horizon, n=2048)
            opt = minimize_rate(
                "J", kernel, phi,
                ConstraintSpec(kind="endpoint-at-least", x=x),
                horizon, z0=z0, n=n, seed=seed,
            )
            mid = (np.arange(n) + 0.5) * (horizon / n)
            lam_mid = np.interp(mid, z0.grid, z0.derivative)
            vel = lam_mid + a_eps * opt.report.segment_velocities
            rate_value = opt.value
    else:
        vel = np.asarray(proposal_velocities, dtype=float)
        n = vel.size
        rate_value = float("nan")
    phi0 = float(np.asarray(phi.fn(0.0)))
    floor = floor_fraction * max(phi0, 1e-6)
    vel = np.maximum(vel, floor)
    dt = horizon / n
    seg_mu = vel * dt / eps                 # proposal mean count per segment
    log_prop_rate = np.log(vel / eps)
    comp_prop = float(vel.sum() * dt / eps)  # exact proposal compensator
    z0_T = float(z0.values[-1]) if z0 is not None else None
    refine = np.linspace(0.0, horizon, 257)

    rng = replica_rng(seed, 0, stream=4)
    h0 = float(np.asarray(kernel.fn(0.0)))
    contrib = np.zeros(replicas)
    weights_hit = np.zeros(replicas)
    hits = 0
    from .simulate import _history_sums

    for r in range(replicas):
        counts = rng.poisson(seg_mu)
        total = int(counts.sum())
        if total == 0:
            times = np.empty(0)
        else:
            parts = []
            for i in np.nonzero(counts)[0]:
                u = np.sort(rng.random(counts[i]))
                parts.append((i + u) * dt)
            times = np.concatenate(parts)
        terminal = eps * times.size
        if not _indicator(terminal, x, regime, a_eps, z0_T):
            continue
        # exact likelihood ratio on the jump skeleton
        if times.size:
            full, at_node = _history_sums(times, times, kernel)
            before = full - h0 * at_node
            lam = np.asarray(phi.fn(eps * before), dtype=float) / eps
            if np.any(lam <= 0.0):
                continue  # target law cannot produce this path: weight 0
            seg_idx = np.minimum((times / dt).astype(int), n - 1)
            log_num = float(np.sum(np.log(lam)))
            log_den = float(np.sum(log_prop_rate[seg_idx]))
        else:
            log_num = log_den = 0.0
        nodes = np.union1d(refine, times)
        comp_target = float(
            integrated_intensity(times, eps, kernel, phi, nodes)[-1]
        )
        logw = log_num - log_den - comp_target + comp_prop
        w = math.exp(logw)
        contrib[r] = w
        weights_hit[r] = w
        hits += 1

    p = float(contrib.mean())
    se = float(contrib.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else float("nan")
    if hits == 0:
        warnings.warn(
            "no proposal replica hit the target event; estimate is degenerate",
            DegenerateEstimateWarning,
        )
        lsv = float("-inf")
        rel_var = None
    else:
        lsv = _log_scale(regime, eps, a_eps, math.log(p)) if p > 0 else float("-inf")
        mean_w = contrib.mean()
        rel_var = float(contrib.var(ddof=1) / (mean_w * mean_w)) if mean_w > 0 else None
        if rel_var is not None and rel_var > 1e4:
            warnings.warn(
                f"importance weights have relative variance {rel_var:.3g}",
                UnstableISWarning,
            )
    return TailEstimate(
        regime=regime, x=x, eps=eps, a_eps=a_eps, p_hat=p, se=se,
        log_scale_value=lsv, method="importance", replicas=replicas, hits=hits,
        weight_rel_var=rel_var,
        details={"optimizer_value": rate_value, "floor": float(vel.min()),
                 "proposal_mean_count": float(seg_mu.sum())},
    )
