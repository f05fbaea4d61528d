"""Exact simulation of the scaled self-exciting process by thinning.

The scaled process jumps with rate (1/eps) * phi(eps * sum of h(t - tau_j))
over past jump times tau_j.  Candidates arrive from a homogeneous stream at
a dominating rate refreshed after every accepted event:

    B = (1/eps) * phi(0) + alpha * sup|h| * (events so far)

which dominates the true rate because phi is alpha-Lipschitz.  Each
candidate is accepted with probability rate/B.  Acceptance above 1 (up to
float slack) indicates a broken envelope and raises an internal error.

Replica streams are keyed (seed, replica, stream) with stream 0 for the
scaled process and stream 1 for the mean-field system, so the two arms of a
comparison experiment with a shared base seed remain independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ExplosionGuardError, InternalLogicError, ModelViolationError
from .model import IntensityFn, Kernel, kernel_sup_norm
from .paths import GridPath
from .rng import DrawBuffer, replica_rng

_ACCEPT_SLACK = 1e-9


@dataclass(frozen=True)
class SimConfig:
    """Replica-independent simulation parameters."""

    epsilon: float
    horizon: float
    seed: int
    max_events: int = 10_000_000

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.max_events < 1:
            raise ValueError("max_events must be at least 1")


@dataclass(frozen=True, eq=False)
class EventPath:
    """One realized path: sorted jump times plus provenance."""

    times: np.ndarray
    epsilon: float
    horizon: float
    replica: int
    seed: int
    candidates: int

    @property
    def count(self) -> int:
        return self.times.size

    @property
    def terminal(self) -> float:
        """Scaled terminal value eps * N_T."""
        return self.epsilon * self.times.size


@dataclass(frozen=True, eq=False)
class MultiEventPath:
    """Mean-field system realization: one superposed stream plus node labels."""

    all_times: np.ndarray
    labels: np.ndarray
    n_nodes: int
    horizon: float
    replica: int
    seed: int
    candidates: int

    def node_times(self, i: int) -> np.ndarray:
        return self.all_times[self.labels == i]

    @property
    def mean_terminal(self) -> float:
        """Terminal value of the average process across nodes.

        Computed as (1/N) * count, not count / N: the two roundings differ
        for some counts, and the product form lands on the same float
        lattice as the scaled process at eps = 1/N, keeping equal-in-law
        samples bitwise comparable.
        """
        return (1.0 / self.n_nodes) * self.all_times.size

    def mean_step_path(self, grid: np.ndarray) -> GridPath:
        """Average counting process across nodes, sampled on a grid."""
        return _step_path_from_times(self.all_times, 1.0 / self.n_nodes, grid)


def _scalar_phi(phi: IntensityFn):
    """Scalar fast path for the inner loop; built-ins avoid ufunc dispatch."""
    kind, p = phi.kind, phi.params
    if kind == "linear":
        nu, s = p["nu"], p["slope"]
        return lambda x: nu + s * x
    if kind == "constant":
        c = p["level"]
        return lambda x: c
    if kind == "tanh":
        b, s, r = p["base"], p["scale"], p["rate"]
        return lambda x: b + s * math.tanh(r * x)
    if kind == "table":
        xs = np.asarray(p["xs"])
        ys = np.asarray(p["ys"])
        return lambda x: float(np.interp(x, xs, ys))
    fn = phi.fn
    return lambda x: float(np.asarray(fn(x)))


def _thin(kernel: Kernel, phi: IntensityFn, eps: float, horizon: float,
          max_events: int, buf: DrawBuffer) -> tuple[list, int]:
    """Core thinning loop.  Returns (jump times, candidate count).

    Exponential and constant kernels update the excitation sum in O(1);
    other kernels re-sum over past events per candidate (O(events), meant
    for desk-scale runs).
    """
    phi_s = _scalar_phi(phi)
    phi0 = phi_s(0.0)
    if phi0 < 0.0:
        raise ModelViolationError("phi(0) is negative")
    alpha = phi.lipschitz_alpha
    h_sup = kernel_sup_norm(kernel, horizon)
    inv_eps = 1.0 / eps
    base_rate = phi0 * inv_eps
    kind = kernel.kind
    exp_decay = kind == "exponential"
    if exp_decay:
        beta = kernel.params["beta"]
        jump_size = kernel.params["scale"]
    elif kind in ("constant", "zero"):
        jump_size = kernel.params.get("value", 0.0)
    else:
        kfn = kernel.fn

    times: list = []
    append = times.append
    t = 0.0
    s_sum = 0.0  # weighted history sum at the current candidate time
    n = 0
    cap = base_rate
    candidates = 0
    mexp = math.exp
    while True:
        dt = buf.exponential() / cap
        t += dt
        if t > horizon:
            break
        candidates += 1
        if exp_decay:
            s_sum *= mexp(-beta * dt)
        elif kind in ("constant", "zero"):
            s_sum = n * jump_size
        else:
            if n:
                arr = np.asarray(times)
                s_sum = float(np.sum(np.asarray(kfn(t - arr))))
            else:
                s_sum = 0.0
        lam = phi_s(eps * s_sum) * inv_eps
        if lam < 0.0:
            raise ModelViolationError("phi produced a negative rate during simulation")
        if lam > cap * (1.0 + _ACCEPT_SLACK):
            raise InternalLogicError(
                f"rate {lam:g} exceeds thinning envelope {cap:g}; envelope is invalid"
            )
        if buf.uniform() * cap <= lam:
            append(t)
            n += 1
            if n > max_events:
                raise ExplosionGuardError(
                    f"event count exceeded guard of {max_events} before t={horizon:g}"
                )
            if exp_decay:
                s_sum += jump_size
            cap = base_rate + alpha * h_sup * n
    return times, candidates


def _draw_block(phi0: float, eps: float, horizon: float) -> int:
    expect = phi0 * horizon / eps
    return int(min(8192, max(64, 2.5 * expect)))


def simulate_scaled_hawkes(
    kernel: Kernel, phi: IntensityFn, cfg: SimConfig, replica: int = 0
) -> EventPath:
    """Simulate one replica of the scaled process on [0, cfg.horizon].

    Deterministic: the same (cfg.seed, replica) reproduces bit-identical
    jump times.
    """
    rng = replica_rng(cfg.seed, replica, stream=0)
    buf = DrawBuffer(rng, block=_draw_block(float(np.asarray(phi.fn(0.0))), cfg.epsilon, cfg.horizon))
    times, candidates = _thin(kernel, phi, cfg.epsilon, cfg.horizon, cfg.max_events, buf)
    return EventPath(
        times=np.asarray(times, dtype=float),
        epsilon=cfg.epsilon,
        horizon=cfg.horizon,
        replica=replica,
        seed=cfg.seed,
        candidates=candidates,
    )


def simulate_mean_field(
    kernel: Kernel, phi: IntensityFn, n_nodes: int, cfg: SimConfig, replica: int = 0
) -> MultiEventPath:
    """Simulate the exchangeable N-node system sharing a common rate.

    Every node jumps at phi(average excitation input), so the superposition
    of all nodes is exactly the scaled process with eps = 1/N; events are
    assigned to nodes uniformly at random.  ``cfg.epsilon`` is ignored in
    favor of 1/n_nodes.
    """
    if n_nodes < 1:
        raise ValueError("need at least one node")
    eps = 1.0 / n_nodes
    rng = replica_rng(cfg.seed, replica, stream=1)
    buf = DrawBuffer(rng, block=_draw_block(float(np.asarray(phi.fn(0.0))), eps, cfg.horizon))
    times, candidates = _thin(kernel, phi, eps, cfg.horizon, cfg.max_events, buf)
    arr = np.asarray(times, dtype=float)
    labels = rng.integers(0, n_nodes, size=arr.size)
    return MultiEventPath(
        all_times=arr,
        labels=labels,
        n_nodes=n_nodes,
        horizon=cfg.horizon,
        replica=replica,
        seed=cfg.seed,
        candidates=candidates,
    )


def _step_path_from_times(times: np.ndarray, eps: float, grid: np.ndarray) -> GridPath:
    counts = np.searchsorted(times, grid, side="right")
    return GridPath(
        grid=np.asarray(grid, dtype=float),
        values=eps * counts,
        atoms=(times, np.full(times.shape, eps)),
        nondecreasing=True,
    )


def step_path(path: EventPath, grid: np.ndarray) -> GridPath:
    """Scaled counting path eps * N_t sampled on a grid (right-continuous)."""
    return _step_path_from_times(path.times, path.epsilon, grid)


def _history_sums(times: np.ndarray, nodes: np.ndarray, kernel: Kernel) -> tuple[np.ndarray, np.ndarray]:
    """For each node time: sum of h(node - tau) over tau <= node, and the
    number of events exactly at the node (to strip h(0) for left limits)."""
    m = nodes.size
    full = np.zeros(m)
    at_node = np.zeros(m)
    if times.size == 0:
        return full, at_node
    block = max(1, 4_000_000 // times.size)
    for lo in range(0, m, block):
        hi = min(lo + block, m)
        lag = nodes[lo:hi, None] - times[None, :]
        mask = lag >= 0.0
        vals = np.where(mask, np.asarray(kernel.fn(np.where(mask, lag, 0.0))), 0.0)
        full[lo:hi] = vals.sum(axis=1)
        at_node[lo:hi] = (lag == 0.0).sum(axis=1)
    return full, at_node


def integrated_intensity(
    times: np.ndarray,
    eps: float,
    kernel: Kernel,
    phi: IntensityFn,
    nodes: np.ndarray,
) -> np.ndarray:
    """Cumulative integral of the realized rate at each node time.

    ``nodes`` must be sorted, start at 0, and contain every jump time, so
    the rate is smooth inside each segment; the integral uses the
    trapezoid rule per segment with one-sided limits at the ends.
    """
    h0 = float(np.asarray(kernel.fn(0.0)))
    full, at_node = _history_sums(times, nodes, kernel)
    inv_eps = 1.0 / eps
    g_after = np.asarray(phi.fn(eps * full), dtype=float) * inv_eps
    g_before = np.asarray(phi.fn(eps * (full - h0 * at_node)), dtype=float) * inv_eps
    widths = np.diff(nodes)
    seg = 0.5 * widths * (g_after[:-1] + g_before[1:])
    out = np.zeros(nodes.size)
    np.cumsum(seg, out=out[1:])
    return out


def martingale_residual(
    path: EventPath, kernel: Kernel, phi: IntensityFn, grid: np.ndarray
) -> GridPath:
    """Scaled count minus integrated rate, sampled on the grid.

    The compensated process is a martingale, so replica averages of the
    residual should sit at zero within Monte Carlo error; use it as a
    simulator diagnostic.  Quadrature nodes are the grid refined by the
    jump times.
    """
    grid = np.asarray(grid, dtype=float)
    nodes = np.union1d(grid, path.times)
    if nodes[0] != 0.0:
        nodes = np.concatenate(([0.0], nodes))
    comp = path.epsilon * integrated_intensity(path.times, path.epsilon, kernel, phi, nodes)
    idx = np.searchsorted(nodes, grid)
    counts = np.searchsorted(path.times, grid, side="right")
    values = path.epsilon * counts - comp[idx]
    return GridPath(grid=grid, values=values)


def replica_statistics(terminals: np.ndarray) -> dict:
    """Mean/variance summary of per-replica terminal values.

    Reduction is a single pass over replica-ordered values, so results do
    not depend on how replicas were scheduled across workers (identical
    up to nothing: the order is fixed by replica index).
    """
    x = np.asarray(terminals, dtype=float)
    n = x.size
    mean = float(x.mean()) if n else float("nan")
    var = float(x.var(ddof=1)) if n > 1 else float("nan")
    return {
        "replicas": int(n),
        "mean": mean,
        "var": var,
        "se": float(math.sqrt(var / n)) if n > 1 else float("nan"),
        "min": float(x.min()) if n else float("nan"),
        "max": float(x.max()) if n else float("nan"),
    }
