"""Model ingredients: excitation kernels, intensity functions, assumption audits.

A model is a pair (kernel h, intensity function phi).  The kernel weighs past
events, the intensity function maps the weighted history to a nonnegative
jump rate.  Both are immutable after construction and safe to share across
threads and replicas.

The audit checks the standing regularity assumptions the limit theory needs:

    A1  phi is alpha-Lipschitz; h is locally integrable and locally bounded
    A2  h is differentiable with locally integrable derivative
    A3  alpha * ||h||_{L1[0,T]} < 1  (sub-critical excitation)
    A4  phi is twice differentiable with bounded second derivative
    A5  inf_{x>=0} phi(x) > 0; h differentiable with bounded derivative on [0,T]

Flags come with numeric witnesses so reports can show the comparison that
produced each verdict.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as npoly
from numpy.polynomial import polyutils as pu
from scipy import integrate

from .errors import AssumptionViolationError, InvalidKernelError

_FD_TOL = 1e-6          # derivative vs central difference, relative
_LIPSCHITZ_SLACK = 1e-9  # probed ratio may exceed declared alpha by this factor
_DEFAULT_PROBES = 2048


@dataclass(frozen=True, eq=False)
class Kernel:
    """Excitation kernel h on [0, infinity).

    ``fn`` and ``deriv`` accept floats or numpy arrays.  ``breakpoints`` lists
    points where smoothness fails (quadrature splits there, derivative checks
    skip a neighborhood).  ``l1_closed_form`` / ``sup_closed_form``, when
    present, give exact antiderivative-based norms on [0, T]; tests use them
    as independent oracles for the numeric routes.  Kernels must be bounded
    on every finite window; constructors reject non-finite table values.
    """

    kind: str
    fn: Callable
    deriv: Callable | None = None
    params: dict = field(default_factory=dict)
    breakpoints: tuple = ()
    l1_closed_form: Callable[[float], float] | None = None
    sup_closed_form: Callable[[float], float] | None = None

    def __call__(self, t):
        return self.fn(t)


@dataclass(frozen=True, eq=False)
class IntensityFn:
    """Rate map phi with its declared regularity constants.

    ``lipschitz_alpha`` is the declared Lipschitz constant (must be > 0),
    ``inf_value`` the declared infimum of phi over x >= 0, and
    ``second_deriv_bound`` a bound on |phi''| when phi is twice
    differentiable (None when it is not).  ``deriv`` is optional; consumers
    fall back to central differences when it is missing.
    """

    kind: str
    fn: Callable
    lipschitz_alpha: float
    inf_value: float
    deriv: Callable | None = None
    second_deriv_bound: float | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lipschitz_alpha > 0:
            raise ValueError("lipschitz_alpha must be positive")

    def __call__(self, x):
        return self.fn(x)


@dataclass(frozen=True)
class ModelAudit:
    """Outcome of an assumption audit: flags, reasons for failures, witnesses."""

    flags: dict
    reasons: dict
    witnesses: dict

    def holds(self, *names: str) -> bool:
        return all(self.flags[n] for n in names)

    def as_dict(self) -> dict:
        return {
            "flags": dict(self.flags),
            "reasons": dict(self.reasons),
            "witnesses": dict(self.witnesses),
        }


# ---------------------------------------------------------------------------
# kernel constructors


def exponential_kernel(beta: float, scale: float = 1.0) -> Kernel:
    """h(t) = scale * exp(-beta * t), beta > 0.  scale may be negative."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    b, s = float(beta), float(scale)

    def fn(t):
        return s * np.exp(-b * np.asarray(t, dtype=float))

    def deriv(t):
        return -b * s * np.exp(-b * np.asarray(t, dtype=float))

    return Kernel(
        kind="exponential",
        fn=fn,
        deriv=deriv,
        params={"beta": b, "scale": s},
        l1_closed_form=lambda T: abs(s) * (1.0 - np.exp(-b * T)) / b,
        sup_closed_form=lambda T: abs(s),
    )


def constant_kernel(value: float) -> Kernel:
    """h(t) = value for all t (value 0 gives the unexcited model)."""
    v = float(value)

    def fn(t):
        return np.full_like(np.asarray(t, dtype=float), v)

    def deriv(t):
        return np.zeros_like(np.asarray(t, dtype=float))

    return Kernel(
        kind="constant",
        fn=fn,
        deriv=deriv,
        params={"value": v},
        l1_closed_form=lambda T: abs(v) * T,
        sup_closed_form=lambda T: abs(v),
    )


def zero_kernel() -> Kernel:
    k = constant_kernel(0.0)
    return Kernel(
        kind="zero",
        fn=k.fn,
        deriv=k.deriv,
        params={},
        l1_closed_form=lambda T: 0.0,
        sup_closed_form=lambda T: 0.0,
    )


def polynomial_kernel(coeffs, cutoff: float) -> Kernel:
    """h(t) = c0 + c1 t + ... for t <= cutoff, 0 beyond.

    Coefficients in increasing order.  The kernel is generally discontinuous
    at the cutoff; the point is recorded as a breakpoint so quadrature splits
    there and derivative checks skip it.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.ndim != 1 or c.size == 0 or not np.all(np.isfinite(c)):
        raise InvalidKernelError("coefficients must be a finite 1-d sequence")
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    cut = float(cutoff)
    dc = npoly.polyder(c)

    def fn(t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= cut, npoly.polyval(t, c), 0.0)

    def deriv(t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= cut, npoly.polyval(t, dc), 0.0)

    def l1_closed(T):
        return _poly_abs_integral(c, min(T, cut))

    def sup_closed(T):
        hi = min(T, cut)
        crit = [0.0, hi] + _real_roots_in(dc, hi)
        return max(abs(npoly.polyval(np.array(crit), c)).max(), 0.0)

    # sign changes of h are kinks of |h|; record them so adaptive quadrature
    # panels always split there (a kink hiding between a panel boundary and
    # the nearest quadrature node is otherwise invisible to the error
    # estimate)
    breaks = [cut] + _real_roots_in(c, cut)

    return Kernel(
        kind="polynomial",
        fn=fn,
        deriv=deriv,
        params={"coeffs": tuple(c.tolist()), "cutoff": cut},
        breakpoints=tuple(sorted(breaks)),
        l1_closed_form=l1_closed,
        sup_closed_form=sup_closed,
    )


def _real_roots_in(c: np.ndarray, upper: float) -> list:
    """Real roots of the polynomial strictly inside (0, upper).

    Root finding happens in the variable rescaled to [0, 1]; trailing
    coefficients whose contribution on the interval is negligible are
    trimmed first, because a near-zero leading coefficient makes the
    companion-matrix eigenvalues meaningless.
    """
    if c.size < 2 or not upper > 0:
        return []
    b = c * upper ** np.arange(c.size)
    scale = float(np.abs(b).max())
    if scale == 0.0:
        return []
    b = pu.trimcoef(b, tol=1e-14 * scale)
    if b.size < 2:
        return []
    return [
        float(r.real) * upper
        for r in npoly.polyroots(b)
        if abs(r.imag) < 1e-9 and 0.0 < r.real < 1.0
    ]


def _poly_abs_integral(c: np.ndarray, upper: float) -> float:
    """Exact integral of |polynomial| on [0, upper]: split at real roots, use
    the antiderivative with the sign of each segment."""
    if upper <= 0:
        return 0.0
    cuts = sorted(set([0.0, upper] + _real_roots_in(c, upper)))
    anti = npoly.polyint(c)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        seg = npoly.polyval(b, anti) - npoly.polyval(a, anti)
        total += abs(seg)
    return float(total)


def table_kernel(times, values) -> Kernel:
    """Piecewise-linear interpolation through (times, values) knots.

    Knots must start at t = 0, be strictly increasing, and carry finite
    values; beyond the last knot the kernel extends with the last value.
    No derivative is attached (the interpolant has corners), so audits
    requiring A2/A5 report a missing derivative rather than failing hard.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.shape != v.shape or t.size < 2:
        raise InvalidKernelError("table needs matching 1-d times and values, length >= 2")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
        raise InvalidKernelError("table knots must be finite")
    if t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise InvalidKernelError("knot times must start at 0 and increase strictly")

    def fn(x):
        return np.interp(np.asarray(x, dtype=float), t, v)

    def l1_closed(T):
        return _piecewise_linear_abs_integral(t, v, T)

    def sup_closed(T):
        mask = t <= T
        cand = np.abs(v[mask]).max(initial=0.0)
        return float(max(cand, abs(float(np.interp(T, t, v)))))

    return Kernel(
        kind="table",
        fn=fn,
        deriv=None,
        params={"times": tuple(t.tolist()), "values": tuple(v.tolist())},
        breakpoints=tuple(t.tolist()),
        l1_closed_form=l1_closed,
        sup_closed_form=sup_closed,
    )


def _piecewise_linear_abs_integral(t: np.ndarray, v: np.ndarray, T: float) -> float:
    """Exact integral of |piecewise-linear| on [0, T], splitting segments at
    sign changes; constant extrapolation past the last knot."""
    total = 0.0
    prev_t, prev_v = t[0], v[0]
    for i in range(1, len(t)):
        a, b = prev_t, min(float(t[i]), T)
        if b <= a:
            break
        va = prev_v
        vb = float(np.interp(b, t, v))
        total += _trapezoid_abs(a, b, va, vb)
        prev_t, prev_v = float(t[i]), float(v[i])
        if prev_t >= T:
            break
    if T > t[-1]:
        total += abs(v[-1]) * (T - t[-1])
    return float(total)


def _trapezoid_abs(a, b, va, vb):
    if va == 0.0 and vb == 0.0:
        return 0.0
    if va * vb >= 0.0:
        return abs(va + vb) * (b - a) / 2.0
    # one sign change inside the segment
    cross = a + (b - a) * va / (va - vb)
    return abs(va) * (cross - a) / 2.0 + abs(vb) * (b - cross) / 2.0


# ---------------------------------------------------------------------------
# intensity constructors


def linear_intensity(nu: float, slope: float = 1.0) -> IntensityFn:
    """phi(x) = nu + slope * x.  Lipschitz constant |slope|, infimum nu on x >= 0."""
    if not nu > 0:
        raise ValueError("nu must be positive")
    if slope < 0:
        raise ValueError("slope must be nonnegative")
    n, s = float(nu), float(slope)

    def fn(x):
        return n + s * np.asarray(x, dtype=float)

    def deriv(x):
        return np.full_like(np.asarray(x, dtype=float), s)

    return IntensityFn(
        kind="linear",
        fn=fn,
        deriv=deriv,
        lipschitz_alpha=max(s, 1e-12),
        inf_value=n,
        second_deriv_bound=0.0,
        params={"nu": n, "slope": s},
    )


def constant_intensity(level: float, alpha: float = 1e-12) -> IntensityFn:
    """phi identically level > 0.

    A constant map is alpha-Lipschitz for every alpha > 0; the default
    declares a negligible constant so sub-criticality (A3) holds for any
    integrable kernel.
    """
    if not level > 0:
        raise ValueError("level must be positive")
    c = float(level)

    def fn(x):
        return np.full_like(np.asarray(x, dtype=float), c)

    def deriv(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    return IntensityFn(
        kind="constant",
        fn=fn,
        deriv=deriv,
        lipschitz_alpha=float(alpha),
        inf_value=c,
        second_deriv_bound=0.0,
        params={"level": c},
    )


def tanh_intensity(base: float, scale: float = 1.0, rate: float = 1.0) -> IntensityFn:
    """Soft-saturating rate phi(x) = base + scale * tanh(rate * x).

    Requires base >= scale so phi stays nonnegative for all real inputs.
    Lipschitz constant scale * rate; |phi''| <= scale * rate^2 * 4 / (3 sqrt 3).
    The declared infimum follows the x >= 0 convention of A5 (tanh is
    increasing, so it sits at x = 0).
    """
    if not (base > 0 and scale > 0 and rate > 0):
        raise ValueError("base, scale, rate must be positive")
    if base < scale:
        raise ValueError("base must be >= scale so the rate stays nonnegative")
    b, s, r = float(base), float(scale), float(rate)

    def fn(x):
        return b + s * np.tanh(r * np.asarray(x, dtype=float))

    def deriv(x):
        c = np.cosh(r * np.asarray(x, dtype=float))
        return s * r / (c * c)

    return IntensityFn(
        kind="tanh",
        fn=fn,
        deriv=deriv,
        lipschitz_alpha=s * r,
        inf_value=b,
        second_deriv_bound=s * r * r * 4.0 / (3.0 * np.sqrt(3.0)),
        params={"base": b, "scale": s, "rate": r},
    )


def table_intensity(xs, ys) -> IntensityFn:
    """Piecewise-linear rate through (xs, ys); values clamp at the end knots.

    Declared Lipschitz constant is the steepest segment slope; the declared
    infimum is the smallest knot value (clamping makes both global).
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.ndim != 1 or x.shape != y.shape or x.size < 2:
        raise ValueError("table needs matching 1-d xs and ys, length >= 2")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("table knots must be finite")
    if np.any(np.diff(x) <= 0):
        raise ValueError("xs must increase strictly")
    if np.any(y < 0):
        raise ValueError("rate values must be nonnegative")
    slopes = np.diff(y) / np.diff(x)
    alpha = float(np.abs(slopes).max())

    def fn(q):
        return np.interp(np.asarray(q, dtype=float), x, y)

    return IntensityFn(
        kind="table",
        fn=fn,
        deriv=None,
        lipschitz_alpha=max(alpha, 1e-12),
        inf_value=float(y.min()),
        second_deriv_bound=None,
        params={"xs": tuple(x.tolist()), "ys": tuple(y.tolist())},
    )


# ---------------------------------------------------------------------------
# norms


def kernel_l1_norm(kernel: Kernel, horizon: float, rel_tol: float = 1e-10) -> float:
    """Integral of |h| over [0, horizon] by adaptive quadrature.

    Splits at declared breakpoints.  This is always a numeric evaluation;
    closed forms attached to built-in kernels serve as independent checks,
    not as a shortcut.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    probe = np.asarray(kernel.fn(np.linspace(0.0, horizon, 257)), dtype=float)
    if not np.all(np.isfinite(probe)):
        raise InvalidKernelError("kernel takes non-finite values on [0, horizon]")

    def absfn(t):
        return abs(float(np.asarray(kernel.fn(t))))

    points = [b for b in kernel.breakpoints if 0.0 < b < horizon] or None
    value, _ = integrate.quad(
        absfn, 0.0, horizon, points=points, epsabs=1e-13, epsrel=rel_tol, limit=500
    )
    if not np.isfinite(value):
        raise InvalidKernelError("quadrature of |h| did not converge to a finite value")
    return float(value)


@lru_cache(maxsize=256)
def kernel_sup_norm(kernel: Kernel, horizon: float, probes: int = 8192) -> float:
    """sup of |h| on [0, horizon]; exact when a closed form is attached,
    otherwise a probe-grid maximum inflated by 1e-6 relative."""
    if kernel.sup_closed_form is not None:
        return float(kernel.sup_closed_form(horizon))
    grid = np.linspace(0.0, horizon, probes)
    vals = np.abs(np.asarray(kernel.fn(grid), dtype=float))
    if not np.all(np.isfinite(vals)):
        raise InvalidKernelError("kernel takes non-finite values on [0, horizon]")
    return float(vals.max() * (1.0 + 1e-6))


# ---------------------------------------------------------------------------
# audits


def lipschitz_probe(phi: IntensityFn, xs) -> float:
    """Max difference quotient of phi over a probe set.

    For sorted points the pairwise maximum is attained on adjacent pairs, so
    the scan is linear.  Raises AssumptionViolationError (with the witness
    pair) if the declared constant is exceeded beyond slack.
    """
    x = np.unique(np.asarray(xs, dtype=float))
    if x.size < 2:
        raise ValueError("need at least two distinct probe points")
    vals = np.asarray(phi.fn(x), dtype=float)
    quot = np.abs(np.diff(vals)) / np.diff(x)
    i = int(np.argmax(quot))
    worst = float(quot[i])
    if worst > phi.lipschitz_alpha * (1.0 + _LIPSCHITZ_SLACK):
        raise AssumptionViolationError(
            f"difference quotient {worst:.6g} exceeds declared Lipschitz constant "
            f"{phi.lipschitz_alpha:.6g} between x={x[i]:.6g} and x={x[i + 1]:.6g}",
            witness=(float(x[i]), float(x[i + 1])),
        )
    return worst


def _deriv_consistency(kernel: Kernel, grid: np.ndarray) -> float:
    """Worst relative gap between declared derivative and central differences,
    skipping a neighborhood of each breakpoint."""
    step = 1e-6
    keep = np.ones(grid.shape, dtype=bool)
    for b in kernel.breakpoints:
        keep &= np.abs(grid - b) > 10 * step
    pts = grid[keep]
    pts = pts[pts - step >= 0.0]
    if pts.size == 0:
        return 0.0
    fd = (np.asarray(kernel.fn(pts + step)) - np.asarray(kernel.fn(pts - step))) / (2 * step)
    dv = np.asarray(kernel.deriv(pts), dtype=float)
    return float(np.max(np.abs(fd - dv) / (1.0 + np.abs(dv))))


def audit_assumptions(
    kernel: Kernel,
    phi: IntensityFn,
    horizon: float,
    probes: int = _DEFAULT_PROBES,
) -> ModelAudit:
    """Check A1-A5 on probe grids over [0, horizon] and a data-driven input range.

    Pure and deterministic: same inputs give the same audit.  A missing
    kernel derivative makes A2/A5 false with a reason; it is not an error.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    tgrid = np.linspace(0.0, horizon, probes)
    hvals = np.asarray(kernel.fn(tgrid), dtype=float)
    flags: dict = {}
    reasons: dict = {}

    h_finite = bool(np.all(np.isfinite(hvals)))
    h_sup = kernel_sup_norm(kernel, horizon) if h_finite else float("inf")
    h_l1 = kernel_l1_norm(kernel, horizon) if h_finite else float("inf")
    alpha = phi.lipschitz_alpha
    phi0 = float(np.asarray(phi.fn(0.0)))

    # relevant input range for phi: scale of (kernel weight) x (a-priori mass bound)
    mass_bound = phi0 * horizon * float(np.exp(min(alpha * h_sup * horizon, 50.0)))
    x_hi = max(1.0, h_sup * mass_bound)
    signed = bool(np.any(hvals < 0))
    x_lo = -x_hi if signed else 0.0
    xgrid = np.linspace(x_lo, x_hi, probes)
    phivals = np.asarray(phi.fn(xgrid), dtype=float)
    phi_min_pos = float(phivals[xgrid >= 0].min())

    # A1
    a1 = h_finite
    if not h_finite:
        reasons["A1"] = "kernel takes non-finite values on [0, horizon]"
    else:
        try:
            probed_alpha = lipschitz_probe(phi, xgrid)
        except AssumptionViolationError as exc:
            a1 = False
            reasons["A1"] = str(exc)
            probed_alpha = float("nan")
        if a1 and np.any(phivals < 0):
            a1 = False
            reasons["A1"] = "phi takes negative values on the probed input range"
    flags["A1"] = a1

    # A2
    if kernel.deriv is None:
        flags["A2"] = False
        reasons["A2"] = "kernel has no derivative attached"
        hp_sup = None
        fd_gap = None
    else:
        hpvals = np.asarray(kernel.deriv(tgrid), dtype=float)
        hp_finite = bool(np.all(np.isfinite(hpvals)))
        fd_gap = _deriv_consistency(kernel, tgrid) if hp_finite else float("inf")
        ok = hp_finite and fd_gap <= _FD_TOL
        flags["A2"] = ok
        if not ok:
            reasons["A2"] = (
                "kernel derivative not finite on [0, horizon]"
                if not hp_finite
                else f"derivative disagrees with central differences (gap {fd_gap:.3g})"
            )
        hp_sup = float(np.abs(hpvals).max()) if hp_finite else float("inf")

    # A3
    sub = alpha * h_l1
    flags["A3"] = bool(sub < 1.0)
    if not flags["A3"]:
        reasons["A3"] = f"alpha * ||h||_L1 = {sub:.6g} is not < 1"

    # A4
    ok4 = phi.second_deriv_bound is not None and np.isfinite(phi.second_deriv_bound)
    flags["A4"] = bool(ok4)
    if not ok4:
        reasons["A4"] = "no finite bound declared for the second derivative of phi"

    # A5
    a5 = True
    if not phi.inf_value > 0:
        a5 = False
        reasons["A5"] = f"declared infimum of phi is {phi.inf_value:.6g}, not > 0"
    elif phi_min_pos < phi.inf_value - 1e-9 * (1.0 + phi.inf_value):
        a5 = False
        reasons["A5"] = (
            f"probed phi minimum {phi_min_pos:.6g} undercuts declared infimum "
            f"{phi.inf_value:.6g}"
        )
    elif kernel.deriv is None:
        a5 = False
        reasons["A5"] = "kernel has no derivative attached"
    elif hp_sup is None or not np.isfinite(hp_sup):
        a5 = False
        reasons["A5"] = "kernel derivative unbounded on [0, horizon]"
    flags["A5"] = a5

    witnesses = {
        "alpha": alpha,
        "h_l1": h_l1,
        "h_sup": h_sup,
        "hprime_sup": hp_sup,
        "alpha_h_l1": sub,
        "phi_inf_declared": phi.inf_value,
        "phi_min_probed": phi_min_pos,
        "phi_at_zero": phi0,
        "fd_gap": fd_gap,
        "horizon": float(horizon),
        "probes": int(probes),
    }
    return ModelAudit(flags=flags, reasons=reasons, witnesses=witnesses)


# ---------------------------------------------------------------------------
# built-in named models (used by the CLI registry and the test suite)


def builtin_models() -> dict:
    """Named (kernel, phi) pairs with short descriptions."""
    return {
        "poisson-unit": (
            zero_kernel(),
            constant_intensity(1.0),
            "unit-rate process with no excitation",
        ),
        "linear-exp": (
            exponential_kernel(beta=2.0),
            linear_intensity(nu=1.0, slope=1.0),
            "linear rate nu=1, slope 1 with exponential kernel beta=2",
        ),
        "linear-exp-mild": (
            exponential_kernel(beta=2.0),
            linear_intensity(nu=1.0, slope=0.5),
            "linear rate nu=1, slope 0.5 with exponential kernel beta=2",
        ),
        "tanh-exp": (
            exponential_kernel(beta=2.0),
            tanh_intensity(base=1.0, scale=1.0, rate=1.0),
            "saturating rate 1 + tanh(x) with exponential kernel beta=2",
        ),
        "tanh-signed": (
            exponential_kernel(beta=2.0, scale=-0.5),
            tanh_intensity(base=1.0, scale=0.5, rate=1.0),
            "saturating rate with inhibitory (negative) exponential kernel",
        ),
    }
