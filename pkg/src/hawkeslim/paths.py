"""Grid-sampled paths shared by the solver, fluctuation, and rate modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def uniform_grid(horizon: float, n: int) -> np.ndarray:
    """n+1 equally spaced times from 0 to horizon (n >= 2 steps)."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if n < 2:
        raise ValueError("need at least 2 grid steps")
    return np.linspace(0.0, float(horizon), int(n) + 1)


@dataclass(frozen=True, eq=False)
class GridPath:
    """A path sampled on a uniform grid starting at t = 0.

    ``derivative`` carries pointwise velocity values when the path is
    absolutely continuous.  ``atoms`` carries (times, sizes) of jumps when
    the path is a step function; integrators then use exact jump sums
    instead of grid increments.  ``nondecreasing`` is a tag checked at
    construction (tolerance 1e-12 relative to the value scale).
    """

    grid: np.ndarray
    values: np.ndarray
    derivative: np.ndarray | None = None
    atoms: tuple | None = None
    nondecreasing: bool = False

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 3:
            raise ValueError("grid and values must match, with at least 3 nodes")
        steps = np.diff(g)
        if g[0] != 0.0 or np.any(steps <= 0):
            raise ValueError("grid must start at 0 and increase")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("grid must be uniform")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        if self.derivative is not None:
            d = np.asarray(self.derivative, dtype=float)
            if d.shape != g.shape:
                raise ValueError("derivative must align with the grid")
            if not np.all(np.isfinite(d)):
                raise ValueError("derivative values must be finite")
            object.__setattr__(self, "derivative", d)
        if self.atoms is not None:
            times, sizes = self.atoms
            times = np.asarray(times, dtype=float)
            sizes = np.asarray(sizes, dtype=float)
            if times.shape != sizes.shape or times.ndim != 1:
                raise ValueError("atoms must be matching 1-d (times, sizes)")
            object.__setattr__(self, "atoms", (times, sizes))
        if self.nondecreasing:
            scale = max(1.0, float(np.abs(v).max()))
            if np.any(np.diff(v) < -1e-12 * scale):
                raise ValueError("path tagged nondecreasing but values decrease")

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def n_steps(self) -> int:
        return self.grid.size - 1

    def value_at(self, t: float) -> float:
        """Linear interpolation between grid nodes."""
        return float(np.interp(t, self.grid, self.values))
