"""Space-time grids, exponential weights, and weighted-space metrics.

The computational domain is the truncated line [-L, L] with cell-centered
midpoint quadrature, crossed with a uniform time grid on [0, T].  All norms
and metrics here are the discrete counterparts of integrals over the whole
line; each truncated quantity can report the weight mass it ignores beyond
the boundary via :func:`truncation_tail_bound`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import GridMismatchError, InvalidInputError


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell-centered grid on [-L, L] x [0, T].

    Cell centers sit at x_i = -L + (i + 1/2) dx.  nx must be odd so the
    middle cell is centered at x = 0 and the grid is symmetric.
    """

    L: float
    nx: int
    T: float
    nt: int

    def __post_init__(self):
        if not (math.isfinite(self.L) and self.L > 0):
            raise InvalidInputError(f"L must be finite and positive, got {self.L}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise InvalidInputError(f"T must be finite and positive, got {self.T}")
        if self.nx < 1 or self.nx % 2 == 0:
            raise InvalidInputError(f"nx must be a positive odd integer, got {self.nx}")
        if self.nt < 1:
            raise InvalidInputError(f"nt must be a positive integer, got {self.nt}")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.nx

    @property
    def dt(self) -> float:
        return self.T / self.nt

    def x_centers(self) -> np.ndarray:
        return -self.L + (np.arange(self.nx) + 0.5) * self.dx

    def t_nodes(self) -> np.ndarray:
        return np.arange(self.nt + 1) * self.dt

    def key(self) -> tuple:
        return (self.L, self.nx, self.T, self.nt)

    def require_same(self, other: "GridSpec", what: str = "operands"):
        if self.key() != other.key():
            raise GridMismatchError(
                f"{what} live on different grids: {self.key()} vs {other.key()}"
            )

    def refined(self, space_factor: int = 3, time_factor: int = 9) -> "GridSpec":
        """Nested refinement: odd space factor keeps nx odd and cells nested."""
        if space_factor % 2 == 0:
            raise InvalidInputError("space_factor must be odd to keep nx odd")
        return GridSpec(self.L, self.nx * space_factor, self.T, self.nt * time_factor)


def truncation_tail_bound(grid: GridSpec, lam: float, field_max: float = 1.0) -> float:
    """Weight mass ignored beyond |x| = L: exp(-lam L) scaled by sup |field|."""
    return math.exp(-lam * grid.L) * abs(field_max)


@dataclass(frozen=True)
class WeightedMetricParams:
    """Parameters of the exponential-weight metric family.

    lam is the decay rate of a single weighted norm; n_max truncates the
    weighted-sum metrics at lam = 1/n_max (series tail <= 2**-n_max).
    """

    lam: float = 1.0
    n_max: int = 8

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise InvalidInputError(f"lam must be finite and positive, got {self.lam}")
        if self.n_max < 1:
            raise InvalidInputError(f"n_max must be >= 1, got {self.n_max}")

    def series_tail(self) -> float:
        return 2.0 ** (-self.n_max)


@dataclass
class FieldPath:
    """A space-time field sampled at all time nodes: shape (nt + 1, nx)."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.nt + 1, self.grid.nx):
            raise InvalidInputError(
                f"field shape {v.shape} does not match grid "
                f"({self.grid.nt + 1}, {self.grid.nx})"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("field contains non-finite values")
        self.values = v

    @classmethod
    def zeros(cls, grid: GridSpec) -> "FieldPath":
        return cls(np.zeros((grid.nt + 1, grid.nx)), grid)

    def at(self, n: int) -> np.ndarray:
        return self.values[n]


def _as_field_array(f, grid: GridSpec) -> np.ndarray:
    a = np.asarray(f, dtype=np.float64)
    if a.shape != (grid.nx,):
        raise InvalidInputError(f"expected spatial field of shape ({grid.nx},), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("field contains non-finite values")
    return a


def l2_weight(lam: float, grid: GridSpec) -> np.ndarray:
    """Pointwise weight exp(-2 lam |x|) on the cell centers."""
    return np.exp(-2.0 * lam * np.abs(grid.x_centers()))


def sup_weight(lam: float, grid: GridSpec) -> np.ndarray:
    """Pointwise weight exp(-lam |x|) on the cell centers."""
    return np.exp(-lam * np.abs(grid.x_centers()))


def weighted_l2_norm(f, lam: float, grid: GridSpec) -> float:
    """Midpoint-rule norm (sum f^2 exp(-2 lam |x|) dx)^(1/2) on [-L, L]."""
    if not (math.isfinite(lam) and lam > 0):
        raise InvalidInputError(f"lam must be finite and positive, got {lam}")
    a = _as_field_array(f, grid)
    return math.sqrt(float(np.sum(a * a * l2_weight(lam, grid))) * grid.dx)


def weighted_sup_metric(f, g, lam: float, grid: GridSpec) -> float:
    """sup over grid of |f - g| exp(-lam |x|)."""
    if not (math.isfinite(lam) and lam > 0):
        raise InvalidInputError(f"lam must be finite and positive, got {lam}")
    a = _as_field_array(f, grid)
    b = _as_field_array(g, grid)
    return float(np.max(np.abs(a - b) * sup_weight(lam, grid)))


class TemMetric(NamedTuple):
    """A truncated weighted-sum metric value with its series tail bound."""

    value: float
    tail_bound: float


def tem_l2_metric(f, g, params: WeightedMetricParams, grid: GridSpec) -> TemMetric:
    """sum_{n=1..n_max} 2^-n min(1, ||f - g||_{lam=1/n}), plus tail 2^-n_max."""
    a = _as_field_array(f, grid)
    b = _as_field_array(g, grid)
    d = a - b
    total = 0.0
    for n in range(1, params.n_max + 1):
        total += 2.0 ** (-n) * min(1.0, weighted_l2_norm(d, 1.0 / n, grid))
    return TemMetric(total, params.series_tail())


def tem_sup_metric(f, g, params: WeightedMetricParams, grid: GridSpec) -> TemMetric:
    """sum_{n=1..n_max} 2^-n min(1, sup |f - g| e^{-|x|/n}), plus tail 2^-n_max."""
    a = _as_field_array(f, grid)
    b = _as_field_array(g, grid)
    total = 0.0
    for n in range(1, params.n_max + 1):
        total += 2.0 ** (-n) * min(1.0, weighted_sup_metric(a, b, 1.0 / n, grid))
    return TemMetric(total, params.series_tail())


def path_sup_distance(
    a: FieldPath, b: FieldPath, metric: Callable[[np.ndarray, np.ndarray], float]
) -> float:
    """sup over time nodes of metric(a(t), b(t)); metric maps spatial slices to floats."""
    a.grid.require_same(b.grid, "field paths")
    best = 0.0
    for n in range(a.grid.nt + 1):
        best = max(best, float(metric(a.values[n], b.values[n])))
    return best
