"""Space-time white noise on the grid, Girsanov shifts, and entropy.

Noise increments are the Brownian-sheet masses of the space-time cells,
independent N(0, dt * dx) variables.  Sampling is counter-based: each
(seed, replica) pair keys its own Philox stream and the whole array is
generated in one fixed-order draw, so results do not depend on how many
workers run or in what order replicas are scheduled.

A shift is the drift h removed from the noise by a change of measure.  Under
the shifted measure the driving array stays white; the cost of the change is
the relative entropy (1/2) int int h^2 dx dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .domain import FieldPath, GridSpec
from .errors import GridMismatchError, InvalidInputError


@dataclass(frozen=True)
class NoisePath:
    """White-noise cell increments, shape (nt, nx), entry (n, i) ~ N(0, dt dx)."""

    increments: np.ndarray
    grid: GridSpec
    seed: int
    replica: int = 0

    def __post_init__(self):
        w = np.asarray(self.increments, dtype=np.float64)
        if w.shape != (self.grid.nt, self.grid.nx):
            raise InvalidInputError(
                f"increments shape {w.shape} does not match grid ({self.grid.nt}, {self.grid.nx})"
            )
        if not np.all(np.isfinite(w)):
            raise InvalidInputError("noise increments contain non-finite values")
        object.__setattr__(self, "increments", w)


def _philox(seed: int, stream: int) -> np.random.Generator:
    if not (0 <= seed < 2 ** 64) or not (0 <= stream < 2 ** 64):
        raise InvalidInputError("seed and stream must fit in uint64")
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_noise_path(grid: GridSpec, seed: int, replica: int = 0) -> NoisePath:
    """Draw the full increment array for one replica; bit-reproducible."""
    rng = _philox(seed, replica)
    w = rng.standard_normal((grid.nt, grid.nx)) * math.sqrt(grid.dt * grid.dx)
    return NoisePath(w, grid, seed=seed, replica=replica)


@dataclass(frozen=True)
class ShiftSpec:
    """A Girsanov drift: deterministic h(t, x) or state feedback g(t, x, u).

    Callables are vectorized over the spatial argument.  sup_bound is the
    declared uniform bound on |h|; it is advisory metadata used by reports.
    """

    kind: str
    h: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    g: Optional[Callable[[float, np.ndarray, np.ndarray], np.ndarray]] = None
    sup_bound: float = math.inf
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("deterministic", "feedback"):
            raise InvalidInputError(f"shift kind must be deterministic or feedback, got {self.kind!r}")
        if self.kind == "deterministic" and self.h is None:
            raise InvalidInputError("deterministic shift requires h(t, x)")
        if self.kind == "feedback" and self.g is None:
            raise InvalidInputError("feedback shift requires g(t, x, u)")

    def values_at(self, t: float, x: np.ndarray, u: Optional[np.ndarray] = None) -> np.ndarray:
        if self.kind == "deterministic":
            out = np.asarray(self.h(t, x), dtype=np.float64)
        else:
            if u is None:
                raise InvalidInputError("feedback shift needs the current state u")
            out = np.asarray(self.g(t, x, u), dtype=np.float64)
        out = np.broadcast_to(out, x.shape).astype(np.float64, copy=False)
        if not np.all(np.isfinite(out)):
            raise InvalidInputError("shift produced non-finite values")
        return out


def shift_field(shift: ShiftSpec, grid: GridSpec, u_path: Optional[FieldPath] = None) -> np.ndarray:
    """Shift evaluated on the left time endpoints: array (nt, nx).

    Feedback shifts read the state at the same endpoints, so a realized path
    is required for them.
    """
    x = grid.x_centers()
    t = grid.t_nodes()
    out = np.empty((grid.nt, grid.nx))
    for n in range(grid.nt):
        u = None
        if shift.kind == "feedback":
            if u_path is None:
                raise InvalidInputError("feedback shift requires a realized state path")
            u_path.grid.require_same(grid, "state path and shift grid")
            u = u_path.values[n]
        out[n] = shift.values_at(t[n], x, u)
    return out


def scale_shift(shift: ShiftSpec, c: float) -> ShiftSpec:
    """Shift with the drift multiplied by c; entropy scales by c^2."""
    if shift.kind == "deterministic":
        return ShiftSpec(
            kind="deterministic",
            h=_Scaled(shift.h, c),
            sup_bound=abs(c) * shift.sup_bound,
            label=f"{shift.label}*{c:g}" if shift.label else f"scaled*{c:g}",
        )
    return ShiftSpec(
        kind="feedback",
        g=_ScaledFeedback(shift.g, c),
        sup_bound=abs(c) * shift.sup_bound,
        label=f"{shift.label}*{c:g}" if shift.label else f"scaled*{c:g}",
    )


class _Scaled:
    """Picklable c * h(t, x)."""

    def __init__(self, fn, c):
        self.fn = fn
        self.c = c

    def __call__(self, t, x):
        return self.c * np.asarray(self.fn(t, x), dtype=np.float64)


class _ScaledFeedback:
    def __init__(self, fn, c):
        self.fn = fn
        self.c = c

    def __call__(self, t, x, u):
        return self.c * np.asarray(self.fn(t, x, u), dtype=np.float64)


def entropy_of_shift(
    shift: ShiftSpec,
    grid: GridSpec,
    u_paths: Optional[Sequence[FieldPath]] = None,
) -> float:
    """Relative entropy of the shifted measure: (1/2) int int h^2 dx dt.

    Deterministic shifts integrate exactly on the grid.  Feedback shifts
    average the realized cost over the supplied state paths.
    """
    if shift.kind == "deterministic":
        h = shift_field(shift, grid)
        return 0.5 * float(np.sum(h * h)) * grid.dt * grid.dx
    if not u_paths:
        raise InvalidInputError("feedback entropy needs realized state paths")
    costs = []
    for up in u_paths:
        h = shift_field(shift, grid, up)
        costs.append(0.5 * float(np.sum(h * h)) * grid.dt * grid.dx)
    return float(np.mean(costs))


def girsanov_log_density(
    shift: ShiftSpec,
    noise: NoisePath,
    u_path: Optional[FieldPath] = None,
) -> float:
    """log of the exponential martingale: sum h dW - (1/2) sum h^2 dt dx.

    Diagnostic only; simulation under the shifted measure draws the shifted
    noise directly rather than importance-weighting paths.
    """
    g = noise.grid
    h = shift_field(shift, g, u_path)
    stoch = float(np.sum(h * noise.increments))
    quad = 0.5 * float(np.sum(h * h)) * g.dt * g.dx
    return stoch - quad


def coarsen_noise(noise: NoisePath, coarse: GridSpec) -> NoisePath:
    """Sum fine increments over nested coarse cells: same Brownian sheet.

    Requires the fine grid to be an exact (space, time) multiple of the
    coarse one with identical L and T.
    """
    fine = noise.grid
    if not (
        math.isclose(fine.L, coarse.L)
        and math.isclose(fine.T, coarse.T)
        and fine.nx % coarse.nx == 0
        and fine.nt % coarse.nt == 0
    ):
        raise GridMismatchError(
            f"fine grid {fine.key()} does not nest in coarse grid {coarse.key()}"
        )
    rx = fine.nx // coarse.nx
    rt = fine.nt // coarse.nt
    w = noise.increments.reshape(coarse.nt, rt, coarse.nx, rx).sum(axis=(1, 3))
    return NoisePath(w, coarse, seed=noise.seed, replica=noise.replica)
