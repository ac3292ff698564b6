"""Named coefficient, shift, and initial-condition presets.

Callables are small picklable classes so replica work can fan out to
process pools.  Declared Lipschitz and sup constants are sharp for every
preset: the validator sees quotients approaching them from below.
"""

from __future__ import annotations

import math

import numpy as np

from .domain import GridSpec
from .errors import InvalidInputError
from .noise import ShiftSpec
from .solver import CoefficientSpec


class _SaturatingDrift:
    """scale * u / (1 + u^2); Lipschitz constant = scale (slope at 0)."""

    def __init__(self, scale: float):
        self.scale = scale

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        return self.scale * u / (1.0 + u * u)


class _CosineDiffusion:
    """bound * cos(u * lip / bound); |sigma| <= bound, Lipschitz = lip."""

    def __init__(self, bound: float, lip: float):
        self.bound = bound
        self.lip = lip

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        return self.bound * np.cos(u * self.lip / self.bound)


class _Constant:
    def __init__(self, value: float):
        self.value = value

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        return np.full_like(u, self.value)


COEFFICIENT_PRESETS = ("saturating_cosine", "drift_only", "additive", "heat_flow")


def coefficient_preset(
    name: str,
    lip_b: float = 1.0,
    lip_sigma: float = 1.0,
    sup_sigma: float = 1.0,
) -> CoefficientSpec:
    """Build a coefficient pair by name with the given sharp constants."""
    if name == "saturating_cosine":
        return CoefficientSpec(
            b=_SaturatingDrift(lip_b),
            sigma=_CosineDiffusion(sup_sigma, lip_sigma),
            lip_b=lip_b,
            lip_sigma=lip_sigma,
            sup_sigma=sup_sigma,
            label=name,
        )
    if name == "drift_only":
        return CoefficientSpec(
            b=_SaturatingDrift(lip_b),
            sigma=_Constant(0.0),
            lip_b=lip_b,
            lip_sigma=0.0,
            sup_sigma=0.0,
            label=name,
        )
    if name == "additive":
        return CoefficientSpec(
            b=_Constant(0.0),
            sigma=_Constant(sup_sigma),
            lip_b=0.0,
            lip_sigma=0.0,
            sup_sigma=sup_sigma,
            label=name,
        )
    if name == "heat_flow":
        return CoefficientSpec(
            b=_Constant(0.0),
            sigma=_Constant(0.0),
            lip_b=0.0,
            lip_sigma=0.0,
            sup_sigma=0.0,
            label=name,
        )
    raise InvalidInputError(
        f"unknown coefficient preset {name!r}; choose one of {COEFFICIENT_PRESETS}"
    )


class _GaussianBumpShift:
    def __init__(self, amplitude, width, t0, t1):
        self.amplitude = amplitude
        self.width = width
        self.t0 = t0
        self.t1 = t1

    def __call__(self, t, x):
        x = np.asarray(x, dtype=np.float64)
        if not (self.t0 <= t <= self.t1):
            return np.zeros_like(x)
        return self.amplitude * np.exp(-(x * x) / (2.0 * self.width ** 2))


class _PlateauShift:
    def __init__(self, amplitude, half_width):
        self.amplitude = amplitude
        self.half_width = half_width

    def __call__(self, t, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(np.abs(x) <= self.half_width, self.amplitude, 0.0)


class _TanhFeedback:
    def __init__(self, amplitude):
        self.amplitude = amplitude

    def __call__(self, t, x, u):
        return self.amplitude * np.tanh(np.asarray(u, dtype=np.float64))


class _ZeroShift:
    def __call__(self, t, x):
        return np.zeros_like(np.asarray(x, dtype=np.float64))


SHIFT_PRESETS = ("gaussian_bump", "plateau", "tanh_feedback", "zero")


def shift_preset(
    name: str,
    amplitude: float = 1.0,
    width: float = 1.0,
    half_width: float = 1.0,
    t0: float = 0.0,
    t1: float = math.inf,
) -> ShiftSpec:
    if name == "gaussian_bump":
        return ShiftSpec(
            kind="deterministic",
            h=_GaussianBumpShift(amplitude, width, t0, t1),
            sup_bound=abs(amplitude),
            label=name,
        )
    if name == "plateau":
        return ShiftSpec(
            kind="deterministic",
            h=_PlateauShift(amplitude, half_width),
            sup_bound=abs(amplitude),
            label=name,
        )
    if name == "tanh_feedback":
        return ShiftSpec(
            kind="feedback",
            g=_TanhFeedback(amplitude),
            sup_bound=abs(amplitude),
            label=name,
        )
    if name == "zero":
        return ShiftSpec(kind="deterministic", h=_ZeroShift(), sup_bound=0.0, label=name)
    raise InvalidInputError(f"unknown shift preset {name!r}; choose one of {SHIFT_PRESETS}")


INITIAL_PRESETS = ("zero", "gaussian_bump", "indicator", "cosine")


def initial_preset(name: str, grid: GridSpec, amplitude: float = 1.0, width: float = 1.0) -> np.ndarray:
    x = grid.x_centers()
    if name == "zero":
        return np.zeros(grid.nx)
    if name == "gaussian_bump":
        return amplitude * np.exp(-(x * x) / (2.0 * width ** 2))
    if name == "indicator":
        return np.where(np.abs(x) <= width, amplitude, 0.0)
    if name == "cosine":
        return amplitude * np.cos(x / max(width, 1e-12))
    raise InvalidInputError(f"unknown initial preset {name!r}; choose one of {INITIAL_PRESETS}")


def scaled_bump_pairs(grid: GridSpec, scales, width: float = 1.0):
    """Initial-condition pairs (f, f + c * bump) for the given scales."""
    base = initial_preset("cosine", grid, amplitude=0.5, width=2.0)
    bump = np.exp(-(grid.x_centers() ** 2) / (2.0 * width ** 2))
    return [(base, base + float(c) * bump) for c in scales]
