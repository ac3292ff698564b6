"""Space-time convolutions against the heat kernel.

Everything here is a "gap convolution": the value at time index n collects
contributions from earlier layers m < n through a kernel that depends only
on the gap k = n - m.  Three instances share the machinery:

* drift convolution      sum_m dt P_{t_n - t_m} f(t_m)
* stochastic convolution sum_m sum_j p_{t_n - t_m}(x_i, x_j) sigma ΔW(m, j)
* fractional pieces of the factorization route

Stochastic layers use left time endpoints (adapted integrands) and replace
the one-step kernel by its cell average.  The singular factor (t - s)^(a-1)
of the fractional integral is integrated exactly over each time cell.

Two evaluation paths are provided: "direct" sums with np.convolve per layer
pair, and "fft" evaluates the identical sums by FFT in space and time.  They
agree to near machine precision and are tested against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.fft as sfft

from .domain import FieldPath, GridSpec
from .errors import GridMismatchError, InvalidInputError
from .heatkernel import cell_averaged_stencil, point_stencil
from .noise import NoisePath

_BANK_CACHE: dict = {}
_BANK_CACHE_MAX = 6


def _stencil_bank(grid: GridSpec, family: str) -> np.ndarray:
    """Stencils for every gap k = 1..nt, shape (nt, 2 nx - 1).

    family "layer": cell-averaged kernel at every gap.  Matches the
    noise-cell geometry, and a point heat step applied to a cell-averaged
    stencil is again cell-averaged, so one-step time stepping unrolls into
    this convolution with no quadrature mismatch.
    family "smooth": point kernel at every gap (deterministic integrands).
    """
    key = (grid.key(), family)
    hit = _BANK_CACHE.get(key)
    if hit is not None:
        return hit
    if family not in ("layer", "smooth"):
        raise InvalidInputError(f"unknown stencil family {family!r}")
    bank = np.empty((grid.nt, 2 * grid.nx - 1))
    for k in range(1, grid.nt + 1):
        if family == "layer":
            bank[k - 1] = cell_averaged_stencil(grid, k * grid.dt)
        else:
            bank[k - 1] = point_stencil(grid, k * grid.dt)
    if len(_BANK_CACHE) >= _BANK_CACHE_MAX:
        _BANK_CACHE.pop(next(iter(_BANK_CACHE)))
    _BANK_CACHE[key] = bank
    return bank


_SPEC_CACHE: dict = {}


def _stencil_spectra(grid: GridSpec, family: str, pad: int) -> np.ndarray:
    key = (grid.key(), family, pad)
    hit = _SPEC_CACHE.get(key)
    if hit is not None:
        return hit
    spec = sfft.rfft(_stencil_bank(grid, family), pad, axis=1)
    if len(_SPEC_CACHE) >= _BANK_CACHE_MAX:
        _SPEC_CACHE.pop(next(iter(_SPEC_CACHE)))
    _SPEC_CACHE[key] = spec
    return spec


def _check_layers(y: np.ndarray, grid: GridSpec) -> np.ndarray:
    a = np.asarray(y, dtype=np.float64)
    if a.shape != (grid.nt, grid.nx):
        raise InvalidInputError(
            f"layer array shape {a.shape} does not match grid ({grid.nt}, {grid.nx})"
        )
    return a


def gap_convolution(
    y: np.ndarray,
    grid: GridSpec,
    weights: np.ndarray,
    family: str,
    method: str = "auto",
) -> np.ndarray:
    """out[n] = sum_{k=1..n} weights[k-1] * (stencil_k * y[n-k]), n = 0..nt.

    Returns shape (nt + 1, nx); row 0 is zero.  The spatial convolution is
    zero-extended and restricted back to the grid window.
    """
    a = _check_layers(y, grid)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (grid.nt,):
        raise InvalidInputError(f"weights must have shape ({grid.nt},), got {w.shape}")
    if method == "auto":
        method = "fft"
    if method == "direct":
        return _gap_convolution_direct(a, grid, w, family)
    if method == "fft":
        return _gap_convolution_fft(a, grid, w, family)
    raise InvalidInputError(f"unknown method {method!r}; use 'direct', 'fft' or 'auto'")


def _gap_convolution_direct(y, grid, w, family):
    bank = _stencil_bank(grid, family)
    nx, nt = grid.nx, grid.nt
    out = np.zeros((nt + 1, nx))
    for n in range(1, nt + 1):
        acc = np.zeros(nx)
        for k in range(1, n + 1):
            acc += w[k - 1] * np.convolve(y[n - k], bank[k - 1])[nx - 1 : 2 * nx - 1]
        out[n] = acc
    return out


def _gap_convolution_fft(y, grid, w, family):
    nx, nt = grid.nx, grid.nt
    pad = sfft.next_fast_len(3 * nx - 2)
    a_hat = sfft.rfft(y, pad, axis=1)
    b_hat = _stencil_spectra(grid, family, pad) * w[:, None]
    # linear convolution over the time index via a complex FFT along axis 0
    q = sfft.next_fast_len(2 * nt)
    prod = sfft.fft(a_hat, q, axis=0) * sfft.fft(b_hat, q, axis=0)
    c = sfft.ifft(prod, axis=0)[: nt]  # c[j] pairs with output row n = j + 1
    rows = sfft.irfft(c, pad, axis=1)[:, nx - 1 : 2 * nx - 1]
    out = np.zeros((nt + 1, nx))
    out[1:] = rows.real
    return out


def gap_convolution_at(
    y: np.ndarray,
    grid: GridSpec,
    weights: np.ndarray,
    family: str,
    n: int,
) -> np.ndarray:
    """Single output row of :func:`gap_convolution`, computed spectrally."""
    a = _check_layers(y, grid)
    w = np.asarray(weights, dtype=np.float64)
    if not 0 <= n <= grid.nt:
        raise InvalidInputError(f"time index {n} outside 0..{grid.nt}")
    if n == 0:
        return np.zeros(grid.nx)
    nx = grid.nx
    pad = sfft.next_fast_len(3 * nx - 2)
    a_hat = sfft.rfft(a[:n][::-1], pad, axis=1)  # row j holds layer n-1-j = n-k
    b_hat = _stencil_spectra(grid, family, pad)[:n] * w[:n, None]
    acc = np.einsum("kf,kf->f", b_hat, a_hat)
    return sfft.irfft(acc, pad)[nx - 1 : 2 * nx - 1]


def drift_convolution(f: FieldPath, method: str = "auto") -> FieldPath:
    """g(t_n) = sum_{m<n} dt P_{t_n - t_m} f(t_m): mild-form drift integral."""
    grid = f.grid
    w = np.full(grid.nt, grid.dt * grid.dx)
    out = gap_convolution(f.values[: grid.nt], grid, w, "smooth", method)
    return FieldPath(out, grid)


def _sigma_layers(sigma, grid: GridSpec) -> np.ndarray:
    if isinstance(sigma, FieldPath):
        sigma.grid.require_same(grid, "sigma field and noise")
        return sigma.values[: grid.nt]
    a = np.asarray(sigma, dtype=np.float64)
    if a.ndim == 0:
        return np.full((grid.nt, grid.nx), float(a))
    if a.shape == (grid.nt, grid.nx):
        return a
    if a.shape == (grid.nt + 1, grid.nx):
        return a[: grid.nt]
    raise InvalidInputError(
        f"sigma must be scalar, (nt, nx) or FieldPath; got shape {a.shape}"
    )


def stochastic_convolution_direct(sigma, noise: NoisePath, method: str = "auto") -> FieldPath:
    """Walsh integral of sigma against the noise through the heat kernel.

    g(t_n, x_i) = sum_{m<n} sum_j p_{t_n - t_m}(x_i, x_j) sigma(t_m, x_j) ΔW(m, j)
    with every layer kernel cell-averaged over the noise cells.
    """
    grid = noise.grid
    y = _sigma_layers(sigma, grid) * noise.increments
    w = np.ones(grid.nt)
    out = gap_convolution(y, grid, w, "layer", method)
    return FieldPath(out, grid)


def stochastic_convolution_at(sigma, noise: NoisePath, n: int) -> np.ndarray:
    """Single time slice of the stochastic convolution (cheaper than the path)."""
    grid = noise.grid
    y = _sigma_layers(sigma, grid) * noise.increments
    return gap_convolution_at(y, grid, np.ones(grid.nt), "layer", n)


@dataclass(frozen=True)
class FactorizationParams:
    """Parameters of the two-step fractional-integration route.

    alpha must sit in (0, 1/8), the window in which both fractional pieces
    of the identity are well defined for every admissible coefficient.
    store_intermediate keeps the inner fractional field in the result.
    """

    alpha: float = 0.1
    store_intermediate: bool = False

    def __post_init__(self):
        if not (0.0 < self.alpha < 0.125):
            raise InvalidInputError(
                f"alpha = {self.alpha} outside the admissible range (0, 1/8)"
            )

    @staticmethod
    def proof_alpha_range(p: float) -> tuple:
        """Moment-order window (1/p, 1/4 - 1/p); metadata for moment reports."""
        if p <= 0:
            raise InvalidInputError(f"p must be positive, got {p}")
        return (1.0 / p, 0.25 - 1.0 / p)


@dataclass
class FactorizedConvolution:
    """Result of the factorized route, with the optional inner field."""

    field: FieldPath
    intermediate: Optional[FieldPath] = None


def stochastic_convolution_factorized(
    sigma,
    noise: NoisePath,
    params: FactorizationParams = FactorizationParams(),
    method: str = "auto",
) -> FactorizedConvolution:
    """Stochastic convolution via the fractional-integration identity.

    Inner step: the kernel picks up an extra (s - r)^(-alpha) factor at left
    endpoints.  Outer step: a deterministic fractional integral in time with
    the (t - s)^(alpha - 1) singularity integrated exactly over each cell,
    scaled by sin(pi alpha) / pi.  The two steps compose to the plain
    stochastic convolution up to discretization error.
    """
    grid = noise.grid
    alpha = params.alpha
    y = _sigma_layers(sigma, grid) * noise.increments
    k = np.arange(1, grid.nt + 1, dtype=np.float64)

    inner_w = (k * grid.dt) ** (-alpha)
    inner = gap_convolution(y, grid, inner_w, "layer", method)

    # exact cell integrals of (t_n - s)^(alpha-1): dt^a (k^a - (k-1)^a) / a
    outer_w = grid.dt ** alpha * (k ** alpha - (k - 1.0) ** alpha) / alpha * grid.dx
    outer = gap_convolution(inner[: grid.nt], grid, outer_w, "smooth", method)
    outer *= math.sin(math.pi * alpha) / math.pi

    field = FieldPath(outer, grid)
    if params.store_intermediate:
        return FactorizedConvolution(field, FieldPath(inner, grid))
    return FactorizedConvolution(field)
