"""Pseudo-spectral solver for the nonlinear Fokker-Planck equation.

    d mu/dt = (sigma^2/2) Lap mu - div((K * mu) mu)

Diffusion is applied exactly per mode by an integrating factor, transport is
explicit Euler with products on a zero-padded grid. The mean mode never
changes: every transport coefficient carries a factor k.
"""

import bisect
import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Mapping, Optional, Sequence

import numpy as np
from scipy import fft as sp_fft

from fluctlab._exceptions import DomainError, InstabilityError, PositivityError
from fluctlab._types import PositivityPolicy, SobolevIndices
from fluctlab.kernels import DriftModel, convolve_coeffs
from fluctlab.spectral import (
    SpectralField,
    coeffs_to_grid,
    grid_minimum,
    grid_to_coeffs,
    k_squared,
    laplacian,
    product_grid_size,
    sobolev_norm,
    to_grid,
    wavenumbers,
)

logger = logging.getLogger(__name__)

TOL_POS = 1e-8

# Coefficients of sqrt(mu) below this magnitude are round-off.
_SQRT_CHOP = 1e-15


@dataclass(frozen=True, eq=False)
class FPState:
    mu: SpectralField
    t: float
    sigma: float
    model: DriftModel


# =============================================================================
# Operators
# =============================================================================


def diffusion_factor(d: int, kmax: int, sigma: float, dt: float) -> np.ndarray:
    """exp(-(sigma^2/2) (2 pi |k|)^2 dt) per mode."""
    return np.exp(-0.5 * sigma**2 * 4.0 * np.pi**2 * k_squared(d, kmax) * dt)


def transport_coeffs(mu: np.ndarray, kmax: int, model: DriftModel) -> np.ndarray:
    """Coefficients of -div((K * mu) mu) on the lattice kmax."""
    d = mu.ndim
    b = convolve_coeffs(model, mu, kmax)
    out = np.zeros_like(mu)
    if not np.any(b):
        return out
    m = product_grid_size(kmax, kmax, kmax)
    mu_grid = coeffs_to_grid(mu, m)
    k = wavenumbers(d, kmax)
    for j in range(d):
        flux = grid_to_coeffs(coeffs_to_grid(b[j], m) * mu_grid, kmax)
        out -= 2j * np.pi * k[j] * flux
    return out


def _first_bad_mode(coeffs: np.ndarray, kmax: int) -> Optional[tuple[int, ...]]:
    bad = ~np.isfinite(coeffs)
    if not bad.any():
        return None
    idx = np.argwhere(bad)[0]
    return tuple(int(i) - kmax for i in idx)


def fp_step(state: FPState, dt: float) -> FPState:
    """One integrating-factor step of length dt."""
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    mu = state.mu
    factor = diffusion_factor(mu.d, mu.kmax, state.sigma, dt)
    with np.errstate(over="ignore", invalid="ignore"):
        coeffs = factor * (mu.coeffs + dt * transport_coeffs(mu.coeffs, mu.kmax, state.model))
    bad = _first_bad_mode(coeffs, mu.kmax)
    if bad is not None:
        raise InstabilityError(bad, module="meanfield", operation="fp_step", t=state.t)
    return replace(state, mu=mu.with_coeffs(coeffs), t=state.t + dt)


def fp_residual(mu: SpectralField, model: DriftModel, sigma: float, s: float = -2.0) -> float:
    """H^s norm of (sigma^2/2) Lap mu - div((K * mu) mu)."""
    residual = laplacian(mu) * (0.5 * sigma**2)
    residual = residual.with_coeffs(residual.coeffs + transport_coeffs(mu.coeffs, mu.kmax, model))
    return sobolev_norm(residual, s)


def sqrt_density(mu: SpectralField, kmax_out: int, tol_pos: float = TOL_POS) -> SpectralField:
    """Coefficients of sqrt(mu), clipped at tol_pos on a fine grid."""
    m = int(sp_fft.next_fast_len(2 * (2 * max(kmax_out, mu.kmax) + 1)))
    grid = to_grid(mu, m).real
    root = np.sqrt(np.clip(grid, tol_pos, None))
    coeffs = grid_to_coeffs(root.astype(np.complex128), kmax_out)
    coeffs[np.abs(coeffs) < _SQRT_CHOP] = 0.0
    return SpectralField(mu.d, kmax_out, coeffs)


# =============================================================================
# Initial densities
# =============================================================================


def uniform_density(d: int, kmax: int) -> SpectralField:
    return SpectralField.constant(d, kmax, 1.0)


def cosine_density(
    d: int,
    kmax: int,
    amplitude: float,
    *,
    axis: int = 0,
    mode: int = 1,
) -> SpectralField:
    """1 + amplitude * cos(2 pi mode x_axis)."""
    k = [0] * d
    k[axis] = mode
    modes = {tuple(k): amplitude / 2.0, tuple(-v for v in k): amplitude / 2.0}
    modes[(0,) * d] = 1.0
    return SpectralField.from_modes(d, kmax, modes)


def density_from_modes(
    d: int,
    kmax: int,
    modes: Mapping[Sequence[int], complex],
) -> SpectralField:
    """Probability density from inline modes; c_0 is forced to 1, -k partners filled."""
    entries = {tuple(k): v for k, v in modes.items() if any(k)}
    entries[(0,) * d] = 1.0
    return SpectralField.from_modes(d, kmax, entries, hermitian=True)


def density_entropy(mu: SpectralField, oversample: int = 4) -> float:
    """Grid quadrature of mu log mu; +inf if mu is negative somewhere."""
    m = int(sp_fft.next_fast_len(oversample * (2 * mu.kmax + 1)))
    grid = to_grid(mu, m).real
    if grid.min() < -TOL_POS:
        return math.inf
    g = np.clip(grid, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(g > 0, g * np.log(g), 0.0)
    return float(terms.mean())


# =============================================================================
# Curve
# =============================================================================


@dataclass(frozen=True, eq=False)
class MeanFieldCurve:
    """Immutable solution mu_t and sqrt(mu_t) at the output times."""

    times: tuple[float, ...]
    mus: tuple[SpectralField, ...]
    sqrt_mus: tuple[SpectralField, ...]
    sigma: float
    model: DriftModel
    regularity: tuple[float, ...] = ()
    continuity_modulus: float = 0.0
    minima: tuple[float, ...] = ()

    @property
    def d(self) -> int:
        return self.mus[0].d

    @property
    def kmax(self) -> int:
        return self.mus[0].kmax

    @property
    def t_final(self) -> float:
        return self.times[-1]

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        i = bisect.bisect_left(self.times, t - tol)
        if i < len(self.times) and abs(self.times[i] - t) <= tol:
            return i
        raise DomainError(f"mean-field curve does not cover t={t}")

    def mu_at(self, t: float) -> SpectralField:
        return self.mus[self.index_of(t)]

    def sqrt_mu_at(self, t: float) -> SpectralField:
        return self.sqrt_mus[self.index_of(t)]

    @property
    def states(self) -> list[FPState]:
        return [FPState(mu, t, self.sigma, self.model) for t, mu in zip(self.times, self.mus)]

    def index_dict(self) -> dict[str, Any]:
        return {
            "times": list(self.times),
            "sigma": self.sigma,
            "model": self.model.to_dict(),
            "kmax": self.kmax,
            "regularity": list(self.regularity),
            "continuity_modulus": self.continuity_modulus,
            "minima": list(self.minima),
        }


def time_grid(t_final: float, dt: float) -> list[float]:
    """k*dt for k = 0..round(t_final/dt)."""
    n_steps = int(round(t_final / dt))
    return [i * dt for i in range(n_steps + 1)]


def solve_fp(
    mu0: SpectralField,
    model: DriftModel,
    sigma: float,
    t_grid: Sequence[float],
    *,
    dt: Optional[float] = None,
    positivity: PositivityPolicy = PositivityPolicy.ERROR,
    tol_pos: float = TOL_POS,
    sqrt_kmax: Optional[int] = None,
    regularity_index: Optional[float] = None,
) -> MeanFieldCurve:
    """Integrate from t = 0 and store mu at every requested time.

    The list of states, one per entry of ``t_grid``, is ``curve.states``;
    ``curve.mus`` holds the bare densities. Sub-steps between output times never exceed ``dt`` (default: the
    smallest output spacing).
    """
    times = [float(t) for t in t_grid]
    if not times or times[0] != 0.0:
        raise DomainError("t_grid must start at 0")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise DomainError("t_grid must be strictly increasing")
    if dt is None:
        dt = min((b - a for a, b in zip(times, times[1:])), default=1.0)
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    positivity = PositivityPolicy(positivity)
    sqrt_kmax = 2 * mu0.kmax if sqrt_kmax is None else sqrt_kmax
    if regularity_index is None:
        regularity_index = SobolevIndices.for_dimension(mu0.d).lam_prime

    state = FPState(mu0, 0.0, sigma, model)
    mus = [mu0]
    for t_next in times[1:]:
        interval = t_next - state.t
        n_sub = max(1, math.ceil(interval / dt - 1e-9))
        h = interval / n_sub
        for _ in range(n_sub):
            state = fp_step(state, h)
        state = replace(state, t=t_next)
        mus.append(state.mu)

    minima = []
    for t, mu in zip(times, mus):
        gmin = grid_minimum(mu)
        minima.append(gmin)
        if gmin < -tol_pos:
            if positivity is PositivityPolicy.ERROR:
                raise PositivityError(t, gmin, tol=tol_pos)
            logger.warning("density minimum %.3e at t=%.4g below -%.1e", gmin, t, tol_pos)

    regularity = [sobolev_norm(mu, regularity_index) for mu in mus]
    modulus = 0.0
    for i in range(1, len(mus)):
        step = sobolev_norm(mus[i] - mus[i - 1], regularity_index) / (times[i] - times[i - 1])
        modulus = max(modulus, step)
    logger.info(
        "mean-field curve solved: %d outputs, t_final=%.4g, max H^%.2f norm %.4g",
        len(times), times[-1], regularity_index, max(regularity),
    )

    sqrt_mus = tuple(sqrt_density(mu, sqrt_kmax, tol_pos) for mu in mus)
    return MeanFieldCurve(
        times=tuple(times),
        mus=tuple(mus),
        sqrt_mus=sqrt_mus,
        sigma=sigma,
        model=model,
        regularity=tuple(regularity),
        continuity_modulus=modulus,
        minima=tuple(minima),
    )
