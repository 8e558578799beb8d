"""Galerkin integrator for the limiting fluctuation SPDE.

    d rho = A_n(t, rho) dt + sum_j B_j(t) dW_j

A(t, f)   = -div(f (K * mu_t)) - div(mu_t (K * f)) + (sigma^2/2) Lap f
A'(t) phi = (K * mu_t) . grad phi + h + (sigma^2/2) Lap phi,
            h(v) = integral of K(x - v) . grad phi(x) mu_t(x) dx
A_n       = j_n A j_n
B_j(t) u  = d_j(sigma u sqrt(mu_t))

All products are projected onto the state lattice on a padded grid, so the
discrete A and A' are exact adjoints for the bilinear pairing.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from fluctlab._exceptions import DomainError, InstabilityError, ShapeError
from fluctlab._types import Rho0Mode, SobolevIndices
from fluctlab.kernels import DriftModel, convolve_coeffs, multiplier
from fluctlab.meanfield import MeanFieldCurve
from fluctlab.spectral import (
    SpectralField,
    check_compatible,
    coeffs_to_grid,
    grid_to_coeffs,
    k_squared,
    lattice_convolution,
    lattice_shape,
    mollifier_symbol,
    mollify,
    product_grid_size,
    sobolev_inner,
    sobolev_norm,
    wavenumbers,
)

logger = logging.getLogger(__name__)

_MEAN_TOL = 1e-12


# =============================================================================
# Domain types
# =============================================================================


@dataclass(frozen=True, eq=False)
class GalerkinState:
    """Truncated SPDE state; the mean mode stays 0."""

    rho: SpectralField
    t: float
    n_mollify: int
    L_noise: int
    indices: SobolevIndices

    def __post_init__(self) -> None:
        if abs(self.rho.mean) > _MEAN_TOL:
            raise DomainError(f"fluctuation state must have c_0 = 0, got {self.rho.mean}")


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """sqrt(mu_t) coefficients per cached time, noise amplitude and cutoff."""

    times: tuple[float, ...]
    sqrt_mus: tuple[SpectralField, ...] = field(repr=False)
    sigma: float
    L_noise: int

    @classmethod
    def from_curve(cls, curve: MeanFieldCurve, L_noise: int) -> "NoiseModel":
        if L_noise < 0:
            raise DomainError(f"noise cutoff must be >= 0, got {L_noise}")
        return cls(curve.times, curve.sqrt_mus, curve.sigma, L_noise)

    def at(self, t: float, tol: float = 1e-9) -> SpectralField:
        for time, sq in zip(self.times, self.sqrt_mus):
            if abs(time - t) <= tol:
                return sq
        raise DomainError(f"noise model does not cover t={t}")


@dataclass(frozen=True)
class CoercivityFit:
    """Constants (C, delta) with <A_n f, f>_s <= C |f|_s^2 - delta |f|_{s+1}^2 on the samples."""

    C: float
    delta: float
    margins: tuple[float, ...] = field(repr=False, default=())

    @property
    def min_margin(self) -> float:
        return min(self.margins) if self.margins else 0.0

    def to_dict(self) -> dict[str, float]:
        return {"C": self.C, "delta": self.delta, "min_margin": self.min_margin}


# =============================================================================
# Operators
# =============================================================================


def _check_lattices(f: SpectralField, mu: SpectralField, operation: str) -> None:
    check_compatible(f, mu, operation)


def _first_order_coeffs(
    f: np.ndarray,
    mu: np.ndarray,
    kmax: int,
    model: DriftModel,
) -> np.ndarray:
    """-div(f (K*mu)) - div(mu (K*f)) on the lattice."""
    d = f.ndim
    b = convolve_coeffs(model, mu, kmax)
    kf = convolve_coeffs(model, f, kmax)
    out = np.zeros_like(f)
    if not (np.any(b) or np.any(kf)):
        return out
    m = product_grid_size(kmax, kmax, kmax)
    f_grid = coeffs_to_grid(f, m)
    mu_grid = coeffs_to_grid(mu, m)
    k = wavenumbers(d, kmax)
    for j in range(d):
        flux = f_grid * coeffs_to_grid(b[j], m) + mu_grid * coeffs_to_grid(kf[j], m)
        out -= 2j * np.pi * k[j] * grid_to_coeffs(flux, kmax)
    return out


def _diffusion_symbol(d: int, kmax: int, sigma: float) -> np.ndarray:
    """-(sigma^2/2) (2 pi |k|)^2."""
    return -2.0 * np.pi**2 * sigma**2 * k_squared(d, kmax)


def apply_Aprime(
    t: float,
    phi: SpectralField,
    mu: SpectralField,
    model: DriftModel,
    sigma: float,
) -> SpectralField:
    """A'(t) phi for the autonomous convolution drift (``t`` labels mu_t)."""
    _check_lattices(phi, mu, "apply_Aprime")
    d, kmax = phi.d, phi.kmax
    k = wavenumbers(d, kmax)
    grads = [2j * np.pi * k[j] * phi.coeffs for j in range(d)]
    out = _diffusion_symbol(d, kmax, sigma) * phi.coeffs
    b = convolve_coeffs(model, mu.coeffs, kmax)
    if np.any(b):
        m = product_grid_size(kmax, kmax, kmax)
        mu_grid = coeffs_to_grid(mu.coeffs, m)
        sym = multiplier(model, kmax)
        transport = np.zeros((m,) * d, dtype=np.complex128)
        for j in range(d):
            grad_grid = coeffs_to_grid(grads[j], m)
            transport += coeffs_to_grid(b[j], m) * grad_grid
            w = grid_to_coeffs(mu_grid * grad_grid, kmax)
            out = out + np.flip(sym[j]) * w
        out = out + grid_to_coeffs(transport, kmax)
    return phi.with_coeffs(out)


def apply_A(
    t: float,
    f: SpectralField,
    mu: SpectralField,
    model: DriftModel,
    sigma: float,
) -> SpectralField:
    """A(t, f); f must have zero mean."""
    _check_lattices(f, mu, "apply_A")
    if abs(f.mean) > _MEAN_TOL:
        raise DomainError(f"apply_A needs c_0(f) = 0, got {f.mean}")
    coeffs = _first_order_coeffs(f.coeffs, mu.coeffs, f.kmax, model)
    coeffs = coeffs + _diffusion_symbol(f.d, f.kmax, sigma) * f.coeffs
    return f.with_coeffs(coeffs)


def apply_A_n(
    t: float,
    f: SpectralField,
    n: int,
    mu: SpectralField,
    model: DriftModel,
    sigma: float,
) -> SpectralField:
    """j_n A(t, j_n f); level 0 is the unmollified operator."""
    if n == 0:
        return apply_A(t, f, mu, model, sigma)
    return mollify(apply_A(t, mollify(f, n), mu, model, sigma), n)


# =============================================================================
# Noise
# =============================================================================


def _hermitian_normals(rng: np.random.Generator, shape: tuple[int, ...], variance: float) -> np.ndarray:
    """Complex Gaussians with c_{-l} = conj(c_l) and E|c_l|^2 = variance (real at l = 0)."""
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(variance / 2.0)
    return (z + np.conj(np.flip(z))) / math.sqrt(2.0)


def draw_brownian_increments(
    rng: np.random.Generator,
    d: int,
    L: int,
    dt: float,
) -> np.ndarray:
    """Delta beta_{l,j} for |l| <= L, j = 1..d, shape (d, 2L+1, ...)."""
    shape = lattice_shape(d, L)
    return np.stack([_hermitian_normals(rng, shape, dt) for _ in range(d)])


def noise_increment(
    t: float,
    dt: float,
    noise: NoiseModel,
    rng: Optional[np.random.Generator],
    kmax: int,
    *,
    beta: Optional[np.ndarray] = None,
) -> SpectralField:
    """c_k = sigma sum_j 2 pi i k_j sum_{|l|<=L} sqrt(mu)^_{k-l} Delta beta_{l,j}."""
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    sq = noise.at(t)
    d = sq.d
    if beta is None:
        if rng is None:
            raise DomainError("noise_increment needs a random stream or explicit increments")
        beta = draw_brownian_increments(rng, d, noise.L_noise, dt)
    k = wavenumbers(d, kmax)
    out = np.zeros(lattice_shape(d, kmax), dtype=np.complex128)
    for j in range(d):
        out += 2j * np.pi * k[j] * lattice_convolution(sq.coeffs, beta[j], kmax)
    out *= noise.sigma
    out[(kmax,) * d] = 0.0
    return SpectralField(d, kmax, out)


# =============================================================================
# Initial fluctuation field
# =============================================================================


def sample_rho0(
    mode: Rho0Mode,
    mu0: SpectralField,
    sqrt_mu0: SpectralField,
    rng: np.random.Generator,
) -> SpectralField:
    """Draw rho_0 on the lattice of mu0.

    ``diagonal`` draws independent modes with E|c_k|^2 = 1 - |c_k(mu0)|^2.
    ``clt`` draws sqrt(mu0) W - mu0 <sqrt(mu0), W> for white noise W, which
    has the i.i.d. CLT covariance for any mu0.
    """
    mode = Rho0Mode(mode)
    d, kmax = mu0.d, mu0.kmax
    if mode is Rho0Mode.ZERO:
        return SpectralField.zeros(d, kmax)
    if mode is Rho0Mode.DIAGONAL:
        variance = np.clip(1.0 - np.abs(mu0.coeffs) ** 2, 0.0, None)
        coeffs = np.sqrt(variance) * _hermitian_normals(rng, lattice_shape(d, kmax), 1.0)
        coeffs[(kmax,) * d] = 0.0
        return SpectralField(d, kmax, coeffs)
    lw = kmax + sqrt_mu0.kmax
    white = _hermitian_normals(rng, lattice_shape(d, lw), 1.0)
    product = lattice_convolution(sqrt_mu0.coeffs, white, kmax)
    inner = complex(np.sum(white * np.flip(sqrt_mu0.resize(lw).coeffs)))
    coeffs = product - mu0.coeffs * inner
    coeffs[(kmax,) * d] = 0.0
    return SpectralField(d, kmax, coeffs)


# =============================================================================
# Time stepping
# =============================================================================


def _mu_for(state_kmax: int, curve: MeanFieldCurve, t: float) -> SpectralField:
    mu = curve.mu_at(t)
    if mu.kmax != state_kmax:
        raise ShapeError(f"curve kmax={mu.kmax} differs from state kmax={state_kmax}")
    return mu


def _check_finite(coeffs: np.ndarray, kmax: int, operation: str, t: float) -> None:
    bad = ~np.isfinite(coeffs)
    if bad.any():
        idx = np.argwhere(bad)[0]
        raise InstabilityError(
            tuple(int(i) - kmax for i in idx), module="spde", operation=operation, t=t
        )


def _deterministic_step(
    coeffs: np.ndarray,
    mu: SpectralField,
    n: int,
    model: DriftModel,
    sigma: float,
    dt: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Return (integrating factor, coeffs + dt * first-order part of A_n)."""
    d, kmax = mu.d, mu.kmax
    sym = mollifier_symbol(d, kmax, n)
    first = sym * _first_order_coeffs(sym * coeffs, mu.coeffs, kmax, model)
    factor = np.exp(_diffusion_symbol(d, kmax, sigma) * sym**2 * dt)
    return factor, coeffs + dt * first


def step_spde(
    state: GalerkinState,
    dt: float,
    curve: MeanFieldCurve,
    model: DriftModel,
    noise: Optional[NoiseModel],
    rng: Optional[np.random.Generator],
    *,
    beta: Optional[np.ndarray] = None,
) -> GalerkinState:
    """rho <- E_n (rho + dt T_n(rho) + Delta zeta); ``noise=None`` switches noise off."""
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    rho = state.rho
    mu = _mu_for(rho.kmax, curve, state.t)
    factor, coeffs = _deterministic_step(rho.coeffs, mu, state.n_mollify, model, curve.sigma, dt)
    if noise is not None:
        coeffs = coeffs + noise_increment(state.t, dt, noise, rng, rho.kmax, beta=beta).coeffs
    coeffs = factor * coeffs
    coeffs[(rho.kmax,) * rho.d] = 0.0
    _check_finite(coeffs, rho.kmax, "step_spde", state.t)
    return replace(state, rho=rho.with_coeffs(coeffs), t=state.t + dt)


@dataclass(frozen=True, eq=False)
class SpdeRun:
    """Final state plus the squared-norm history of one replica."""

    state: GalerkinState
    norms: tuple[float, ...] = field(repr=False)

    @property
    def sup_norm2(self) -> float:
        return max(self.norms)


def simulate_spde(
    rho0: SpectralField,
    curve: MeanFieldCurve,
    model: DriftModel,
    noise: Optional[NoiseModel],
    rng: Optional[np.random.Generator],
    *,
    n_mollify: int,
    indices: SobolevIndices,
    t_final: Optional[float] = None,
) -> SpdeRun:
    """Step through the curve times up to ``t_final`` (default: end of curve)."""
    L = noise.L_noise if noise is not None else 0
    state = GalerkinState(rho0, curve.times[0], n_mollify, L, indices)
    s = indices.s_fluct
    norms = [sobolev_norm(rho0, s) ** 2]
    end = curve.t_final if t_final is None else t_final
    for t0, t1 in zip(curve.times, curve.times[1:]):
        if t0 >= end - 1e-12:
            break
        state = step_spde(state, t1 - t0, curve, model, noise, rng)
        state = replace(state, t=t1)
        norms.append(sobolev_norm(state.rho, s) ** 2)
    logger.debug("spde replica finished at t=%.4g, sup norm^2 %.4g", state.t, max(norms))
    return SpdeRun(state, tuple(norms))


def linear_flow(
    h: SpectralField,
    s: float,
    t: float,
    n: int,
    curve: MeanFieldCurve,
    model: DriftModel,
) -> SpectralField:
    """Y_{s,t} h: noiseless integration of dy = A_n(r, y) dr on the curve grid."""
    if t < s:
        raise DomainError(f"linear_flow needs s <= t, got s={s}, t={t}")
    if abs(h.mean) > _MEAN_TOL:
        raise DomainError(f"linear_flow needs c_0(h) = 0, got {h.mean}")
    i_s, i_t = curve.index_of(s), curve.index_of(t)
    coeffs = h.coeffs
    for i in range(i_s, i_t):
        mu = curve.mus[i]
        if mu.kmax != h.kmax:
            raise ShapeError(f"curve kmax={mu.kmax} differs from field kmax={h.kmax}")
        dt = curve.times[i + 1] - curve.times[i]
        factor, coeffs = _deterministic_step(coeffs, mu, n, model, curve.sigma, dt)
        coeffs = factor * coeffs
    _check_finite(coeffs, h.kmax, "linear_flow", t)
    return h.with_coeffs(coeffs)


# =============================================================================
# Coercivity
# =============================================================================


def coercivity_samples(
    n: int,
    mu: SpectralField,
    model: DriftModel,
    sigma: float,
    indices: SobolevIndices,
    rng: np.random.Generator,
    count: int = 100,
) -> list[tuple[float, float, float]]:
    """(<A_n f, f>_s, |f|_s^2, |f|_{s+1}^2) for random unit fields f."""
    s = indices.s_fluct
    out = []
    for _ in range(count):
        f = SpectralField.random(mu.d, mu.kmax, rng)
        f = f / sobolev_norm(f, s)
        a = sobolev_inner(apply_A_n(0.0, f, n, mu, model, sigma), f, s).real
        out.append((a, sobolev_norm(f, s) ** 2, sobolev_norm(f, s + 1.0) ** 2))
    return out


def fit_coercivity(
    samples: Sequence[tuple[float, float, float]],
    *,
    delta: Optional[float] = None,
    sigma: Optional[float] = None,
) -> CoercivityFit:
    """Smallest C for the given delta (default pi^2 sigma^2) valid on every sample."""
    if delta is None:
        if sigma is None:
            raise DomainError("fit_coercivity needs delta or sigma")
        delta = math.pi**2 * sigma**2
    if delta <= 0:
        raise DomainError(f"delta must be positive, got {delta}")
    if not samples:
        raise DomainError("fit_coercivity needs at least one sample")
    C = max((a + delta * q) / p for a, p, q in samples)
    margins = tuple(C * p - delta * q - a for a, p, q in samples)
    logger.info("coercivity fit over %d samples: C=%.4g delta=%.4g", len(samples), C, delta)
    return CoercivityFit(C=C, delta=delta, margins=margins)
