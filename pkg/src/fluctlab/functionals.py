"""Cylindrical test functionals and generator evaluations.

A cylindrical functional is Phi(f) = g(<f, phi_1>_s, ..., <f, phi_m>_s) with
a smooth outer map g on R^m. Inner products use the H^s Riesz identification,
so the x-space representative of phi_a is Phi_a with c_k(Phi_a) =
<k>^{2s} c_k(phi_a); then <f, phi_a>_s = integral of Phi_a df.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import fft as sp_fft

from fluctlab._exceptions import ConsistencyError, DomainError, ShapeError
from fluctlab._types import OuterMap, SobolevIndices
from fluctlab.kernels import DriftModel, convolve, drift_at_particles
from fluctlab.particles import ParticleEnsemble, fluctuation_field
from fluctlab.spde import NoiseModel, apply_A_n
from fluctlab.spectral import (
    SpectralField,
    check_compatible,
    coeffs_to_grid,
    dealiased_product,
    derivative,
    evaluate_at,
    japanese_weight,
    laplacian,
    lattice_convolution,
    pairing,
    sobolev_inner,
    sobolev_norm,
    wavenumbers,
)

logger = logging.getLogger(__name__)

TRACE_TOL = 1e-8


# =============================================================================
# Outer maps
# =============================================================================


@dataclass(frozen=True)
class Linear:
    """g(y) = c . y"""

    coeffs: tuple[float, ...]
    kind: OuterMap = field(default=OuterMap.LINEAR, init=False)

    def value(self, y: np.ndarray) -> float:
        return float(np.dot(self.coeffs, y))

    def grad(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=np.float64)

    def hess(self, y: np.ndarray) -> np.ndarray:
        m = len(self.coeffs)
        return np.zeros((m, m))

    def to_dict(self) -> dict:
        return {"outer": self.kind.value, "coeffs": list(self.coeffs)}


@dataclass(frozen=True)
class Quadratic:
    """g(y) = 1/2 sum (R tanh(y_i / R))^2, quadratic near 0 and bounded."""

    radius: float
    kind: OuterMap = field(default=OuterMap.QUADRATIC, init=False)

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise DomainError(f"quadratic cutoff radius must be positive, got {self.radius}")

    def value(self, y: np.ndarray) -> float:
        return float(0.5 * np.sum((self.radius * np.tanh(y / self.radius)) ** 2))

    def grad(self, y: np.ndarray) -> np.ndarray:
        t = np.tanh(y / self.radius)
        return self.radius * t * (1.0 - t**2)

    def hess(self, y: np.ndarray) -> np.ndarray:
        t = np.tanh(y / self.radius)
        s = 1.0 - t**2
        return np.diag(s * (1.0 - 3.0 * t**2))

    def to_dict(self) -> dict:
        return {"outer": self.kind.value, "radius": self.radius}


@dataclass(frozen=True)
class TanhProduct:
    """g(y) = prod tanh(a_i y_i + b_i)."""

    scales: tuple[float, ...]
    shifts: tuple[float, ...]
    kind: OuterMap = field(default=OuterMap.TANH_PRODUCT, init=False)

    def __post_init__(self) -> None:
        if len(self.scales) != len(self.shifts):
            raise DomainError("tanh_product needs as many shifts as scales")

    def _parts(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a = np.asarray(self.scales, dtype=np.float64)
        u = np.tanh(a * y + np.asarray(self.shifts, dtype=np.float64))
        return a, u, 1.0 - u**2

    @staticmethod
    def _others(u: np.ndarray, skip: Sequence[int]) -> float:
        keep = [v for i, v in enumerate(u) if i not in skip]
        return float(np.prod(keep)) if keep else 1.0

    def value(self, y: np.ndarray) -> float:
        _, u, _ = self._parts(y)
        return float(np.prod(u))

    def grad(self, y: np.ndarray) -> np.ndarray:
        a, u, du = self._parts(y)
        return np.array([a[i] * du[i] * self._others(u, (i,)) for i in range(len(u))])

    def hess(self, y: np.ndarray) -> np.ndarray:
        a, u, du = self._parts(y)
        m = len(u)
        out = np.zeros((m, m))
        for i in range(m):
            out[i, i] = -2.0 * a[i] ** 2 * u[i] * du[i] * self._others(u, (i,))
            for j in range(i + 1, m):
                out[i, j] = out[j, i] = a[i] * du[i] * a[j] * du[j] * self._others(u, (i, j))
        return out

    def to_dict(self) -> dict:
        return {"outer": self.kind.value, "scales": list(self.scales), "shifts": list(self.shifts)}


@dataclass(frozen=True)
class GaussBump:
    """g(y) = exp(-|y - c|^2 / (2 w^2))."""

    center: tuple[float, ...]
    width: float
    kind: OuterMap = field(default=OuterMap.GAUSS_BUMP, init=False)

    def __post_init__(self) -> None:
        if self.width <= 0:
            raise DomainError(f"gauss_bump width must be positive, got {self.width}")

    def value(self, y: np.ndarray) -> float:
        z = y - np.asarray(self.center)
        return float(np.exp(-np.dot(z, z) / (2.0 * self.width**2)))

    def grad(self, y: np.ndarray) -> np.ndarray:
        z = y - np.asarray(self.center)
        return -z / self.width**2 * self.value(y)

    def hess(self, y: np.ndarray) -> np.ndarray:
        z = y - np.asarray(self.center)
        w2 = self.width**2
        return self.value(y) * (np.outer(z, z) / w2**2 - np.eye(len(z)) / w2)

    def to_dict(self) -> dict:
        return {"outer": self.kind.value, "center": list(self.center), "width": self.width}


Outer = Union[Linear, Quadratic, TanhProduct, GaussBump]


def outer_arity(outer: Outer) -> Optional[int]:
    """Number of inputs the map is built for, None when any m fits."""
    if isinstance(outer, Linear):
        return len(outer.coeffs)
    if isinstance(outer, TanhProduct):
        return len(outer.scales)
    if isinstance(outer, GaussBump):
        return len(outer.center)
    return None


def outer_bounds(outer: Outer, m: int, *, radius: float = 10.0, points: int = 9) -> tuple[float, float, float]:
    """Sup of |g|, |grad g|, |hess g| on a uniform probe grid in [-radius, radius]^m."""
    axis = np.linspace(-radius, radius, points)
    mesh = np.stack(np.meshgrid(*([axis] * m), indexing="ij"), axis=-1).reshape(-1, m)
    sup = [0.0, 0.0, 0.0]
    for y in mesh:
        vals = (abs(outer.value(y)), np.linalg.norm(outer.grad(y)), np.linalg.norm(outer.hess(y), 2))
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"outer map {outer.kind.value} is not finite at {y.tolist()}")
        sup = [max(a, b) for a, b in zip(sup, vals)]
    return sup[0], sup[1], sup[2]


# =============================================================================
# Cylindrical functional
# =============================================================================


@dataclass(frozen=True, eq=False)
class CylindricalFunctional:
    phis: tuple[SpectralField, ...]
    outer: Outer
    s: float

    def __post_init__(self) -> None:
        if not self.phis:
            raise DomainError("a cylindrical functional needs at least one test function")
        first = self.phis[0]
        for phi in self.phis[1:]:
            check_compatible(first, phi, "CylindricalFunctional")
        arity = outer_arity(self.outer)
        if arity is not None and arity != len(self.phis):
            raise DomainError(
                f"outer map {self.outer.kind.value} takes {arity} inputs, functional has m={len(self.phis)}"
            )

    @classmethod
    def for_indices(cls, phis: Sequence[SpectralField], outer: Outer, indices: SobolevIndices) -> "CylindricalFunctional":
        return cls(tuple(phis), outer, indices.s_fluct)

    @property
    def m(self) -> int:
        return len(self.phis)

    @property
    def d(self) -> int:
        return self.phis[0].d

    @property
    def kmax(self) -> int:
        return self.phis[0].kmax

    def coordinates(self, f: SpectralField) -> np.ndarray:
        """y_i = Re <f, phi_i>_s."""
        return np.array([sobolev_inner(f, phi, self.s).real for phi in self.phis])

    def riesz_fields(self) -> tuple[SpectralField, ...]:
        w = japanese_weight(self.d, self.kmax, self.s)
        return tuple(phi.scale_modes(w) for phi in self.phis)

    def to_dict(self) -> dict:
        return {**self.outer.to_dict(), "m": self.m, "s": self.s, "kmax": self.kmax}


def _combine(phis: Sequence[SpectralField], weights: np.ndarray) -> SpectralField:
    coeffs = sum(float(w) * phi.coeffs for w, phi in zip(weights, phis))
    return phis[0].with_coeffs(coeffs)


def evaluate(Phi: CylindricalFunctional, f: SpectralField) -> float:
    return Phi.outer.value(Phi.coordinates(f))


def gradient(Phi: CylindricalFunctional, f: SpectralField) -> SpectralField:
    """sum_i d_i g(y) phi_i."""
    return _combine(Phi.phis, Phi.outer.grad(Phi.coordinates(f)))


def hessian_apply(Phi: CylindricalFunctional, f: SpectralField, h: SpectralField) -> SpectralField:
    """sum_ij d_ij g(y) <phi_j, h>_s phi_i."""
    hess = Phi.outer.hess(Phi.coordinates(f))
    hy = np.array([sobolev_inner(phi, h, Phi.s).real for phi in Phi.phis])
    return _combine(Phi.phis, hess @ hy)


def probe_seminorms(
    Phi: CylindricalFunctional,
    rng: np.random.Generator,
    n_probe: int = 64,
    *,
    radii: Sequence[float] = (0.1, 1.0, 10.0),
) -> tuple[float, float]:
    """Probe estimates of sup |grad Phi|_s and sup |Hess Phi|_op over random f."""
    gram = np.array([[sobolev_inner(a, b, Phi.s).real for b in Phi.phis] for a in Phi.phis])
    evals, evecs = np.linalg.eigh(gram)
    root = evecs @ np.diag(np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T
    c1 = c2 = 0.0
    for i in range(n_probe):
        f = SpectralField.random(Phi.d, Phi.kmax, rng)
        f = f * (radii[i % len(radii)] / max(sobolev_norm(f, Phi.s), 1e-300))
        y = Phi.coordinates(f)
        g = Phi.outer.grad(y)
        c1 = max(c1, math.sqrt(max(float(g @ gram @ g), 0.0)))
        c2 = max(c2, float(np.max(np.abs(np.linalg.eigvalsh(root @ Phi.outer.hess(y) @ root)))))
    return c1, c2


# =============================================================================
# Generators
# =============================================================================


@dataclass(frozen=True)
class GeneratorTerms:
    """Parts of a generator evaluation; ``diagonal_check`` is the second trace path when run."""

    drift_difference: float
    transport_diffusion: float
    diagonal: float
    diagonal_check: Optional[float] = None

    @property
    def total(self) -> float:
        return self.drift_difference + self.transport_diffusion + self.diagonal

    def to_dict(self) -> dict:
        return {
            "drift_difference": self.drift_difference,
            "transport_diffusion": self.transport_diffusion,
            "diagonal": self.diagonal,
            "diagonal_check": self.diagonal_check,
            "total": self.total,
        }


def _noise_pairings(Phi: CylindricalFunctional, sqrt_mu: SpectralField, sigma: float, L: int) -> np.ndarray:
    """V[a, j, l] = <B_j e_l, phi_a>_s for |l| <= L, flattened over l."""
    k = wavenumbers(Phi.d, Phi.kmax)
    w = japanese_weight(Phi.d, Phi.kmax, Phi.s)
    flipped = np.flip(sqrt_mu.coeffs)
    out = np.empty((Phi.m, Phi.d, (2 * L + 1) ** Phi.d), dtype=np.complex128)
    for a, phi in enumerate(Phi.phis):
        base = sigma * w * np.conj(phi.coeffs)
        for j in range(Phi.d):
            out[a, j] = lattice_convolution(base * 2j * np.pi * k[j], flipped, L).ravel()
    return out


def trace_by_modes(Phi: CylindricalFunctional, hess: np.ndarray, sqrt_mu: SpectralField, sigma: float, L: int) -> float:
    """sum_j sum_{|l|<=L} <Hess B_j e_l, B_j e_l>_s."""
    v = _noise_pairings(Phi, sqrt_mu, sigma, L)
    total = 0.0
    for j in range(Phi.d):
        vj = v[:, j, :]
        total += float(np.real(np.einsum("ab,bl,al->", hess, vj, np.conj(vj))))
    return total


def trace_by_diagonal(Phi: CylindricalFunctional, hess: np.ndarray, sqrt_mu: SpectralField, sigma: float) -> float:
    """sigma^2 sum_j sum_ab g_ab integral of sqrt(mu)^2 d_j Phi_a d_j Phi_b."""
    riesz = Phi.riesz_fields()
    m = int(sp_fft.next_fast_len(2 * (sqrt_mu.kmax + Phi.kmax) + 1))
    weight = coeffs_to_grid(sqrt_mu.coeffs, m).real ** 2
    total = 0.0
    for j in range(Phi.d):
        grads = [coeffs_to_grid(derivative(r, j).coeffs, m).real for r in riesz]
        for a in range(Phi.m):
            for b in range(Phi.m):
                if hess[a, b] != 0.0:
                    total += hess[a, b] * float(np.mean(weight * grads[a] * grads[b]))
    return sigma**2 * total


def generator_spde(
    Phi: CylindricalFunctional,
    f: SpectralField,
    t: float,
    n: int,
    mu: SpectralField,
    noise: NoiseModel,
    model: DriftModel,
) -> GeneratorTerms:
    """<A_n f, grad Phi(f)>_s + 1/2 sum_j Tr(Hess Phi(f) B_j B_j^*).

    The trace is summed over the noise modes |l| <= L of the integrator. When L
    covers the bandwidth of sqrt(mu) plus that of the phis, the diagonal
    formula must give the same number.
    """
    if abs(f.mean) > 1e-12:
        raise DomainError(f"generator_spde needs c_0(f) = 0, got {f.mean}")
    y = Phi.coordinates(f)
    an = apply_A_n(t, f, n, mu, model, noise.sigma)
    drift = float(np.dot(Phi.outer.grad(y), [sobolev_inner(an, phi, Phi.s).real for phi in Phi.phis]))

    hess = Phi.outer.hess(y)
    if not np.any(hess):
        return GeneratorTerms(0.0, drift, 0.0)
    sqrt_mu = noise.at(t)
    trace = trace_by_modes(Phi, hess, sqrt_mu, noise.sigma, noise.L_noise)
    needed = sqrt_mu.bandwidth() + max(phi.bandwidth() for phi in Phi.phis)
    check = None
    if noise.L_noise >= needed:
        check = trace_by_diagonal(Phi, hess, sqrt_mu, noise.sigma)
        if abs(check - trace) > TRACE_TOL * max(1.0, abs(trace)):
            raise ConsistencyError(
                abs(check - trace), module="functionals", operation="generator_spde", tol=TRACE_TOL
            )
    else:
        logger.warning(
            "noise cutoff L=%d below bandwidth %d; trace cross-check skipped", noise.L_noise, needed
        )
    return GeneratorTerms(0.0, drift, 0.5 * trace, None if check is None else 0.5 * check)


def generator_particle(
    Phi: CylindricalFunctional,
    ensemble: ParticleEnsemble,
    mu: SpectralField,
    t: float,
    model: DriftModel,
    sigma: float,
) -> GeneratorTerms:
    """Generator of Phi(rho^N) for the particle system at one configuration.

    Sums against mu^N are exact particle sums, integrals against mu are exact
    lattice pairings.
    """
    if mu.kmax != Phi.kmax or mu.d != Phi.d:
        raise ShapeError(f"functional lattice kmax={Phi.kmax} differs from mu kmax={mu.kmax}")
    n = ensemble.n
    pts = ensemble.positions
    rho = fluctuation_field(ensemble, mu)
    y = Phi.coordinates(rho)
    grad_g = Phi.outer.grad(y)
    hess_g = Phi.outer.hess(y)

    riesz = Phi.riesz_fields()
    d = Phi.d
    k2 = 2 * Phi.kmax
    b_mu = convolve(model, mu)
    b_n = drift_at_particles(model, pts, t)
    b_mu_at = np.stack([evaluate_at(b, pts).real for b in b_mu], axis=1)
    mu_ext = mu.extend(k2)

    grads_at = []
    difference = transport = 0.0
    for a, field_a in enumerate(riesz):
        partials = [derivative(field_a, j) for j in range(d)]
        at = np.stack([evaluate_at(p, pts).real for p in partials], axis=1)
        grads_at.append(at)
        difference += grad_g[a] * float(np.sum((b_n - b_mu_at) * at)) / math.sqrt(n)

        flux = laplacian(field_a).extend(k2) * (0.5 * sigma**2)
        for j in range(d):
            flux = flux + dealiased_product(b_mu[j], partials[j], k2)
        empirical = float(np.mean(evaluate_at(flux, pts).real))
        transport += grad_g[a] * math.sqrt(n) * (empirical - pairing(flux, mu_ext).real)

    diagonal = 0.0
    for a in range(Phi.m):
        for b in range(Phi.m):
            if hess_g[a, b] != 0.0:
                diagonal += hess_g[a, b] * float(np.sum(grads_at[a] * grads_at[b]))
    diagonal *= 0.5 * sigma**2 / n
    return GeneratorTerms(difference, transport, diagonal)
