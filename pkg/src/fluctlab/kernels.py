"""Drift models b(x, m) = (K * m)(x) on the torus.

Each model exposes its Fourier multiplier K^(k), with (K*m)^_k = K^(k) c_k(m),
and a real-space periodic kernel K_per used for particle drifts. The
multiplier is the ground truth: real-space paths (Ewald splitting by
default, truncated image sums as a reference) converge to it.

Sign conventions (c_k = integral of exp(-2 pi i k.x) df):

  biot_savart (d=2)   K(x) = (1/2pi) (-x2, x1)/|x|^2    K^(k) = i (k2, -k1) / (2 pi |k|^2)
  coulomb (d=2)       K(x) = x/|x|^2 = -grad(-ln|x|)     K^(k) = -i k / |k|^2
  coulomb (d=3)       K(x) = x/|x|^3 = -grad(1/|x|)      K^(k) = -2i k / |k|^2

The Coulomb potential g (K = -grad g) has g^(k) = 1/(2 pi |k|^2) for d=2
and 1/(pi |k|^2) for d=3.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Mapping, Optional, Sequence

import numpy as np
from scipy import special
from scipy.spatial import cKDTree

from fluctlab._exceptions import DomainError, SingularityError
from fluctlab._types import DriftVariant, Normalization, Periodization
from fluctlab.spectral import (
    SpectralField,
    evaluate_coeffs,
    k_squared,
    structure_factor,
    wavenumbers,
)

logger = logging.getLogger(__name__)

SMOOTH_PRESETS = ("zero", "sine1d", "gauss_reg", "table")

_DEFAULT_IMAGE_RADIUS = {2: 30, 3: 8}

# Relative size below which a Gaussian-damped multiplier is treated as zero.
_GAUSS_TAIL = 1e-16


# =============================================================================
# DriftModel
# =============================================================================


@dataclass(frozen=True, eq=False)
class DriftModel:
    """Immutable kernel description.

    ``table`` entries are (k, vector) pairs for the inline smooth variant;
    missing -k partners are filled with the conjugate vector.
    """

    variant: DriftVariant
    d: int
    preset: Optional[str] = None
    alpha: float = 1.0
    sigma_conv: Optional[float] = None
    table: tuple[tuple[tuple[int, ...], tuple[complex, ...]], ...] = ()
    periodization: Periodization = Periodization.EWALD
    image_radius: Optional[int] = None
    ewald_tol: float = 1e-12
    normalization: Normalization = Normalization.MEAN_FIELD
    capped: bool = False
    eps_cap: float = 1e-3
    collision_tol: float = 1e-12

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", DriftVariant(self.variant))
        object.__setattr__(self, "periodization", Periodization(self.periodization))
        object.__setattr__(self, "normalization", Normalization(self.normalization))
        if self.variant is DriftVariant.BIOT_SAVART and self.d != 2:
            raise DomainError(f"biot_savart kernel is defined for d=2 only, got d={self.d}")
        if self.variant is DriftVariant.COULOMB and self.d not in (2, 3):
            raise DomainError(f"coulomb kernel needs d in (2, 3), got d={self.d}")
        if self.variant is DriftVariant.SMOOTH:
            if self.preset not in SMOOTH_PRESETS:
                raise DomainError(
                    f"unknown smooth preset {self.preset!r}; choose from {SMOOTH_PRESETS}"
                )
            if self.preset == "gauss_reg" and not (self.sigma_conv and self.sigma_conv > 0):
                raise DomainError("gauss_reg preset needs sigma_conv > 0")
            if self.preset == "table":
                self._check_table()
        if self.capped and self.eps_cap <= 0:
            raise DomainError(f"eps_cap must be positive, got {self.eps_cap}")

    def _check_table(self) -> None:
        if not self.table:
            raise DomainError("table preset needs at least one multiplier entry")
        for k, vec in self.table:
            if len(k) != self.d or len(vec) != self.d:
                raise DomainError(f"table entry {k} does not match dimension {self.d}")
            if all(v == 0 for v in k) and any(abs(c) > 0 for c in vec):
                raise DomainError("multiplier at k = 0 must be the zero vector")

    # --- constructors -------------------------------------------------------

    @classmethod
    def smooth(
        cls,
        d: int,
        preset: str = "sine1d",
        *,
        alpha: float = 1.0,
        sigma_conv: Optional[float] = None,
        table: Optional[Mapping[Sequence[int], Sequence[complex]]] = None,
        **options: Any,
    ) -> "DriftModel":
        entries: tuple[tuple[tuple[int, ...], tuple[complex, ...]], ...] = ()
        if table is not None:
            preset = "table"
            entries = tuple(
                (tuple(int(v) for v in k), tuple(complex(c) for c in vec))
                for k, vec in table.items()
            )
        return cls(
            DriftVariant.SMOOTH, d, preset=preset, alpha=alpha,
            sigma_conv=sigma_conv, table=entries, **options,
        )

    @classmethod
    def biot_savart(cls, **options: Any) -> "DriftModel":
        return cls(DriftVariant.BIOT_SAVART, 2, **options)

    @classmethod
    def coulomb(cls, d: int, **options: Any) -> "DriftModel":
        return cls(DriftVariant.COULOMB, d, **options)

    # --- properties ---------------------------------------------------------

    @property
    def is_singular(self) -> bool:
        return self.variant is not DriftVariant.SMOOTH

    @property
    def radius(self) -> int:
        """Image radius of the truncated image sum."""
        if self.image_radius is not None:
            return self.image_radius
        return _DEFAULT_IMAGE_RADIUS.get(self.d, 8)

    def bandwidth(self) -> int:
        """Max-norm bandwidth of a smooth multiplier."""
        if self.is_singular:
            raise DomainError(f"{self.variant.value} kernel is not bandlimited")
        if self.preset == "zero":
            return 0
        if self.preset == "sine1d":
            return 1
        if self.preset == "gauss_reg":
            cut = math.sqrt(math.log(1.0 / _GAUSS_TAIL) / (2.0 * math.pi**2)) / self.sigma_conv
            return max(1, math.ceil(cut))
        return max(max(abs(v) for v in k) for k, _ in self.table)

    def to_dict(self) -> dict[str, Any]:
        result: dict[str, Any] = {"variant": self.variant.value, "d": self.d}
        if self.variant is DriftVariant.SMOOTH:
            result["preset"] = self.preset
            if self.preset == "sine1d":
                result["alpha"] = self.alpha
            if self.sigma_conv is not None:
                result["sigma_conv"] = self.sigma_conv
            if self.table:
                result["table"] = [
                    {"k": list(k), "value": [[c.real, c.imag] for c in vec]}
                    for k, vec in self.table
                ]
        else:
            result["periodization"] = self.periodization.value
            if self.periodization is Periodization.IMAGES:
                result["image_radius"] = self.radius
            else:
                result["ewald_tol"] = self.ewald_tol
        result["normalization"] = self.normalization.value
        if self.capped:
            result["capped"] = True
            result["eps_cap"] = self.eps_cap
        return result


# =============================================================================
# Fourier side
# =============================================================================


def _inverse_ksq(k: np.ndarray) -> np.ndarray:
    ksq = np.sum(k * k, axis=0)
    out = np.zeros_like(ksq)
    nz = ksq > 0
    out[nz] = 1.0 / ksq[nz]
    return out


def _symbol(model: DriftModel, k: np.ndarray) -> np.ndarray:
    """K^ at an array of wavenumbers of shape (d, ...)."""
    d = model.d
    out = np.zeros(k.shape, dtype=np.complex128)
    if model.variant is DriftVariant.BIOT_SAVART:
        inv = _inverse_ksq(k) / (2.0 * np.pi)
        out[0] = 1j * k[1] * inv
        out[1] = -1j * k[0] * inv
        return out
    if model.variant is DriftVariant.COULOMB:
        factor = 1.0 if d == 2 else 2.0
        return -1j * factor * k * _inverse_ksq(k)
    if model.preset == "sine1d":
        rest_zero = np.all(k[1:] == 0, axis=0) if d > 1 else np.ones(k.shape[1:], bool)
        out[0][(k[0] == 1) & rest_zero] = 0.5j * model.alpha
        out[0][(k[0] == -1) & rest_zero] = -0.5j * model.alpha
        return out
    if model.preset == "gauss_reg":
        ksq = np.sum(k * k, axis=0)
        damp = np.exp(-2.0 * np.pi**2 * model.sigma_conv**2 * ksq)
        return -1j * k * _inverse_ksq(k) * damp
    if model.preset == "table":
        entries = dict(model.table)
        for key, vec in list(entries.items()):
            partner = tuple(-v for v in key)
            if partner not in entries:
                entries[partner] = tuple(np.conj(c) for c in vec)
        for key, vec in entries.items():
            mask = np.all(k == np.reshape(key, (d,) + (1,) * (k.ndim - 1)), axis=0)
            for j in range(d):
                out[j][mask] = vec[j]
        return out
    return out


@lru_cache(maxsize=64)
def multiplier(model: DriftModel, kmax: int) -> np.ndarray:
    """K^(k) on the lattice, shape (d, 2*kmax+1, ...)."""
    sym = _symbol(model, wavenumbers(model.d, kmax))
    sym.setflags(write=False)
    return sym


def spectral_multiplier(
    model: DriftModel,
    k: Sequence[int],
    kmax: Optional[int] = None,
) -> np.ndarray:
    """K^(k) as a length-d complex vector."""
    if len(k) != model.d:
        raise IndexError(f"wavenumber {tuple(k)} has wrong dimension for d={model.d}")
    if kmax is not None and any(abs(int(v)) > kmax for v in k):
        raise IndexError(f"wavenumber {tuple(k)} outside lattice kmax={kmax}")
    karr = np.asarray(k, dtype=np.float64).reshape(model.d, 1)
    return _symbol(model, karr)[:, 0]


@lru_cache(maxsize=16)
def potential_multiplier(model: DriftModel, kmax: int) -> np.ndarray:
    """g^(k) of the Coulomb potential on the lattice."""
    if model.variant is not DriftVariant.COULOMB:
        raise DomainError("potential multiplier exists for the coulomb kernel only")
    scale = 1.0 / (2.0 * np.pi) if model.d == 2 else 1.0 / np.pi
    inv = _inverse_ksq(wavenumbers(model.d, kmax))
    g = scale * inv
    g.setflags(write=False)
    return g


def convolve_coeffs(model: DriftModel, coeffs: np.ndarray, kmax: int) -> np.ndarray:
    """Coefficients of K*m for every component, shape (d, 2*kmax+1, ...)."""
    return multiplier(model, kmax) * coeffs[None, ...]


def convolve(model: DriftModel, field: SpectralField) -> tuple[SpectralField, ...]:
    """(K * m) as one field per component."""
    comps = convolve_coeffs(model, field.coeffs, field.kmax)
    return tuple(SpectralField(field.d, field.kmax, c) for c in comps)


def divergence_symbol(model: DriftModel, kmax: int) -> np.ndarray:
    """sum_j 2 pi i k_j K^_j(k); identically zero for biot_savart."""
    k = wavenumbers(model.d, kmax)
    return np.sum(2j * np.pi * k * multiplier(model, kmax), axis=0)


# =============================================================================
# Ewald splitting
# =============================================================================


@dataclass(frozen=True)
class EwaldSplit:
    """Screening parameter, real-space cutoff and reciprocal cutoff."""

    alpha: float
    r_cut: float
    k_cut: int

    @classmethod
    def for_tolerance(
        cls,
        d: int,
        tol: float,
        n_particles: Optional[int] = None,
    ) -> "EwaldSplit":
        log_tol = math.log(1.0 / tol)
        r_cut = 0.45
        if n_particles:
            r_cut = min(r_cut, 1.2 * n_particles ** (-1.0 / (2 * d)))
        alpha = log_tol / r_cut**2
        k_cut = math.ceil(math.sqrt(alpha * log_tol) / math.pi)
        return cls(alpha=alpha, r_cut=r_cut, k_cut=k_cut)

    def mean_shift(self, d: int) -> float:
        """Cell average of the screened real-space potential."""
        return math.pi / (2.0 * self.alpha) if d == 2 else math.pi / self.alpha


def _minimal_image(y: np.ndarray) -> np.ndarray:
    return y - np.round(y)


def _rot90(v: np.ndarray) -> np.ndarray:
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _short_force(model: DriftModel, y: np.ndarray, r: np.ndarray, alpha: float) -> np.ndarray:
    """Screened real-space part of K at minimal-image displacements y."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if model.d == 2:
            radial = np.exp(-alpha * r * r) / (r * r)
        else:
            sa = math.sqrt(alpha)
            radial = (
                special.erfc(sa * r) / r + 2.0 * math.sqrt(alpha / math.pi) * np.exp(-alpha * r * r)
            ) / (r * r)
    force = radial[:, None] * y
    if model.variant is DriftVariant.BIOT_SAVART:
        force = _rot90(force) / (2.0 * np.pi)
    return force


def _short_potential(d: int, r: np.ndarray, alpha: float) -> np.ndarray:
    if d == 2:
        return 0.5 * special.exp1(alpha * r * r)
    return special.erfc(math.sqrt(alpha) * r) / r


@lru_cache(maxsize=32)
def _long_force_symbol(model: DriftModel, split: EwaldSplit) -> np.ndarray:
    ksq = k_squared(model.d, split.k_cut)
    sym = multiplier(model, split.k_cut) * np.exp(-np.pi**2 * ksq / split.alpha)
    sym.setflags(write=False)
    return sym


@lru_cache(maxsize=32)
def _long_potential_symbol(model: DriftModel, split: EwaldSplit) -> np.ndarray:
    ksq = k_squared(model.d, split.k_cut)
    sym = potential_multiplier(model, split.k_cut) * np.exp(-np.pi**2 * ksq / split.alpha)
    sym.setflags(write=False)
    return sym


def _cap(force: np.ndarray, eps_cap: float) -> np.ndarray:
    norm = np.linalg.norm(force, axis=-1)
    limit = 1.0 / eps_cap
    scale = np.where(norm > limit, limit / np.where(norm > 0, norm, 1.0), 1.0)
    return force * scale[..., None]


# =============================================================================
# Image sums
# =============================================================================


@lru_cache(maxsize=8)
def _image_offsets(d: int, radius: int) -> np.ndarray:
    axis = np.arange(-radius, radius + 1, dtype=np.float64)
    offsets = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    offsets.setflags(write=False)
    return offsets


def _free_kernel(model: DriftModel, z: np.ndarray) -> np.ndarray:
    rsq = np.sum(z * z, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        if model.d == 2:
            k = z / rsq[..., None]
        else:
            k = z / (rsq * np.sqrt(rsq))[..., None]
    k[rsq == 0.0] = 0.0
    if model.variant is DriftVariant.BIOT_SAVART:
        k = _rot90(k) / (2.0 * np.pi)
    return k


def image_sum_kernel(model: DriftModel, y: np.ndarray, radius: Optional[int] = None) -> np.ndarray:
    """Square truncated image sum of the free-space kernel minus its linear drift.

    A cube of images carries a uniform background field (c/d) y, where
    div K = c delta; removing it yields the mean-free periodic kernel.
    """
    radius = model.radius if radius is None else radius
    y = _minimal_image(np.atleast_2d(np.asarray(y, dtype=np.float64)))
    offsets = _image_offsets(model.d, radius)
    out = np.empty_like(y)
    for start in range(0, len(y), 16):
        block = y[start:start + 16]
        z = block[:, None, :] + offsets[None, :, :]
        out[start:start + 16] = _free_kernel(model, z).sum(axis=1)
    if model.d == 2:
        linear = np.pi * y
    else:
        linear = (4.0 * np.pi / 3.0) * y
    if model.variant is DriftVariant.BIOT_SAVART:
        linear = _rot90(linear) / (2.0 * np.pi)
    return out - linear


# =============================================================================
# Real-space kernel
# =============================================================================


def periodic_kernel(model: DriftModel, x: Any) -> np.ndarray:
    """K_per at displacement(s) x, shape (n, d); K_per(0) := 0 for singular kernels."""
    pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if not model.is_singular:
        band = model.bandwidth()
        sym = multiplier(model, band)
        return np.stack(
            [evaluate_coeffs(sym[j], band, pts).real for j in range(model.d)], axis=-1
        )
    y = _minimal_image(pts)
    if model.periodization is Periodization.IMAGES:
        return image_sum_kernel(model, y)
    split = EwaldSplit.for_tolerance(model.d, model.ewald_tol)
    r = np.linalg.norm(y, axis=-1)
    out = np.zeros_like(y)
    near = (r < split.r_cut) & (r > 0)
    if near.any():
        out[near] = _short_force(model, y[near], r[near], split.alpha)
    sym = _long_force_symbol(model, split)
    for j in range(model.d):
        out[:, j] += evaluate_coeffs(sym[j], split.k_cut, y).real
    out[r == 0] = 0.0
    return out


def periodic_potential(model: DriftModel, x: Any) -> np.ndarray:
    """Mean-free periodic Coulomb potential g_per at displacement(s) x."""
    if model.variant is not DriftVariant.COULOMB:
        raise DomainError("periodic potential exists for the coulomb kernel only")
    y = _minimal_image(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    split = EwaldSplit.for_tolerance(model.d, model.ewald_tol)
    r = np.linalg.norm(y, axis=-1)
    if np.any(r == 0):
        raise SingularityError((0, 0), operation="periodic_potential", distance=0.0)
    out = np.zeros(len(y))
    near = r < split.r_cut
    out[near] = _short_potential(model.d, r[near], split.alpha)
    out += evaluate_coeffs(_long_potential_symbol(model, split), split.k_cut, y).real
    return out - split.mean_shift(model.d)


def flat_derivative(model: DriftModel, x: Sequence[float], v: Sequence[float]) -> np.ndarray:
    """delta b / delta m (x, v) = K_per(x - v); the second flat derivative vanishes."""
    xv = np.asarray(x, dtype=np.float64) - np.asarray(v, dtype=np.float64)
    if model.is_singular:
        dist = float(np.linalg.norm(_minimal_image(xv)))
        if dist < model.collision_tol:
            raise SingularityError((0, 1), operation="flat_derivative", distance=dist)
    return periodic_kernel(model, xv.reshape(1, -1))[0]


# =============================================================================
# Particle drift
# =============================================================================


def find_collision(points: np.ndarray, tol: float) -> Optional[tuple[int, int, float]]:
    """First pair of points closer than ``tol`` on the torus, if any."""
    tree = cKDTree(points, boxsize=1.0)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return None
    i, j = (int(v) for v in pairs[np.lexsort(pairs.T[::-1])][0])
    dist = float(np.linalg.norm(_minimal_image(points[i] - points[j])))
    return i, j, dist


def drift_at_particles(model: DriftModel, positions: Any, t: float = 0.0) -> np.ndarray:
    """velocity_i = (1/N) sum_{j != i} K_per(X_i - X_j), shape (N, d).

    ``unscaled`` normalization drops the 1/N. The drift models are
    autonomous; ``t`` is accepted for interface symmetry.
    """
    pts = np.asarray(positions, dtype=np.float64).reshape(-1, model.d)
    n = len(pts)
    if n <= 1:
        return np.zeros_like(pts)
    scale = 1.0 if model.normalization is Normalization.UNSCALED else 1.0 / n

    if not model.is_singular:
        return scale * _smooth_sum(model, pts)

    if not model.capped:
        hit = find_collision(pts, model.collision_tol)
        if hit is not None:
            raise SingularityError((hit[0], hit[1]), distance=hit[2])

    if model.periodization is Periodization.IMAGES:
        return scale * _image_pair_sum(model, pts)
    return scale * _ewald_sum(model, pts)


def _smooth_sum(model: DriftModel, pts: np.ndarray) -> np.ndarray:
    band = model.bandwidth()
    sym = multiplier(model, band)
    sf = structure_factor(pts, band)
    out = np.empty_like(pts)
    for j in range(model.d):
        self_term = float(np.sum(sym[j]).real)
        out[:, j] = evaluate_coeffs(sym[j] * sf, band, pts).real - self_term
    return out


def _accumulate_pairs(
    model: DriftModel,
    n: int,
    pairs: np.ndarray,
    force: np.ndarray,
) -> np.ndarray:
    if model.capped:
        force = _cap(force, model.eps_cap)
    vel = np.zeros((n, model.d))
    np.add.at(vel, pairs[:, 0], force)
    np.add.at(vel, pairs[:, 1], -force)
    return vel


def _image_pair_sum(model: DriftModel, pts: np.ndarray) -> np.ndarray:
    n = len(pts)
    i, j = np.triu_indices(n, k=1)
    y = _minimal_image(pts[i] - pts[j])
    force = image_sum_kernel(model, y)
    force[np.linalg.norm(y, axis=-1) < model.collision_tol] = 0.0
    return _accumulate_pairs(model, n, np.stack([i, j], axis=1), force)


def _ewald_sum(model: DriftModel, pts: np.ndarray) -> np.ndarray:
    n = len(pts)
    split = EwaldSplit.for_tolerance(model.d, model.ewald_tol, n_particles=n)
    tree = cKDTree(pts, boxsize=1.0)
    pairs = tree.query_pairs(split.r_cut, output_type="ndarray")
    vel = np.zeros_like(pts)
    if len(pairs):
        y = _minimal_image(pts[pairs[:, 0]] - pts[pairs[:, 1]])
        r = np.linalg.norm(y, axis=-1)
        force = _short_force(model, y, r, split.alpha)
        force[r < model.collision_tol] = 0.0
        vel += _accumulate_pairs(model, n, pairs, force)
    sym = _long_force_symbol(model, split)
    sf = structure_factor(pts, split.k_cut)
    for j in range(model.d):
        self_term = float(np.sum(sym[j]).real)
        vel[:, j] += evaluate_coeffs(sym[j] * sf, split.k_cut, pts).real - self_term
    return vel


def pair_potential_sum(model: DriftModel, points: np.ndarray) -> float:
    """sum over i != j of g_per(X_i - X_j), Ewald-split."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, model.d)
    n = len(pts)
    if n < 2:
        return 0.0
    hit = find_collision(pts, model.collision_tol)
    if hit is not None:
        raise SingularityError((hit[0], hit[1]), operation="pair_potential_sum", distance=hit[2])
    split = EwaldSplit.for_tolerance(model.d, model.ewald_tol, n_particles=n)
    tree = cKDTree(pts, boxsize=1.0)
    pairs = tree.query_pairs(split.r_cut, output_type="ndarray")
    total = 0.0
    if len(pairs):
        y = _minimal_image(pts[pairs[:, 0]] - pts[pairs[:, 1]])
        total += 2.0 * float(np.sum(_short_potential(model.d, np.linalg.norm(y, axis=-1), split.alpha)))
    sym = _long_potential_symbol(model, split)
    sf = structure_factor(pts, split.k_cut)
    total += float(np.sum(sym * np.abs(sf) ** 2)) - n * float(np.sum(sym))
    total -= n * (n - 1) * split.mean_shift(model.d)
    return total
