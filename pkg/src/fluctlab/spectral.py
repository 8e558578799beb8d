"""Fourier representation of fields on the torus T^d.

Coefficients follow c_k(f) = integral of exp(-2 pi i k.x) df(x), so a field is
f(x) = sum_k c_k exp(2 pi i k.x) and an empirical measure is a plain sum of
complex exponentials. Coefficient arrays have shape (2*kmax+1,)*d; array
index i along an axis stands for the wavenumber i - kmax, so the coefficient
of -k sits at the flipped position.

Grid samples at x_j = j/M are produced by placing every k at position
k mod M and transforming with ``norm="forward"``; a grid of M >= 2*kmax+1
points per axis makes the round trip exact. Pointwise products use grids of
at least K1 + K2 + K_out + 1 points (the 3/2 rule for equal bandwidths).
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Mapping, Optional, Sequence

import numpy as np
from scipy import fft as sp_fft
from scipy import signal

from fluctlab._exceptions import DomainError, ShapeError
from fluctlab._types import SobolevIndices

__all__ = [
    "SobolevIndices",
    "SpectralField",
    "bump_profile",
    "coeffs_to_grid",
    "dealiased_product",
    "derivative",
    "embed_empirical",
    "evaluate_at",
    "from_grid",
    "grid_to_coeffs",
    "japanese_weight",
    "k_squared",
    "laplacian",
    "lattice_convolution",
    "lattice_shape",
    "mollifier_symbol",
    "mollify",
    "pairing",
    "product_grid_size",
    "sobolev_inner",
    "sobolev_norm",
    "to_grid",
    "wavenumbers",
]

# Points per chunk when contracting per-axis phase tables.
_CHUNK = 512


# =============================================================================
# Lattice helpers
# =============================================================================


def lattice_shape(d: int, kmax: int) -> tuple[int, ...]:
    return (2 * kmax + 1,) * d


@lru_cache(maxsize=128)
def wavenumbers(d: int, kmax: int) -> np.ndarray:
    """Integer wavenumbers as floats, shape (d, 2*kmax+1, ...)."""
    axis = np.arange(-kmax, kmax + 1, dtype=np.float64)
    k = np.stack(np.meshgrid(*([axis] * d), indexing="ij"))
    k.setflags(write=False)
    return k


@lru_cache(maxsize=128)
def k_squared(d: int, kmax: int) -> np.ndarray:
    ksq = np.sum(wavenumbers(d, kmax) ** 2, axis=0)
    ksq.setflags(write=False)
    return ksq


@lru_cache(maxsize=256)
def japanese_weight(d: int, kmax: int, s: float) -> np.ndarray:
    """<k>^{2s} = (1 + |k|^2)^s."""
    w = (1.0 + k_squared(d, kmax)) ** float(s)
    w.setflags(write=False)
    return w


def _zero_index(d: int, kmax: int) -> tuple[int, ...]:
    return (kmax,) * d


def product_grid_size(*bandwidths: int) -> int:
    """Grid size that resolves a product of the given bandwidths without aliasing.

    The last bandwidth is the output bandwidth: M >= K1 + ... + Kp + K_out + 1.
    """
    return int(sp_fft.next_fast_len(sum(bandwidths) + 1))


# =============================================================================
# SpectralField
# =============================================================================


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Immutable complex Fourier coefficients on the lattice {-kmax..kmax}^d."""

    d: int
    kmax: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        if self.d not in (1, 2, 3):
            raise ShapeError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.kmax < 0:
            raise ShapeError(f"kmax must be non-negative, got {self.kmax}")
        arr = np.array(self.coeffs, dtype=np.complex128)
        expected = lattice_shape(self.d, self.kmax)
        if arr.shape != expected:
            raise ShapeError(
                f"coefficient array has shape {arr.shape}, lattice needs {expected}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    # --- constructors -------------------------------------------------------

    @classmethod
    def zeros(cls, d: int, kmax: int) -> "SpectralField":
        return cls(d, kmax, np.zeros(lattice_shape(d, kmax), dtype=np.complex128))

    @classmethod
    def constant(cls, d: int, kmax: int, value: complex = 1.0) -> "SpectralField":
        coeffs = np.zeros(lattice_shape(d, kmax), dtype=np.complex128)
        coeffs[_zero_index(d, kmax)] = value
        return cls(d, kmax, coeffs)

    @classmethod
    def from_modes(
        cls,
        d: int,
        kmax: int,
        modes: Mapping[Sequence[int], complex],
        *,
        hermitian: bool = False,
    ) -> "SpectralField":
        """Field with the given modes set; ``hermitian`` fills missing -k partners."""
        coeffs = np.zeros(lattice_shape(d, kmax), dtype=np.complex128)
        given: set[tuple[int, ...]] = set()
        for k, value in modes.items():
            key = tuple(int(v) for v in k)
            coeffs[_index(key, d, kmax)] = complex(value)
            given.add(key)
        if hermitian:
            for key in given:
                partner = tuple(-v for v in key)
                if partner not in given:
                    coeffs[_index(partner, d, kmax)] = np.conj(coeffs[_index(key, d, kmax)])
        return cls(d, kmax, coeffs)

    @classmethod
    def random(
        cls,
        d: int,
        kmax: int,
        rng: np.random.Generator,
        *,
        decay: float = 0.0,
        zero_mean: bool = True,
    ) -> "SpectralField":
        """Random real-valued field with mode amplitudes scaled by <k>^-decay."""
        shape = lattice_shape(d, kmax)
        z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        z = 0.5 * (z + np.conj(np.flip(z)))
        z *= (1.0 + k_squared(d, kmax)) ** (-0.5 * decay)
        if zero_mean:
            z[_zero_index(d, kmax)] = 0.0
        return cls(d, kmax, z)

    # --- accessors ----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape

    @property
    def mean(self) -> complex:
        """c_0."""
        return complex(self.coeffs[_zero_index(self.d, self.kmax)])

    def coeff(self, k: Sequence[int]) -> complex:
        return complex(self.coeffs[_index(k, self.d, self.kmax)])

    def bandwidth(self, tol: float = 0.0) -> int:
        """Largest max-norm |k|_inf carrying a coefficient above ``tol``."""
        mask = np.abs(self.coeffs) > tol
        if not mask.any():
            return 0
        kinf = np.max(np.abs(wavenumbers(self.d, self.kmax)), axis=0)
        return int(kinf[mask].max())

    # --- transformations ----------------------------------------------------

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.d, self.kmax, coeffs)

    def with_mean(self, value: complex) -> "SpectralField":
        coeffs = self.coeffs.copy()
        coeffs[_zero_index(self.d, self.kmax)] = value
        return self.with_coeffs(coeffs)

    def flip(self) -> "SpectralField":
        """Field whose coefficient at k is c_{-k}."""
        return self.with_coeffs(np.flip(self.coeffs))

    def conjugate(self) -> "SpectralField":
        """Coefficients of the complex conjugate function: conj(c_{-k})."""
        return self.with_coeffs(np.conj(np.flip(self.coeffs)))

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.coeffs), initial=0.0)))
        gap = np.max(np.abs(self.coeffs - np.conj(np.flip(self.coeffs))), initial=0.0)
        return bool(gap <= tol * scale)

    def real_part(self) -> "SpectralField":
        return self.with_coeffs(0.5 * (self.coeffs + np.conj(np.flip(self.coeffs))))

    def scale_modes(self, multiplier: np.ndarray) -> "SpectralField":
        return self.with_coeffs(self.coeffs * multiplier)

    def truncate(self, kmax: int) -> "SpectralField":
        if kmax > self.kmax:
            raise ShapeError(f"cannot truncate kmax={self.kmax} to larger kmax={kmax}")
        lo = self.kmax - kmax
        sl = (slice(lo, lo + 2 * kmax + 1),) * self.d
        return SpectralField(self.d, kmax, self.coeffs[sl])

    def extend(self, kmax: int) -> "SpectralField":
        if kmax < self.kmax:
            raise ShapeError(f"cannot extend kmax={self.kmax} to smaller kmax={kmax}")
        pad = kmax - self.kmax
        return SpectralField(self.d, kmax, np.pad(self.coeffs, pad))

    def resize(self, kmax: int) -> "SpectralField":
        return self.truncate(kmax) if kmax <= self.kmax else self.extend(kmax)

    # --- arithmetic ---------------------------------------------------------

    def _check(self, other: "SpectralField", operation: str) -> None:
        check_compatible(self, other, operation)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other, "add")
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other, "subtract")
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __neg__(self) -> "SpectralField":
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, scalar: complex) -> "SpectralField":
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar: complex) -> "SpectralField":
        return self.with_coeffs(self.coeffs / scalar)

    def __repr__(self) -> str:
        return f"SpectralField(d={self.d}, kmax={self.kmax})"

    def to_dict(self) -> dict[str, Any]:
        flat = self.coeffs.ravel(order="C")
        return {
            "d": self.d,
            "kmax": self.kmax,
            "coeffs": [[float(c.real), float(c.imag)] for c in flat],
        }


def _index(k: Sequence[int], d: int, kmax: int) -> tuple[int, ...]:
    if len(k) != d:
        raise IndexError(f"wavenumber {tuple(k)} has wrong dimension for d={d}")
    if any(abs(int(v)) > kmax for v in k):
        raise IndexError(f"wavenumber {tuple(k)} outside lattice kmax={kmax}")
    return tuple(int(v) + kmax for v in k)


def check_compatible(f: SpectralField, g: SpectralField, operation: str) -> None:
    if f.d != g.d or f.kmax != g.kmax:
        raise ShapeError(
            f"{operation}: lattices differ (d={f.d}, kmax={f.kmax}) "
            f"vs (d={g.d}, kmax={g.kmax})"
        )


# =============================================================================
# Inner products and multipliers
# =============================================================================


def sobolev_inner(f: SpectralField, g: SpectralField, s: float) -> complex:
    """sum_k <k>^{2s} c_k(f) conj(c_k(g))."""
    check_compatible(f, g, "sobolev_inner")
    w = japanese_weight(f.d, f.kmax, s)
    return complex(np.sum(w * f.coeffs * np.conj(g.coeffs)))


def sobolev_norm(f: SpectralField, s: float) -> float:
    return math.sqrt(max(sobolev_inner(f, f, s).real, 0.0))


def pairing(f: SpectralField, g: SpectralField) -> complex:
    """Bilinear L2 pairing: integral of f*g = sum_k c_k(f) c_{-k}(g)."""
    check_compatible(f, g, "pairing")
    return complex(np.sum(f.coeffs * np.flip(g.coeffs)))


def derivative(f: SpectralField, axis: int) -> SpectralField:
    """Partial derivative along ``axis`` (multiplier 2 pi i k_axis)."""
    if not 0 <= axis < f.d:
        raise DomainError(f"axis {axis} outside 0..{f.d - 1}")
    k = wavenumbers(f.d, f.kmax)[axis]
    return f.scale_modes(2j * np.pi * k)


def gradient(f: SpectralField) -> tuple[SpectralField, ...]:
    return tuple(derivative(f, j) for j in range(f.d))


def laplacian(f: SpectralField) -> SpectralField:
    """Laplacian (multiplier -(2 pi |k|)^2)."""
    return f.scale_modes(-4.0 * np.pi**2 * k_squared(f.d, f.kmax))


# =============================================================================
# Mollification
# =============================================================================


def bump_profile(r: np.ndarray) -> np.ndarray:
    """exp(1 - 1/(1 - r^2)) inside the unit ball, 0 outside; equals 1 at r = 0."""
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    inside = r < 1.0
    ri = r[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ri * ri))
    return out


@lru_cache(maxsize=128)
def mollifier_symbol(d: int, kmax: int, n: int) -> np.ndarray:
    """Multiplier of j_n on the lattice.

    Level 0 means unmollified. Levels above kmax*sqrt(d) exceed every lattice
    wavenumber and act as the identity on the truncated lattice.
    """
    if n < 0:
        raise DomainError(f"mollification level must be >= 0, got {n}")
    if n == 0 or n > kmax * math.sqrt(d):
        sym = np.ones(lattice_shape(d, kmax))
    else:
        sym = bump_profile(np.sqrt(k_squared(d, kmax)) / n)
    sym.setflags(write=False)
    return sym


def mollify(f: SpectralField, n: int) -> SpectralField:
    return f.scale_modes(mollifier_symbol(f.d, f.kmax, n))


# =============================================================================
# Empirical measures and point evaluation
# =============================================================================


def _axis_phases(x: np.ndarray, kmax: int, sign: float) -> np.ndarray:
    k = np.arange(-kmax, kmax + 1, dtype=np.float64)
    return np.exp(sign * 2j * np.pi * np.outer(x, k))


def _as_points(points: Any, d: Optional[int] = None) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if d in (None, 1) else pts.reshape(1, -1)
    if d is not None and pts.shape[1] != d:
        raise ShapeError(f"points have dimension {pts.shape[1]}, expected {d}")
    return pts


def structure_factor(points: np.ndarray, kmax: int) -> np.ndarray:
    """sum_i exp(-2 pi i k.X_i) over the lattice, shape (2*kmax+1,)*d."""
    pts = _as_points(points)
    n, d = pts.shape
    size = 2 * kmax + 1
    out = np.zeros(lattice_shape(d, kmax), dtype=np.complex128)
    for start in range(0, n, _CHUNK):
        chunk = pts[start:start + _CHUNK]
        e = [_axis_phases(chunk[:, a], kmax, -1.0) for a in range(d)]
        if d == 1:
            out += e[0].sum(axis=0)
        elif d == 2:
            out += e[0].T @ e[1]
        else:
            pair = (e[0][:, :, None] * e[1][:, None, :]).reshape(len(chunk), size * size)
            out += (pair.T @ e[2]).reshape(size, size, size)
    return out


def embed_empirical(points: Any, kmax: int) -> SpectralField:
    """Coefficients of (1/N) sum_i delta_{X_i}; c_0 is set to exactly 1."""
    pts = _as_points(points)
    if pts.size == 0:
        raise DomainError("embed_empirical needs at least one point")
    if np.any(pts < 0.0) or np.any(pts >= 1.0):
        raise DomainError("points must lie in [0, 1)^d")
    coeffs = structure_factor(pts, kmax) / pts.shape[0]
    coeffs[_zero_index(pts.shape[1], kmax)] = 1.0
    return SpectralField(pts.shape[1], kmax, coeffs)


def evaluate_coeffs(coeffs: np.ndarray, kmax: int, points: np.ndarray) -> np.ndarray:
    """sum_k coeffs[k] exp(2 pi i k.x) at every point (complex)."""
    d = coeffs.ndim
    pts = _as_points(points, d)
    out = np.empty(pts.shape[0], dtype=np.complex128)
    for start in range(0, pts.shape[0], _CHUNK):
        chunk = pts[start:start + _CHUNK]
        e = [_axis_phases(chunk[:, a], kmax, 1.0) for a in range(d)]
        t = np.tensordot(e[0], coeffs, axes=(1, 0))
        for a in range(1, d):
            t = np.einsum("na...,na->n...", t, e[a])
        out[start:start + len(chunk)] = t
    return out


def evaluate_at(f: SpectralField, points: Any) -> np.ndarray:
    """Exact trigonometric-polynomial values of f at arbitrary points."""
    return evaluate_coeffs(f.coeffs, f.kmax, points)


# =============================================================================
# Grid transforms
# =============================================================================


def _grid_index(kmax: int, m: int) -> np.ndarray:
    return np.arange(-kmax, kmax + 1) % m


def coeffs_to_grid(coeffs: np.ndarray, m: int) -> np.ndarray:
    """Samples on the uniform grid with m points per axis (complex)."""
    d = coeffs.ndim
    kmax = (coeffs.shape[0] - 1) // 2
    if m < 2 * kmax + 1:
        raise ShapeError(f"grid of {m} points per axis cannot resolve kmax={kmax}")
    full = np.zeros((m,) * d, dtype=np.complex128)
    full[np.ix_(*([_grid_index(kmax, m)] * d))] = coeffs
    return sp_fft.ifftn(full, norm="forward")


def grid_to_coeffs(samples: np.ndarray, kmax: int) -> np.ndarray:
    """Lattice coefficients of uniform-grid samples, truncated to kmax."""
    m = samples.shape[0]
    if any(n != m for n in samples.shape):
        raise ShapeError(f"grid must be cubic, got shape {samples.shape}")
    if m < 2 * kmax + 1:
        raise ShapeError(f"grid of {m} points per axis cannot resolve kmax={kmax}")
    full = sp_fft.fftn(samples, norm="forward")
    return full[np.ix_(*([_grid_index(kmax, m)] * samples.ndim))]


def to_grid(f: SpectralField, m: Optional[int] = None) -> np.ndarray:
    """Grid samples of f at x_j = j/m (complex; take .real for real fields)."""
    return coeffs_to_grid(f.coeffs, 2 * f.kmax + 1 if m is None else m)


def from_grid(samples: np.ndarray, kmax: int) -> SpectralField:
    return SpectralField(samples.ndim, kmax, grid_to_coeffs(np.asarray(samples), kmax))


def grid_axes(d: int, m: int) -> tuple[np.ndarray, ...]:
    """Coordinate arrays of the m^d sample grid (ij indexing)."""
    axis = np.arange(m) / m
    return tuple(np.meshgrid(*([axis] * d), indexing="ij"))


def grid_minimum(f: SpectralField, oversample: int = 2) -> float:
    """Minimum of the real part of f on an oversampled grid."""
    m = int(sp_fft.next_fast_len(oversample * (2 * f.kmax + 1)))
    return float(to_grid(f, m).real.min())


def dealiased_product(
    f: SpectralField,
    g: SpectralField,
    kmax_out: Optional[int] = None,
) -> SpectralField:
    """Projection of f*g onto the lattice kmax_out, free of aliasing."""
    if f.d != g.d:
        raise ShapeError(f"dealiased_product: dimensions differ ({f.d} vs {g.d})")
    kout = f.kmax if kmax_out is None else kmax_out
    m = product_grid_size(f.kmax, g.kmax, kout)
    prod = coeffs_to_grid(f.coeffs, m) * coeffs_to_grid(g.coeffs, m)
    return SpectralField(f.d, kout, grid_to_coeffs(prod, kout))


def lattice_convolution(a: np.ndarray, b: np.ndarray, kmax_out: int) -> np.ndarray:
    """(a * b)_k = sum_l a_{k-l} b_l for |k| <= kmax_out; a and b may sit on different lattices."""
    full = signal.fftconvolve(a, b, mode="full")
    kfull = (full.shape[0] - 1) // 2
    if kmax_out <= kfull:
        lo = kfull - kmax_out
        return full[(slice(lo, lo + 2 * kmax_out + 1),) * full.ndim]
    return np.pad(full, kmax_out - kfull)
