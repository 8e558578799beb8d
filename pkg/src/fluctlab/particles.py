"""Euler-Maruyama integration of the N-particle system on the torus.

dX^i = b(X^i, mu^N) dt + sigma dB^i with b = K * mu^N, positions wrapped
into [0, 1)^d after every step.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np
from scipy import fft as sp_fft

from fluctlab._exceptions import DomainError, SingularityError
from fluctlab._types import InitMode
from fluctlab.kernels import DriftModel, drift_at_particles, find_collision
from fluctlab.spectral import SpectralField, embed_empirical, evaluate_at, grid_axes, to_grid

logger = logging.getLogger(__name__)

# Tolerance on negative grid values of an initial density.
NEGATIVE_DENSITY_TOL = 1e-10

# Envelope inflation over the oversampled grid maximum.
_ENVELOPE_MARGIN = 1.05


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Positions of one replica plus its random stream.

    ``displacement`` accumulates the unwrapped increments since t = 0.
    """

    positions: np.ndarray
    t: float = 0.0
    replica_id: int = 0
    rng: Optional[np.random.Generator] = field(default=None, repr=False)
    displacement: Optional[np.ndarray] = field(default=None, repr=False)
    init_mode: InitMode = InitMode.IID

    def __post_init__(self) -> None:
        pos = np.array(self.positions, dtype=np.float64)
        if pos.ndim == 1:
            pos = pos.reshape(-1, 1)
        if pos.shape[0] < 1:
            raise DomainError("an ensemble needs N >= 1 particles")
        if np.any(pos < 0.0) or np.any(pos >= 1.0):
            raise DomainError("particle coordinates must lie in [0, 1)")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        disp = np.zeros_like(pos) if self.displacement is None else np.array(self.displacement, dtype=np.float64)
        disp.setflags(write=False)
        object.__setattr__(self, "displacement", disp)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class Snapshot:
    t: float
    positions: np.ndarray = field(repr=False)


def wrap(x: np.ndarray) -> np.ndarray:
    """Map coordinates into [0, 1)."""
    out = x - np.floor(x)
    out[out >= 1.0] -= 1.0
    return out


def validate_distinct(positions: np.ndarray, tol: float = 1e-12) -> None:
    """Raise if two particles coincide on the torus."""
    if len(positions) < 2:
        return
    hit = find_collision(np.asarray(positions, dtype=np.float64), tol)
    if hit is not None:
        raise SingularityError(
            (hit[0], hit[1]), module="particles", operation="validate_distinct", distance=hit[2]
        )


# =============================================================================
# Initial sampling
# =============================================================================


def _is_uniform(density: SpectralField) -> bool:
    rest = density.coeffs.copy()
    rest[(density.kmax,) * density.d] = 0.0
    return not np.any(rest)


def sample_initial(
    density: SpectralField,
    n: int,
    rng: np.random.Generator,
    *,
    replica_id: int = 0,
    singular: bool = False,
    oversample: int = 4,
) -> ParticleEnsemble:
    """N i.i.d. draws from ``density`` by rejection against its grid maximum."""
    if n < 1:
        raise DomainError(f"particle count must be >= 1, got {n}")
    if abs(density.mean - 1.0) > 1e-10:
        raise DomainError(f"initial density must have c_0 = 1, got {density.mean}")
    if not density.is_hermitian(1e-10):
        raise DomainError("initial density must be real-valued")
    d = density.d

    if _is_uniform(density):
        positions = rng.random((n, d))
    else:
        m = int(sp_fft.next_fast_len(oversample * (2 * density.kmax + 1)))
        grid = to_grid(density, m).real
        gmin = float(grid.min())
        if gmin < -NEGATIVE_DENSITY_TOL:
            raise DomainError(f"initial density is negative on the sampling grid (min {gmin:.3e})")
        envelope = _ENVELOPE_MARGIN * float(grid.max())
        chunks: list[np.ndarray] = []
        have = 0
        while have < n:
            batch = max(64, int(1.5 * (n - have) * envelope) + 1)
            proposals = rng.random((batch, d))
            u = rng.random(batch)
            values = evaluate_at(density, proposals).real
            if np.any(values > envelope):
                logger.warning("rejection envelope %.4f exceeded (max %.4f)", envelope, values.max())
            keep = proposals[u * envelope < values][: n - have]
            chunks.append(keep)
            have += len(keep)
        positions = np.concatenate(chunks, axis=0)

    if singular:
        validate_distinct(positions)
    return ParticleEnsemble(positions, 0.0, replica_id, rng, init_mode=InitMode.IID)


def sample_lattice(
    d: int,
    n: int,
    *,
    replica_id: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> ParticleEnsemble:
    """Quadrature lattice (i/M)_i with M^d = N points."""
    m = round(n ** (1.0 / d))
    if m**d != n:
        raise DomainError(f"lattice initialization needs N to be a perfect {d}-th power, got {n}")
    positions = np.stack(grid_axes(d, m), axis=-1).reshape(-1, d)
    return ParticleEnsemble(positions, 0.0, replica_id, rng, init_mode=InitMode.LATTICE)


# =============================================================================
# Time stepping
# =============================================================================


def step_em(
    ens: ParticleEnsemble,
    model: DriftModel,
    dt: float,
    sigma: float,
    *,
    noise: Optional[np.ndarray] = None,
) -> ParticleEnsemble:
    """One Euler-Maruyama step; ``noise`` injects the standard normals explicitly."""
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if sigma < 0:
        raise DomainError(f"sigma must be non-negative, got {sigma}")
    try:
        drift = drift_at_particles(model, ens.positions, ens.t)
    except SingularityError as exc:
        raise exc.add_context(replica=ens.replica_id, t=ens.t)

    increment = drift * dt
    if noise is not None:
        xi = np.asarray(noise, dtype=np.float64).reshape(ens.positions.shape)
        increment = increment + sigma * math.sqrt(dt) * xi
    elif sigma > 0:
        if ens.rng is None:
            raise DomainError("ensemble has no random stream for the noise draw")
        increment = increment + sigma * math.sqrt(dt) * ens.rng.standard_normal(ens.positions.shape)

    return replace(
        ens,
        positions=wrap(ens.positions + increment),
        t=ens.t + dt,
        displacement=ens.displacement + increment,
    )


def simulate(
    ens: ParticleEnsemble,
    model: DriftModel,
    sigma: float,
    dt: float,
    n_steps: int,
    *,
    record_every: int = 0,
) -> tuple[ParticleEnsemble, list[Snapshot]]:
    """Run ``n_steps`` EM steps, keeping a snapshot every ``record_every`` steps."""
    snapshots: list[Snapshot] = []
    if record_every:
        snapshots.append(Snapshot(ens.t, ens.positions))
    for step in range(1, n_steps + 1):
        ens = step_em(ens, model, dt, sigma)
        if record_every and step % record_every == 0:
            snapshots.append(Snapshot(ens.t, ens.positions))
    return ens, snapshots


# =============================================================================
# Fluctuation field
# =============================================================================


def fluctuation_field(ens: ParticleEnsemble, mu: SpectralField) -> SpectralField:
    """rho^N = sqrt(N) (mu^N - mu) with c_0 = 0 exactly."""
    if abs(mu.mean - 1.0) > 1e-12:
        raise DomainError(f"limit density must have c_0 = 1, got {mu.mean}")
    empirical = embed_empirical(ens.positions, mu.kmax)
    rho = (empirical - mu) * math.sqrt(ens.n)
    return rho.with_mean(0.0)


def ensemble_summary(ens: ParticleEnsemble) -> dict[str, Any]:
    return {
        "n": ens.n,
        "d": ens.d,
        "t": ens.t,
        "replica": ens.replica_id,
        "init": ens.init_mode.value,
    }
