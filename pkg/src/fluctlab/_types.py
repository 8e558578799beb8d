"""Domain types shared across fluctlab modules."""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional

from fluctlab._exceptions import ConfigValidationError


class DriftVariant(str, Enum):
    """Interaction kernel families."""

    SMOOTH = "smooth"
    BIOT_SAVART = "biot_savart"
    COULOMB = "coulomb"


class Normalization(str, Enum):
    """Particle drift prefactor: 1/N sum or plain sum over j != i."""

    MEAN_FIELD = "mean_field"
    UNSCALED = "unscaled"


class Periodization(str, Enum):
    """Real-space evaluation path of singular periodic kernels."""

    EWALD = "ewald"
    IMAGES = "images"


class Rho0Mode(str, Enum):
    """Initial law of the limiting fluctuation field."""

    ZERO = "zero"
    DIAGONAL = "diagonal"
    CLT = "clt"


class InitMode(str, Enum):
    """Initial particle placement."""

    IID = "iid"
    LATTICE = "lattice"


class OuterMap(str, Enum):
    """Outer maps of cylindrical functionals."""

    LINEAR = "linear"
    QUADRATIC = "quadratic"
    TANH_PRODUCT = "tanh_product"
    GAUSS_BUMP = "gauss_bump"


class PositivityPolicy(str, Enum):
    ERROR = "error"
    WARN = "warn"


def default_lambda(d: int) -> float:
    """Smallest half-integer strictly above 3d/2."""
    return 1.5 * d + 0.5


@dataclass(frozen=True)
class SobolevIndices:
    """Regularity indices lambda, lambda' and the fluctuation index -(lambda+2).

    ``lam`` stands for lambda (a reserved word); serialization uses the
    original key names.
    """

    d: int
    lam: float
    lam_prime: float

    def __post_init__(self) -> None:
        if self.d not in (1, 2, 3):
            raise ConfigValidationError(
                f"dimension must be 1, 2 or 3, got {self.d}", field="model.d"
            )
        if not self.lam > 1.5 * self.d:
            raise ConfigValidationError(
                f"lambda = {self.lam} violates lambda > 1.5*d (d = {self.d})",
                field="spectral.lambda",
            )
        if not self.lam_prime > self.lam + 1:
            raise ConfigValidationError(
                f"lambda_prime = {self.lam_prime} violates lambda_prime > lambda + 1",
                field="spectral.lambda_prime",
            )

    @classmethod
    def for_dimension(
        cls,
        d: int,
        lam: Optional[float] = None,
        lam_prime: Optional[float] = None,
    ) -> "SobolevIndices":
        lam = default_lambda(d) if lam is None else lam
        lam_prime = lam + 1.5 if lam_prime is None else lam_prime
        return cls(d=d, lam=lam, lam_prime=lam_prime)

    @property
    def s_fluct(self) -> float:
        """Index of the space the fluctuation field lives in."""
        return -(self.lam + 2.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "d": self.d,
            "lambda": self.lam,
            "lambda_prime": self.lam_prime,
            "s_fluct": self.s_fluct,
        }
