"""Exception hierarchy for fluctlab.

Validation-type errors (config, shapes, domains, insufficient data) map to
exit code 2; numerical failures map to exit code 3 and always carry the
module, the operation and a reference to the offending state.
"""

from enum import IntEnum
from typing import Any, Iterable, Optional


class ExitCode(IntEnum):
    """Process exit codes of the ``fluctlab`` command."""

    OK = 0
    VALIDATION = 2
    NUMERICAL = 3


class FluctlabError(Exception):
    """Base for all fluctlab errors."""

    exit_code: ExitCode = ExitCode.VALIDATION


class ConfigValidationError(FluctlabError):
    """Configuration failed schema or semantic validation.

    ``errors`` holds every violated constraint, not just the first one.
    """

    def __init__(
        self,
        message: str,
        *,
        field: Optional[str] = None,
        errors: Iterable[str] = (),
    ):
        self.field = field
        self.errors = tuple(errors)
        prefix = f"[{field}] " if field else ""
        super().__init__(f"{prefix}{message}")


class ShapeError(FluctlabError):
    """Lattice or grid shapes are incompatible."""


class DomainError(FluctlabError):
    """An argument lies outside the domain of an operation."""


class InsufficientDataError(FluctlabError):
    """Too few usable rows to fit a rate."""

    def __init__(self, usable: int, required: int = 3):
        self.usable = usable
        self.required = required
        super().__init__(
            f"Rate fit needs at least {required} usable rows, got {usable}"
        )


class NumericalError(FluctlabError):
    """A numerical pipeline step failed."""

    exit_code = ExitCode.NUMERICAL

    def __init__(
        self,
        message: str,
        *,
        module: str,
        operation: str,
        state: Optional[dict[str, Any]] = None,
    ):
        self.message = message
        self.module = module
        self.operation = operation
        self.state: dict[str, Any] = dict(state or {})
        super().__init__(self._render())

    def _render(self) -> str:
        text = f"{self.module}.{self.operation}: {self.message}"
        if self.state:
            details = ", ".join(f"{k}={v!r}" for k, v in self.state.items())
            text = f"{text} ({details})"
        return text

    def add_context(self, **state: Any) -> "NumericalError":
        """Attach more state (replica id, step, ...) and refresh the message."""
        self.state.update(state)
        self.args = (self._render(),)
        return self

    def __str__(self) -> str:
        return self._render()


class SingularityError(NumericalError):
    """Two particles coincide under a singular interaction kernel."""

    def __init__(
        self,
        pair: tuple[int, int],
        *,
        module: str = "kernels",
        operation: str = "drift_at_particles",
        distance: Optional[float] = None,
    ):
        self.pair = (int(pair[0]), int(pair[1]))
        state: dict[str, Any] = {"pair": self.pair}
        if distance is not None:
            state["distance"] = distance
        super().__init__(
            f"particles {self.pair[0]} and {self.pair[1]} collide",
            module=module,
            operation=operation,
            state=state,
        )


class InstabilityError(NumericalError):
    """Coefficients became non-finite."""

    def __init__(
        self,
        mode: tuple[int, ...],
        *,
        module: str,
        operation: str,
        t: Optional[float] = None,
    ):
        self.mode = tuple(int(m) for m in mode)
        state: dict[str, Any] = {"mode": self.mode}
        if t is not None:
            state["t"] = t
        super().__init__(
            f"non-finite coefficient at mode {self.mode}",
            module=module,
            operation=operation,
            state=state,
        )


class PositivityError(NumericalError):
    """A density dropped below the positivity tolerance."""

    def __init__(self, time: float, value: float, *, tol: float):
        self.time = time
        self.value = value
        super().__init__(
            f"density minimum {value:.3e} below -{tol:.1e}",
            module="meanfield",
            operation="solve_fp",
            state={"t": time},
        )


class ConsistencyError(NumericalError):
    """Two evaluation paths of the same quantity disagree."""

    def __init__(self, difference: float, *, module: str, operation: str, tol: float):
        self.difference = difference
        super().__init__(
            f"evaluation paths differ by {difference:.3e} (tolerance {tol:.1e})",
            module=module,
            operation=operation,
            state={"difference": difference},
        )
