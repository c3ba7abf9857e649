"""Exception hierarchy for the simulator and the verification laboratory."""

from typing import Optional


class ReptonError(Exception):
    """Base class for every error raised by repton."""


class ConfigurationError(ReptonError, ValueError):
    """Invalid configuration or mismatched dimensions."""


class PreconditionError(ReptonError, ValueError):
    """An operation was called outside of its documented preconditions."""


class UsageError(ReptonError, ValueError):
    """An API was called with an inconsistent combination of arguments."""


class DomainError(ReptonError, ValueError):
    """A singular potential was evaluated outside of its domain."""


class PositivityViolationError(DomainError):
    """A density went nonpositive where a singular family needs positivity.

    Attributes:
        index: Grid index of the first violating point.
        location: Reference coordinate s in [0, 1] of that point.
        value: The offending density value.
    """

    def __init__(self, index: int, location: float, value: float):
        self.index = index
        self.location = location
        self.value = value
        super().__init__(
            f"Density {value:.6g} is not positive at grid index {index} "
            f"(s = {location:.6f})"
        )


class BlowUpError(ReptonError, RuntimeError):
    """The state became non-finite or overflowed."""

    def __init__(self, step: int, detail: Optional[str] = None):
        self.step = step
        message = f"Blow-up detected at step {step}"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class BoundaryCollapseError(ReptonError, RuntimeError):
    """The moving boundaries crossed (L_minus >= L_plus)."""

    def __init__(self, l_minus: float, l_plus: float):
        self.l_minus = l_minus
        self.l_plus = l_plus
        super().__init__(
            f"Boundary collapse: L_minus={l_minus:.6g} >= L_plus={l_plus:.6g}"
        )
