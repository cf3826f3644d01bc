"""Exception hierarchy shared by every module of the toolkit."""


class TlroaError(Exception):
    """Base class for all toolkit errors."""


class InputError(TlroaError, ValueError):
    """Invalid user input or configuration (CLI exit code 2)."""


class ComputationError(TlroaError, RuntimeError):
    """A numerical procedure failed on valid input (CLI exit code 1)."""


# core model
class SingularInertia(ComputationError):
    pass


class OutOfWindow(InputError):
    pass


class DegenerateNetwork(InputError):
    pass


class NonConvergent(ComputationError):
    pass


# network
class InsufficientData(InputError):
    pass


class NonPositiveSlope(ComputationError):
    pass


class ScanFormatError(InputError):
    pass


# integration
class StepFailure(ComputationError):
    pass


class NonFiniteState(ComputationError):
    pass


class DivergenceGuard(ComputationError):
    pass


class InvalidFaultWindow(InputError):
    pass


# region of attraction
class NoConvergence(ComputationError):
    pass


class NotHurwitz(ComputationError):
    pass


class SeedNotAttracted(ComputationError):
    pass


class RefinementDepthExceeded(ComputationError):
    """Raised with the partial boundary attached as ``.partial``."""

    def __init__(self, message, partial=None, diagnostics=None):
        super().__init__(message)
        self.partial = partial
        self.diagnostics = diagnostics or {}


class ImmediateExit(ComputationError):
    pass


class BoundaryMismatch(InputError):
    pass
