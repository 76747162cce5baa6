"""Exception hierarchy shared across the package."""


class FloquetCombError(Exception):
    """Base class for every error raised by floquetcomb."""


class DomainError(FloquetCombError, ValueError):
    """Argument outside the documented working range."""


class TruncationError(FloquetCombError, ValueError):
    """A series truncation is too narrow for the requested accuracy."""


class PoleError(FloquetCombError, ZeroDivisionError):
    """Undamped resonance: a response denominator vanishes."""


class ConfigError(FloquetCombError, ValueError):
    """Invalid run configuration."""


class NumericalError(FloquetCombError, RuntimeError):
    """Generic numerical failure (eigensolver, integrator, root finder)."""


class DivergenceError(NumericalError):
    """Time integration produced non-finite values or underflowed its step."""


class TransientError(NumericalError):
    """Integration horizon too short to discard the start-up transient."""


class WindowingError(NumericalError):
    """Sampled record does not span an integer number of periods."""


class AlignmentError(NumericalError):
    """Spectrum bins do not fall on the comb grid."""


class SolverError(NumericalError):
    """Iterative solver failed to converge."""

    def __init__(self, message, residual_trace=None):
        super().__init__(message)
        self.residual_trace = list(residual_trace or [])


class NoThresholdError(NumericalError):
    """No antidamping is reachable, so no Hopf threshold exists."""


class StateError(FloquetCombError, RuntimeError):
    """Operation called on an object in an unusable state."""
