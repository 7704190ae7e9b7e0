"""Exception types raised across the package."""


class KSGraphError(Exception):
    """Base class for all package errors."""


class InputError(KSGraphError, ValueError):
    """Malformed or out-of-range input."""


class ConstructionError(KSGraphError):
    """A similarity graph could not be built from the given distances."""


class UnsupportedSizeError(KSGraphError, ValueError):
    """The closed-form path does not cover this sample size."""


class DegenerateInputError(KSGraphError):
    """The permutation null is degenerate (no variability to test against)."""


class SimulationError(KSGraphError):
    """A simulation replicate failed; the message names the replicate."""
