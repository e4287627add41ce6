"""Error types shared across the package."""


class ShearspecError(Exception):
    """Base class for package errors."""


class DomainError(ShearspecError, ValueError):
    """Invalid argument domain (k=0 where forbidden, M<=0, ...)."""


class ZeroModeViolationError(DomainError):
    """Nonzero k=0 content passed to an operator that excludes it.

    The x-averaged dynamics are handled by the `zeromode` module.
    """


class InvalidFieldError(ShearspecError, ValueError):
    """Non-finite amplitudes in a spectral field."""


class IntegrationFailureError(ShearspecError, RuntimeError):
    """Adaptive integrator could not meet its tolerance."""


class ContractionFailureError(ShearspecError, RuntimeError):
    """Perturbative operator series does not contract (profile too large)."""


class ConstructionFailureError(ShearspecError, RuntimeError):
    """Data-construction procedure found no admissible output."""


class OperatorPositivityError(ShearspecError, RuntimeError):
    """A quadratic form expected to be positive failed the runtime check."""
