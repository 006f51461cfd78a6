"""
Exception types raised by the solver, the reduced-order model and the CLI.
"""


class TrtRomError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TrtRomError):
    """Invalid or unreadable run configuration."""


class NumericalError(TrtRomError):
    """Non-convergence, singular systems or non-finite values."""


class DomainError(NumericalError, ValueError):
    """Argument outside the domain of a physical function."""


class LayoutError(TrtRomError, ValueError):
    """Index out of range or array shape inconsistent with the phase-space layout."""


class PersistenceError(TrtRomError):
    """Failure reading or writing a snapshot database or basis file."""


class CorruptFileError(PersistenceError):
    """File is truncated or does not carry the expected magic bytes."""


class FingerprintMismatchError(PersistenceError):
    """File was written on a different grid than the one requested."""
