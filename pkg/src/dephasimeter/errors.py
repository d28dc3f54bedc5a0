"""Exception hierarchy shared by all modules.

Every error raised deliberately by the package derives from
:class:`DephasimeterError`; the command-line front end maps these to exit
code 1 and configuration problems to exit code 2.
"""

from __future__ import annotations


class DephasimeterError(Exception):
    """Base class for domain errors."""


class DomainError(DephasimeterError, ValueError):
    """An argument lies outside the physically meaningful domain."""


class QuadratureError(DephasimeterError):
    """Numerical integration did not reach the requested accuracy."""


class ResolutionError(DephasimeterError):
    """A grid or time step cannot resolve the requested quantity."""


class RangeError(DephasimeterError, ValueError):
    """A requested time lies outside a sampled trajectory."""


class ValidityError(DephasimeterError):
    """The Gaussian phase-space approximation is used far outside its band."""


class NormalizationError(DephasimeterError):
    """A density matrix lost normalization beyond tolerance."""


class OptimizationError(DephasimeterError):
    """A one-dimensional search could not bracket a minimum.

    Attributes
    ----------
    profile : tuple of (ndarray, ndarray) or None
        Coarse-scan abscissae and objective values, for diagnosis.
    """

    def __init__(self, message: str, profile=None):
        super().__init__(message)
        self.profile = profile


class ConfigError(Exception):
    """Invalid user configuration (exit code 2 in the CLI)."""
