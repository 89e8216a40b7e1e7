"""Exception hierarchy.

Every error carries a short machine-readable ``reason`` string and the
process exit code the command line front end maps it to.
"""

from __future__ import annotations

__all__ = [
    "HelmpropError",
    "UsageError",
    "ConfigError",
    "DomainError",
    "CoverageError",
    "ShapeError",
    "ResolutionError",
    "FormatError",
    "SingularityError",
    "NotInRangeError",
    "ConvergenceError",
    "MicrolocalSupportError",
    "RidgeError",
]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MICROLOCAL = 2
EXIT_DEGENERATE = 3
EXIT_IO = 4


class HelmpropError(Exception):
    """Base class. ``reason`` is stable and meant for scripts."""

    reason = "error"
    exit_code = EXIT_USAGE

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def __str__(self) -> str:
        return f"{self.reason}: {self.args[0]}"


class UsageError(HelmpropError):
    reason = "usage"


class ConfigError(HelmpropError):
    reason = "config"


class DomainError(HelmpropError):
    reason = "domain"


class CoverageError(HelmpropError):
    reason = "coverage"


class ShapeError(HelmpropError):
    reason = "shape"


class ResolutionError(HelmpropError):
    reason = "resolution"


class FormatError(HelmpropError):
    reason = "format"
    exit_code = EXIT_IO


class SingularityError(HelmpropError):
    """Raised at degenerate frequencies, where sigma(xi) lies in G P0."""

    reason = "degenerate"
    exit_code = EXIT_DEGENERATE


class NotInRangeError(HelmpropError):
    reason = "not-in-range"
    exit_code = EXIT_DEGENERATE


class ConvergenceError(HelmpropError):
    reason = "no-convergence"
    exit_code = EXIT_DEGENERATE


class MicrolocalSupportError(HelmpropError):
    """Spectral mass outside the sheet a factorized operator is valid on."""

    reason = "microlocal-support"
    exit_code = EXIT_MICROLOCAL

    def __init__(self, message: str, fraction: float, **details):
        super().__init__(message, fraction=fraction, **details)
        self.fraction = fraction


class RidgeError(HelmpropError):
    reason = "ridge"
