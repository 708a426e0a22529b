"""Exception hierarchy shared by every supplyatlas module.

All errors raised deliberately by this package derive from
:class:`SupplyAtlasError`, so callers can catch one type at the CLI or
API boundary and map it to an exit code or HTTP status.
"""

from __future__ import annotations


class SupplyAtlasError(Exception):
    """Base class for errors raised by this package."""


class ParseError(SupplyAtlasError):
    """A data file could not be parsed.

    Carries the 1-based line number of the offending row when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigurationError(SupplyAtlasError):
    """Invalid configuration value, key, or system-name wiring."""


class DomainError(SupplyAtlasError):
    """Input violates a mathematical precondition of an operation."""


class NumericalError(SupplyAtlasError):
    """A numeric routine could not meet its accuracy contract."""


class UnknownFacilityError(SupplyAtlasError, KeyError):
    """A facility id was not found in the registry."""

    def __str__(self):
        return f"unknown facility id: {self.args[0]}" if self.args else "unknown facility id"


class UnknownActivityError(SupplyAtlasError, KeyError):
    """An activity code has no embedded vector."""

    def __str__(self):
        return f"unknown activity code: {self.args[0]}" if self.args else "unknown activity code"


class PipelineError(SupplyAtlasError):
    """A pipeline stage could not run (missing upstream, lock held, ...)."""


class ArtifactCorruptionError(PipelineError):
    """An artifact on disk does not match its recorded content hash."""


class GeocoderTransportError(SupplyAtlasError):
    """The geocoding backend could not be reached or answered abnormally."""
