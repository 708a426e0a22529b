"""Decision support for locating suppliers around a facility.

The package derives supplier relations from national input-output
tables, embeds products by co-export behaviour to score how close two
activities sit, and recommends nearby facilities either carrying the
needed activity directly or one proximate to it.
"""

from .config import EngineConfig, load_config
from .errors import (
    ArtifactCorruptionError,
    ConfigurationError,
    DomainError,
    GeocoderTransportError,
    NumericalError,
    ParseError,
    PipelineError,
    SupplyAtlasError,
    UnknownActivityError,
    UnknownFacilityError,
)

__version__ = "0.1.0"

__all__ = [
    "EngineConfig",
    "load_config",
    "SupplyAtlasError",
    "ParseError",
    "ConfigurationError",
    "DomainError",
    "NumericalError",
    "UnknownFacilityError",
    "UnknownActivityError",
    "PipelineError",
    "ArtifactCorruptionError",
    "GeocoderTransportError",
    "__version__",
]
