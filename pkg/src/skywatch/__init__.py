"""skywatch: single-host sky-survey catalog service.

Per-exposure catalogs are cross-matched to persistent star identities,
normalized against standard stars, scored by a sliding-window transient
ensemble, served from a one-night in-memory store, archived as compressed
columnar night segments, and queried through one small query language over
both stores.
"""

__version__ = "0.1.0"

from .aql import parse as parse_aql
from .detect import DetectorConfig
from .pipeline import NightService, ServiceConfig
from .simgen import GenConfig

__all__ = [
    "__version__",
    "parse_aql",
    "DetectorConfig",
    "NightService",
    "ServiceConfig",
    "GenConfig",
]
