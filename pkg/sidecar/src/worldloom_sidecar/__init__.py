"""Reference stub services for the worldloom backend wire protocol."""

from .config import SidecarConfig
from .conformance import ConformanceReport, FixtureResult, conformance
from .service import create_app, serve

__version__ = "0.1.0"

__all__ = [
    "ConformanceReport",
    "FixtureResult",
    "SidecarConfig",
    "conformance",
    "create_app",
    "serve",
    "__version__",
]
