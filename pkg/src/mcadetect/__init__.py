"""Link-level simulator for memristive-crossbar massive MIMO detectors."""

__version__ = "0.1.0"

from .errors import ConfigError, SimulationError  # noqa: E402

__all__ = ["ConfigError", "SimulationError", "__version__"]
