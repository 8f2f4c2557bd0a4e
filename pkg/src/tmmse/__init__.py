"""Team MMSE receive combining for cell-free massive MIMO uplinks."""

__version__ = "0.1.0"

from .config import ConfigurationError, CorrelationModel, SystemConfig, dbm_to_watt  # noqa: E402

__all__ = ["ConfigurationError", "CorrelationModel", "SystemConfig", "dbm_to_watt", "__version__"]
