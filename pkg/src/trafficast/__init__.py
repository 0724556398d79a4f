"""Multi-step forecasting of network-link traffic from FTS transfer features."""

__version__ = "0.1.0"
