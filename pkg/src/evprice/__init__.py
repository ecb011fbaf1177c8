"""Congestion-aware EV charging-station prices from Monte-Carlo dual decomposition."""

__version__ = "0.1.0"
