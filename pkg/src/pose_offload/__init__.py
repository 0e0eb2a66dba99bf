"""Arm-raise takeoff detection with local or edge-offloaded pose processing."""

__version__ = "0.1.0"
