"""Dissipative-qutrit-mediated charging of finite-dimensional quantum batteries."""

from .model import BatteryKind, BatteryModel, ChargerParams
from .dynamics import LindbladGenerator, Trajectory

__version__ = "0.1.0"

__all__ = [
    "BatteryKind",
    "BatteryModel",
    "ChargerParams",
    "LindbladGenerator",
    "Trajectory",
    "__version__",
]
