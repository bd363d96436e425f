"""Desk-scale simulator for coordinated container migration and BS handover."""

from .model import load_scenario
from .sim import run

__version__ = "0.1.0"

__all__ = ["load_scenario", "run", "__version__"]
