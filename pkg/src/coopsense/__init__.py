"""Cooperative perception for connected vehicles.

Frame transforms with pose uncertainty, a compact perception-message codec,
multi-target tracking, cost-map planning and a scenario simulator.
"""

from importlib import resources

__version__ = "0.1.0"


def data_path(*parts: str):
    """Path to a bundled data file (presets, sweeps, message fixtures)."""
    return resources.files(__name__).joinpath("data", *parts)
