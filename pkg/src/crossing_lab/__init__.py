"""Killed random walk in an i.i.d. random potential: exact solves, annealed estimators, renewal structure."""

__version__ = "0.1.0"

from .potential import INF, Environment, PotentialDistribution, make_distribution  # noqa: E402

__all__ = ["__version__", "INF", "Environment", "PotentialDistribution", "make_distribution"]
