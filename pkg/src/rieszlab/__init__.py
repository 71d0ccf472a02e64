"""Simulation and diagnostics for one-dimensional Riesz gases and perturbed lattices."""

__version__ = "0.1.0"

from .core import Configuration, ModelParams, RandomStream, Window, count, restrict, translate  # noqa: E402

__all__ = ["Configuration", "ModelParams", "RandomStream", "Window", "count", "restrict", "translate"]
