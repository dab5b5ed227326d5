"""Fluid-shell interaction solver on a fixed periodic reference slab."""

__version__ = "0.1.0"
