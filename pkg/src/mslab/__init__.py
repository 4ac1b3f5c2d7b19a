"""Numerical laboratory for magnetic Schrodinger operators on box grids."""

__version__ = "0.1.0"

from ._backend import active_backend  # noqa: F401
