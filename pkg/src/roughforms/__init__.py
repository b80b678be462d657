"""Numerics for rough differential forms on simplicial chains."""

__version__ = "0.1.0"

from . import (
    cli,
    embedding,
    errors,
    exprlang,
    fitting,
    forms,
    gaussian,
    geometry,
    sampling,
    sewing,
    subdivision,
)

__all__ = [
    "cli",
    "embedding",
    "errors",
    "exprlang",
    "fitting",
    "forms",
    "gaussian",
    "geometry",
    "sampling",
    "sewing",
    "subdivision",
]
