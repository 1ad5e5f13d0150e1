"""Exact pointer statistics for pre- and postselected quantum measurements at any coupling strength."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    GaussianPointer,
    Observable,
    PPSPair,
    Readout,
    gamma_weights,
    no_postselect_shift,
    normalize_observable,
    postselect_readout,
    strong_limit_shift,
    weak_limit_readout,
    weak_validity_margin,
    weak_value,
)
from .errors import *  # noqa: E402,F401,F403

__all__ = [
    "GaussianPointer",
    "Observable",
    "PPSPair",
    "Readout",
    "gamma_weights",
    "no_postselect_shift",
    "normalize_observable",
    "postselect_readout",
    "strong_limit_shift",
    "weak_limit_readout",
    "weak_validity_margin",
    "weak_value",
]
