"""Dynamical branching random walks on Cayley graphs."""

__version__ = "0.1.0"

from .groups import (  # noqa: E402
    FreeGroup,
    HomTree,
    LatticeZd,
    StepLaw,
    n_step_distribution,
    return_probability,
)
from .gwtree import GWTree, OffspringLaw, sample_tree  # noqa: E402
from .rng import RandomStream  # noqa: E402
from .spectral import classify, estimate_rho, series_condition  # noqa: E402

__all__ = [
    "FreeGroup",
    "GWTree",
    "HomTree",
    "LatticeZd",
    "OffspringLaw",
    "RandomStream",
    "StepLaw",
    "classify",
    "estimate_rho",
    "n_step_distribution",
    "return_probability",
    "sample_tree",
    "series_condition",
]
