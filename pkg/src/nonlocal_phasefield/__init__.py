"""Nonlocal phase-field simulator: a heat equation linearly coupled to a
nonlocal Allen-Cahn type ODE with a singular potential."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    GuardBandError,
    NumericalError,
    PureStateError,
    SnapshotError,
)
from .grid import DomainGrid, ScalarField, build_grid
from .kernel import KernelSpec, NonlocalOperator, Projector
from .potential import DoubleLog, HardLog, Potential

__all__ = [
    "ConfigError",
    "DomainGrid",
    "DoubleLog",
    "GuardBandError",
    "HardLog",
    "KernelSpec",
    "NonlocalOperator",
    "NumericalError",
    "Potential",
    "Projector",
    "PureStateError",
    "ScalarField",
    "SnapshotError",
    "build_grid",
]
