"""Exact and second-order TCL dynamics of energy transport in an anisotropic spin lattice."""

__version__ = "0.1.0"

from .exceptions import ConfigError, DimensionError, DomainError, NumericalError, PictureError
from .model import (Direction, HamiltonianSet, LatticeSpec, ModelParams, Partition, Topology,
                    build_hamiltonians, commutator_check, partition_model)

__all__ = [
    "ConfigError", "DimensionError", "DomainError", "NumericalError", "PictureError",
    "Direction", "HamiltonianSet", "LatticeSpec", "ModelParams", "Partition", "Topology",
    "build_hamiltonians", "commutator_check", "partition_model",
]
