"""Directed polymers in random environment: transfer-matrix engine, chaos
expansion checks, coarse-graining diagnostics and experiment drivers."""
from .environment import (
    DisorderLaw,
    DomainError,
    EnvironmentBatch,
    EnvironmentField,
    TabulatedField,
    child_seed,
    log_mgf,
)
from .polymer import (
    FreeEnergyEstimate,
    PartitionSlice,
    Tube,
    Window,
    free_energy_estimate,
    partition_function,
    point_to_point,
)

__all__ = [
    "DisorderLaw",
    "DomainError",
    "EnvironmentBatch",
    "EnvironmentField",
    "TabulatedField",
    "child_seed",
    "log_mgf",
    "FreeEnergyEstimate",
    "PartitionSlice",
    "Tube",
    "Window",
    "free_energy_estimate",
    "partition_function",
    "point_to_point",
]
