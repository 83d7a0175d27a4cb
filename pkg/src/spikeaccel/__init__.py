"""Bit-exact golden model and cycle-level simulator for a quantized
spiking transformer on a 512x8 shared-weight PE array."""

from . import dataflow, golden, harness, memory, network, neuron, pe, tensors
from .errors import (
    BudgetError,
    CapacityError,
    FoldError,
    PolicyError,
    PrecisionError,
    ScheduleError,
    ShapeError,
    SimError,
    SpecError,
    WidthError,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetError",
    "CapacityError",
    "FoldError",
    "PolicyError",
    "PrecisionError",
    "ScheduleError",
    "ShapeError",
    "SimError",
    "SpecError",
    "WidthError",
    "dataflow",
    "golden",
    "harness",
    "memory",
    "network",
    "neuron",
    "pe",
    "tensors",
]
