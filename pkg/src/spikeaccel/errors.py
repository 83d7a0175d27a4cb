"""Error types raised by the simulator.

Every failure mode gets its own class so CI logs and tests can tell a
malformed network description apart from an arithmetic width violation
inside the modeled datapath.
"""


class SimError(Exception):
    """Base class for all simulator errors."""


class ShapeError(SimError):
    """Tensor shape or dtype does not match what an operation requires."""


class WidthError(SimError):
    """An integer value exceeds the bit width of the modeled register."""


class PrecisionError(SimError):
    """Fixed-point folding cannot represent a value at the requested width."""


class FoldError(SimError):
    """Batch-norm folding was given invalid statistics (e.g. var+eps <= 0)."""


class SpecError(SimError):
    """Network description file is malformed; message names the offending key."""


class ScheduleError(SimError):
    """A layer cannot be scheduled onto the PE array as requested."""


class PolicyError(SimError):
    """Mapping policy is inconsistent with the PE array configuration."""


class CapacityError(SimError):
    """An SRAM bank allocation exceeds its configured capacity."""


class BudgetError(SimError):
    """Bank capacities exceed the total on-chip SRAM budget."""
