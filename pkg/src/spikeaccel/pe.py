"""Processing-element module model.

The compute fabric is an array of PE units.  Each unit owns one shared
signed 8-bit weight register and eight 1-bit spike inputs selected by
multiplexers, so a unit never performs anything wider than an 8-bit by
1-bit multiply: a lane product is either the weight or zero.  Unit
outputs feed a configurable adder tree:

* sum-across-units: lane k of every unit in a group is added together,
  lanes are never mixed (they carry distinct timesteps or tokens);
* shift-sum-within-unit: the eight lanes of one unit are weighted by
  per-lane bitplane shifts and summed, reconstructing an 8-bit by 8-bit
  product from bitplane lanes;
* pass-through: unit outputs are forwarded unreduced.

Scalar functions define the reference semantics; the *_batch variants
are the vectorized forms the schedule executor runs, and tests pin the
two against each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PolicyError, WidthError

INT8_MIN = -128
INT8_MAX = 127


@dataclass(frozen=True)
class PEModuleConfig:
    """Geometry and register widths of the PE module."""

    num_units: int = 512
    pes_per_unit: int = 8
    accumulator_width: int = 24  # bits, signed, for adder-tree partial sums
    requant_width: int = 8

    def __post_init__(self):
        if self.num_units < 1 or self.pes_per_unit < 1:
            raise PolicyError("PE module needs at least one unit and one lane")
        if self.accumulator_width < 2 or self.accumulator_width > 32:
            raise PolicyError("accumulator width must be 2..32 bits")

    @property
    def total_pes(self) -> int:
        return self.num_units * self.pes_per_unit

    @property
    def accum_limit(self) -> int:
        """Largest magnitude a partial sum may reach (exclusive)."""
        return 1 << (self.accumulator_width - 1)


@dataclass(frozen=True)
class UnitInput:
    """One unit's operands for one cycle."""

    weight: int
    spikes: tuple[int, ...]            # one bit per lane
    lane_roles: tuple[int, ...] = ()   # timestep index, or bitplane for shift-sum


# Adder tree operating modes ------------------------------------------------

@dataclass(frozen=True)
class SumAcrossUnits:
    group_size: int


@dataclass(frozen=True)
class ShiftSumWithinUnit:
    group_size: int = 1  # units summed after the per-unit shift-sum


@dataclass(frozen=True)
class PassThrough:
    pass


def pe_mux_multiply(weight: int, spike: int) -> int:
    """One PE: select the weight or zero.  Never widens beyond 8 bits."""
    if not INT8_MIN <= weight <= INT8_MAX:
        raise WidthError(f"weight {weight} outside signed 8-bit range")
    if spike not in (0, 1):
        raise WidthError(f"spike input {spike} is not a bit")
    return weight if spike else 0


def unit_cycle(unit: UnitInput, lanes: int = 8) -> list[int]:
    """All lane products of one unit for one cycle."""
    if len(unit.spikes) != lanes:
        raise WidthError(f"unit drives {lanes} lanes, got {len(unit.spikes)} bits")
    return [pe_mux_multiply(unit.weight, s) for s in unit.spikes]


def shift_sum_within_unit(lane_products, bitplanes) -> int:
    """Recombine bitplane lane products: sum of product << plane.

    With lane products w*bit_b(x) for the eight bitplanes of a byte x
    this reconstructs the full product w*x exactly.
    """
    if len(lane_products) != len(bitplanes):
        raise WidthError("one bitplane tag per lane product required")
    tags = [int(b) for b in bitplanes]
    if len(set(tags)) != len(tags):
        raise PolicyError(f"duplicate bitplane tags in {tags}")
    total = 0
    for p, b in zip(lane_products, tags):
        if not 0 <= b < 8:
            raise WidthError(f"bitplane tag {b} out of range 0..7")
        total += int(p) << b
    return total


def requantize_to_8bit(acc: int, shift: int) -> int:
    """Saturating arithmetic right shift (rounds toward minus infinity)."""
    if not 0 <= shift <= 31:
        raise WidthError(f"requantize shift {shift} out of range 0..31")
    v = int(acc) >> shift
    return max(INT8_MIN, min(INT8_MAX, v))


def adder_tree_reduce(unit_outputs, mode, cfg: PEModuleConfig,
                      lane_roles=None, num_groups: int | None = None):
    """Reduce one cycle's unit outputs according to the adder mode.

    unit_outputs is [num_units, lanes].  Groups are consecutive unit
    ranges; units beyond num_groups*group_size must be idle (all-zero
    products).  Sums are checked against the accumulator width and never
    saturated: overflow is a WidthError because the modeled adder tree
    widens log2(group) bits beyond the lane products.
    """
    out = np.asarray(unit_outputs)
    if out.ndim != 2:
        raise WidthError("unit outputs must be [units, lanes]")
    units = out.shape[0]

    if isinstance(mode, PassThrough):
        return out.copy()

    g = mode.group_size
    if g < 1 or g > units:
        raise PolicyError(f"group size {g} invalid for {units} units")
    n = num_groups if num_groups is not None else units // g
    if n * g > units:
        raise PolicyError(f"{n} groups of {g} exceed {units} units")
    tail = out[n * g:]
    if tail.size and np.any(tail):
        raise PolicyError("units beyond the grouped range must be idle")
    active = out[: n * g].astype(np.int64)

    if isinstance(mode, SumAcrossUnits):
        sums = active.reshape(n, g, -1).sum(axis=1)
    elif isinstance(mode, ShiftSumWithinUnit):
        if lane_roles is None:
            raise PolicyError("shift-sum mode needs per-lane bitplane roles")
        roles = np.asarray(lane_roles)[: n * g].astype(np.int64)
        if roles.shape != active.shape:
            raise PolicyError("lane role shape must match unit outputs")
        if roles.size and (roles.min() < 0 or roles.max() > 7):
            raise WidthError("bitplane roles out of range 0..7")
        per_unit = (active << roles).sum(axis=1)
        sums = per_unit.reshape(n, g).sum(axis=1, keepdims=True)
    else:
        raise PolicyError(f"unknown adder mode {mode!r}")

    limit = cfg.accum_limit
    if sums.size and (sums.min() <= -limit or sums.max() >= limit):
        raise WidthError(
            f"adder tree sum exceeds {cfg.accumulator_width}-bit accumulator"
        )
    return sums


# ---------------------------------------------------------------------------
# vectorized forms used by the schedule executor
# ---------------------------------------------------------------------------

def mux_multiply_batch(weights: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Lane products for a whole cycle: weights [U] against bits [U, L]."""
    w = np.asarray(weights, dtype=np.int64)
    b = np.asarray(bits)
    if w.size and (w.min() < INT8_MIN or w.max() > INT8_MAX):
        raise WidthError("weight outside signed 8-bit range")
    if b.size and (b.min() < 0 or b.max() > 1):
        raise WidthError("spike inputs must be bits")
    return (w[:, None] * b).astype(np.int16)


def requantize_batch(acc: np.ndarray, shift: int) -> np.ndarray:
    """Vector form of requantize_to_8bit."""
    if not 0 <= shift <= 31:
        raise WidthError(f"requantize shift {shift} out of range 0..31")
    v = np.asarray(acc, dtype=np.int64) >> shift
    return np.clip(v, INT8_MIN, INT8_MAX).astype(np.int8)


# ---------------------------------------------------------------------------
# arithmetic trace
# ---------------------------------------------------------------------------

@dataclass
class ArithmeticTrace:
    """Optional per-cycle record stream of raw PE operands.

    One line per active unit per cycle: cycle index, unit id, weight,
    the eight lane bits and the eight lane products.  Intended for tiny
    cases; disabled by default everywhere.
    """

    lines: list[str] = field(default_factory=list)

    def record_cycle(self, cycle: int, weights, bits, products) -> None:
        w = np.asarray(weights)
        b = np.asarray(bits)
        p = np.asarray(products)
        for u in range(w.shape[0]):
            if b[u].any() or w[u]:
                lanes = "".join(str(int(x)) for x in b[u])
                prods = ",".join(str(int(x)) for x in p[u])
                self.lines.append(
                    f"cycle={cycle} unit={u} w={int(w[u])} s={lanes} p={prods}"
                )

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for line in self.lines:
                fh.write(line + "\n")
