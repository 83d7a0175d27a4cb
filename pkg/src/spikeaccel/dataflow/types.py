"""Shared types for schedule construction and execution.

A schedule is a flat list of work items, one per PE-array cycle.  Each item
carries numpy index arrays that tell the executor which weight every unit
loads, which spike bit every lane muxes in, and where the reduced sums land.
Keeping the mapping as data (rather than per-dataflow execution code) means
the executor is a single gather/multiply/reduce/scatter loop and the cycle
count of a phase is, by construction, len(items).
"""

from __future__ import annotations

from collections.abc import Callable, Iterator
from dataclasses import dataclass, field

import numpy as np

from ..pe import PassThrough, ShiftSumWithinUnit, SumAcrossUnits

# Phase names used in reports.  STDP is split into two item kinds internally
# but reported as one phase.
PHASE_ZSC = "zsc"
PHASE_SSSC = "sssc"
PHASE_WSSL = "wssl"
PHASE_STDP = "stdp"
PHASE_STDP_SCORE = "stdp_score"
PHASE_STDP_SV = "stdp_sv"

REPORT_PHASES = (PHASE_ZSC, PHASE_SSSC, PHASE_WSSL, PHASE_STDP)

# Weight port sources.
WSRC_LAYER = "layer"      # stationary int8 layer weights
WSRC_KBITS = "kbits"      # 1-bit K spikes driven through the weight port
WSRC_SCORES = "scores"    # attention scores produced earlier in the phase

# Lane (spike mux) sources.
LSRC_SPIKES = "spikes"    # 1-bit activations of the input layer
LSRC_IMAGE = "image"      # 8-bit input image, lane role selects the bitplane
LSRC_Q = "q"              # query spikes
LSRC_V = "v"              # value spikes

IDLE = -1


@dataclass(frozen=True)
class MappingPolicy:
    """Knobs that fix how work is laid onto the array.

    Defaults reproduce the reference mapping; tests nudge individual knobs
    to check that predicted and executed counters move together.
    """

    tokens_per_pair: int = 2          # tokens sharing a unit in ZSC / WSSL
    zsc_units_per_channel: int = 4    # one unit per kernel tap
    stdp_v_tile: int = 8              # V columns resident per SV tile
    pack_heads_along_units: bool = True


@dataclass(frozen=True)
class MemOp:
    """Static SRAM traffic attributed to one cycle."""

    bank: str
    op: str        # "read" | "write"
    bits: int
    tag: str


@dataclass(frozen=True)
class BufferOp:
    """Working-set delta (bits) applied when the item issues."""

    name: str
    delta_bits: int
    capacity_bits: int | None = None


@dataclass
class WorkItem:
    """One array cycle.

    weight_idx: [U] flat index into the weight source, IDLE for dark units.
    lane_idx:   [U, L] flat index into the lane source, IDLE for dark lanes.
    lane_role:  [U, L] timestep (ZSC/WSSL/STDP) or bitplane (SSSC).
    dest_idx:   [G, D] flat index into the phase accumulator, IDLE if absent.
                Duplicate destinations accumulate.
    """

    phase: str
    weight_src: str
    lane_src: str
    weight_idx: np.ndarray
    lane_idx: np.ndarray
    lane_role: np.ndarray
    adder: SumAcrossUnits | ShiftSumWithinUnit | PassThrough
    num_groups: int
    dest_idx: np.ndarray
    mem_ops: tuple[MemOp, ...] = ()
    buffer_ops: tuple[BufferOp, ...] = ()
    occupied_count: int | None = None  # schedulers precompute; None means scan

    def occupied_lanes(self) -> int:
        if self.occupied_count is not None:
            return self.occupied_count
        return int(np.count_nonzero(self.lane_idx >= 0))

    def dump_line(self, index: int) -> str:
        units = int(np.count_nonzero(self.weight_idx >= 0))
        return (
            f"{self.phase} cycle={index} units={units} "
            f"lanes={self.occupied_lanes()} groups={self.num_groups}"
        )


@dataclass
class PhaseCounters:
    """Closed-form prediction of what executing a schedule must produce."""

    cycles: int = 0
    occupied_lanes: int = 0
    reads: dict[str, int] = field(default_factory=dict)
    writes: dict[str, int] = field(default_factory=dict)
    buffer_high_water: dict[str, int] = field(default_factory=dict)

    def add_read(self, bank: str, bits: int) -> None:
        self.reads[bank] = self.reads.get(bank, 0) + int(bits)

    def add_write(self, bank: str, bits: int) -> None:
        self.writes[bank] = self.writes.get(bank, 0) + int(bits)

    def mark_buffer(self, name: str, bits: int) -> None:
        prev = self.buffer_high_water.get(name, 0)
        self.buffer_high_water[name] = max(prev, int(bits))

    def merge(self, other: "PhaseCounters") -> None:
        self.cycles += other.cycles
        self.occupied_lanes += other.occupied_lanes
        for bank, bits in other.reads.items():
            self.add_read(bank, bits)
        for bank, bits in other.writes.items():
            self.add_write(bank, bits)
        for name, bits in other.buffer_high_water.items():
            self.mark_buffer(name, bits)


# Output layouts a schedule can produce.
OUT_CONV = "conv"          # raw accumulator [T, C, H, W]
OUT_CONV_SHARED = "conv1"  # raw accumulator [C, H, W], replicated along T
OUT_TOKENS = "tokens"      # raw accumulator [T, N, D]
OUT_LOGITS = "logits"      # raw accumulator [T, classes], no neuron

@dataclass
class Schedule:
    """All work items of one layer plus the predicted counters.

    items is the materialized list for desk-scale work.  Large schedules
    (millions of cycles) set items=None and regenerate on demand through
    item_source, so the executor can stream them without holding the whole
    index map set in memory.
    """

    phase: str
    layer_index: int
    label: str
    items: list[WorkItem] | None
    predicted: PhaseCounters
    raw_shape: tuple[int, ...]
    out_layout: str
    requant_shift: int
    accum_bits: int
    score_shape: tuple[int, ...] | None = None
    item_source: Callable[[], Iterator[WorkItem]] | None = None

    def iter_items(self) -> Iterator[WorkItem]:
        if self.items is not None:
            return iter(self.items)
        if self.item_source is None:
            raise ValueError("schedule has neither stored items nor a source")
        return self.item_source()

    def dump_lines(self):
        yield (
            f"schedule layer={self.layer_index} label={self.label} "
            f"phase={self.phase} cycles={self.predicted.cycles}"
        )
        for i, item in enumerate(self.iter_items()):
            yield item.dump_line(i)
