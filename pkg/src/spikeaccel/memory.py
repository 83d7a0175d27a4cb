"""On-chip SRAM model: five banks, access counters, staging buffers.

The accelerator keeps separate SRAMs sized for their traffic patterns:
large and small weight banks, large and small input banks and an output
bank, 107 KB in total by default.  This model charges no latency (reads
and writes overlap compute); it tracks traffic, working-set occupancy
and high-water marks so schedules can be compared by what they keep
resident, and it raises when an allocation exceeds a bank or the split
exceeds the die budget.

All quantities are in bits, since most payloads here are single spikes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import BudgetError, CapacityError

BANK_LW = "lw"    # large weight: conv/linear weights, staged score matrices
BANK_SW = "sw"    # small weight: key bits staged as 0/1 weights
BANK_LI = "li"    # large input: spike maps and the 8-bit image
BANK_SI = "si"    # small input: streamed value-column tiles
BANK_OUT = "out"  # output spikes and logits

BANK_NAMES = (BANK_LW, BANK_SW, BANK_LI, BANK_SI, BANK_OUT)

DEFAULT_BUDGET_BITS = 107 * 1024 * 8
DEFAULT_SPLIT_BITS = {
    BANK_LW: 64 * 1024 * 8,
    BANK_SW: 8 * 1024 * 8,
    BANK_LI: 16 * 1024 * 8,
    BANK_SI: 8 * 1024 * 8,
    BANK_OUT: 11 * 1024 * 8,
}


@dataclass
class SramBank:
    name: str
    capacity_bits: int
    read_bits: int = 0
    write_bits: int = 0
    read_ops: int = 0
    write_ops: int = 0
    occupancy_bits: int = 0
    high_water_bits: int = 0

    def read(self, bits: int) -> None:
        self.read_bits += int(bits)
        self.read_ops += 1

    def write(self, bits: int) -> None:
        self.write_bits += int(bits)
        self.write_ops += 1

    def alloc(self, bits: int) -> None:
        self.occupancy_bits += int(bits)
        if self.occupancy_bits > self.capacity_bits:
            raise CapacityError(
                f"bank {self.name}: {self.occupancy_bits} bits exceed "
                f"capacity {self.capacity_bits}"
            )
        self.high_water_bits = max(self.high_water_bits, self.occupancy_bits)

    def free(self, bits: int) -> None:
        self.occupancy_bits -= int(bits)
        if self.occupancy_bits < 0:
            raise CapacityError(f"bank {self.name}: freed more than allocated")


@dataclass
class TrackedBuffer:
    """A small dedicated register file outside the SRAM banks."""

    name: str
    capacity_bits: int | None = None
    level_bits: int = 0
    high_water_bits: int = 0

    def alloc(self, bits: int) -> None:
        self.level_bits += int(bits)
        if self.capacity_bits is not None and self.level_bits > self.capacity_bits:
            raise CapacityError(
                f"buffer {self.name}: {self.level_bits} bits exceed "
                f"capacity {self.capacity_bits}"
            )
        self.high_water_bits = max(self.high_water_bits, self.level_bits)

    def free(self, bits: int) -> None:
        self.level_bits -= int(bits)
        if self.level_bits < 0:
            raise CapacityError(f"buffer {self.name}: freed more than allocated")


@dataclass
class MemoryMap:
    banks: dict = field(default_factory=dict)
    budget_bits: int = DEFAULT_BUDGET_BITS

    def __getitem__(self, name: str) -> SramBank:
        return self.banks[name]

    def total_traffic_bits(self) -> int:
        return sum(b.read_bits + b.write_bits for b in self.banks.values())


def configure_banks(split_bits: dict | None = None,
                    budget_bits: int = DEFAULT_BUDGET_BITS) -> MemoryMap:
    """Build the bank map; banks left out of the split keep their defaults."""
    split = dict(DEFAULT_SPLIT_BITS)
    if split_bits is not None:
        unknown = set(split_bits) - set(BANK_NAMES)
        if unknown:
            raise BudgetError(f"unknown banks {sorted(unknown)}")
        split.update(split_bits)
    bad = [name for name, bits in split.items() if bits <= 0]
    if bad:
        raise BudgetError(f"bank sizes must be positive: {sorted(bad)}")
    total = sum(split.values())
    if total > budget_bits:
        raise BudgetError(
            f"bank split totals {total} bits, {total - budget_bits} over "
            f"the {budget_bits}-bit budget"
        )
    mem = MemoryMap(budget_bits=budget_bits)
    for name in BANK_NAMES:
        mem.banks[name] = SramBank(name=name, capacity_bits=split[name])
    return mem


def footprint_report(mem: MemoryMap, buffers=()) -> dict:
    """Stable-ordered summary of bank traffic and buffer high-water marks."""
    margin = mem.budget_bits - sum(b.capacity_bits for b in mem.banks.values())
    report = {
        "budget_bits": mem.budget_bits,
        "margin_bits": margin,
        "banks": {},
        "buffers": {},
    }
    for name in BANK_NAMES:
        b = mem.banks[name]
        report["banks"][name] = {
            "capacity_bits": b.capacity_bits,
            "read_bits": b.read_bits,
            "write_bits": b.write_bits,
            "read_ops": b.read_ops,
            "write_ops": b.write_ops,
            "high_water_bits": b.high_water_bits,
        }
    for buf in buffers:
        report["buffers"][buf.name] = {
            "capacity_bits": buf.capacity_bits,
            "high_water_bits": buf.high_water_bits,
        }
    return report
