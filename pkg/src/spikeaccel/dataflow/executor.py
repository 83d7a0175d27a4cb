"""Schedule executor: replay work items against bound tensors.

One item is one array cycle.  The executor gathers operands through the
item's index maps, runs the mux-multiply and the adder tree, scatters the
reduced sums into the phase accumulator, and replays the item's static
SRAM traffic and working-set deltas.  Cycle counts therefore fall out of
len(items), and equality of the accumulated outputs against the functional
reference is a property of the index maps, not of this loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ScheduleError, WidthError
from ..golden import (
    conv_channel_map,
    iand_residual,
    spiking_output,
    token_channel_map,
    tokenize,
)
from ..memory import MemoryMap, TrackedBuffer, configure_banks
from ..network import (
    KIND_ATTENTION,
    KIND_CONV,
    KIND_CONV_INPUT,
    KIND_HEAD,
    KIND_LINEAR,
    KIND_RESIDUAL,
    NetworkParams,
    NetworkSpec,
)
from ..pe import ArithmeticTrace, PEModuleConfig, mux_multiply_batch, adder_tree_reduce
from ..tensors import AccumTensor, ByteImage
from .schedulers import schedule_layer
from .types import (
    IDLE,
    LSRC_IMAGE,
    OUT_CONV,
    OUT_CONV_SHARED,
    OUT_LOGITS,
    OUT_TOKENS,
    PHASE_STDP_SCORE,
    MappingPolicy,
    Schedule,
    WorkItem,
)


@dataclass
class ExecCounters:
    """What actually happened while replaying a schedule."""

    cycles: int = 0
    occupied_lanes: int = 0
    spiking_lanes: int = 0
    reads: dict[str, int] = field(default_factory=dict)
    writes: dict[str, int] = field(default_factory=dict)

    def merge(self, other: "ExecCounters") -> None:
        self.cycles += other.cycles
        self.occupied_lanes += other.occupied_lanes
        self.spiking_lanes += other.spiking_lanes
        for bank, bits in other.reads.items():
            self.reads[bank] = self.reads.get(bank, 0) + bits
        for bank, bits in other.writes.items():
            self.writes[bank] = self.writes.get(bank, 0) + bits


@dataclass
class ExecutionResult:
    raw: np.ndarray
    counters: ExecCounters
    scores: np.ndarray | None = None


def _extend(arr: np.ndarray) -> np.ndarray:
    """Flatten and append a zero sentinel so IDLE (-1) gathers as 0."""
    flat = np.ascontiguousarray(arr).reshape(-1)
    out = np.empty(flat.size + 1, dtype=flat.dtype)
    out[: flat.size] = flat
    out[flat.size] = 0
    return out


def _gather_weights(item: WorkItem, ext: dict[str, np.ndarray]) -> np.ndarray:
    # index maps hold IDLE as their only negative, landing on the sentinel
    return ext[item.weight_src][item.weight_idx]


def _gather_bits(item: WorkItem, ext: dict[str, np.ndarray]) -> np.ndarray:
    vals = ext[item.lane_src][item.lane_idx]
    if item.lane_src == LSRC_IMAGE:
        plane = np.clip(item.lane_role, 0, None).astype(np.uint8)
        vals = (vals >> plane) & 1
    return vals.astype(np.uint8, copy=False)


def execute_schedule(
    schedule: Schedule,
    sources: dict[str, np.ndarray],
    cfg: PEModuleConfig | None = None,
    mem: MemoryMap | None = None,
    buffers: dict[str, TrackedBuffer] | None = None,
    trace: ArithmeticTrace | None = None,
    dump: list[str] | None = None,
) -> ExecutionResult:
    """Replay every item of one layer schedule.

    sources maps operand names ("layer", "kbits", "spikes", "image", "q",
    "v") to flat arrays.  The score store of an attention schedule is owned
    here: score items fill it, score-value items read it back as weights.
    """
    cfg = cfg or PEModuleConfig()
    raw = np.zeros(int(np.prod(schedule.raw_shape)), dtype=np.int64)
    limit = 1 << (schedule.accum_bits - 1)

    ext = {name: _extend(arr) for name, arr in sources.items()}
    scores = None
    if schedule.score_shape is not None:
        # live store with its own sentinel: score items scatter into it and
        # score-value items gather it back through the weight port
        scores = np.zeros(int(np.prod(schedule.score_shape)) + 1, dtype=np.int64)
        ext["scores"] = scores

    counters = ExecCounters()
    for i, item in enumerate(schedule.iter_items()):
        weights = _gather_weights(item, ext)
        bits = _gather_bits(item, ext)
        products = mux_multiply_batch(weights, bits)
        reduced = adder_tree_reduce(
            products, item.adder, cfg,
            lane_roles=item.lane_role, num_groups=item.num_groups,
        )

        target = scores if item.phase == PHASE_STDP_SCORE else raw
        dest = item.dest_idx
        valid = dest >= 0
        if reduced.shape != dest.shape:
            raise ScheduleError(
                f"adder output {reduced.shape} does not line up with "
                f"destinations {dest.shape}"
            )
        flat_dest = dest[valid]
        np.add.at(target, flat_dest, reduced[valid])
        touched = target[flat_dest]
        if touched.size and (touched.min() <= -limit or touched.max() >= limit):
            raise WidthError(
                f"accumulator exceeds {schedule.accum_bits} bits in "
                f"{item.phase} cycle {i}"
            )

        counters.cycles += 1
        counters.occupied_lanes += item.occupied_lanes()
        counters.spiking_lanes += int(bits.sum())
        for op in item.mem_ops:
            if mem is not None:
                bank = mem[op.bank]
                if op.op == "read":
                    bank.read(op.bits)
                else:
                    bank.write(op.bits)
            book = counters.reads if op.op == "read" else counters.writes
            book[op.bank] = book.get(op.bank, 0) + op.bits
        if buffers is not None:
            for bop in item.buffer_ops:
                buf = buffers.get(bop.name)
                if buf is None:
                    buf = TrackedBuffer(bop.name, bop.capacity_bits)
                    buffers[bop.name] = buf
                if bop.delta_bits >= 0:
                    buf.alloc(bop.delta_bits)
                else:
                    buf.free(-bop.delta_bits)
        if trace is not None:
            trace.record_cycle(i, weights, bits, products)
        if dump is not None:
            dump.append(item.dump_line(i))

    if scores is not None:
        scores = scores[:-1].reshape(schedule.score_shape)
    return ExecutionResult(
        raw=raw.reshape(schedule.raw_shape), counters=counters, scores=scores
    )


def finalize_output(
    schedule: Schedule,
    raw: np.ndarray,
    params: NetworkParams,
    timesteps: int,
) -> np.ndarray:
    """Shared epilogue: requantize + neuron for spiking layers, logits as-is."""
    layout = schedule.out_layout
    if layout == OUT_LOGITS:
        return AccumTensor(raw.astype(np.int32)).data
    tflif = params.tflif[schedule.layer_index]
    if layout == OUT_CONV_SHARED:
        raw = np.broadcast_to(raw, (timesteps, *raw.shape)).copy()
        layout = OUT_CONV
    if layout == OUT_CONV:
        cmap = conv_channel_map(raw.shape[1])
    elif layout == OUT_TOKENS:
        cmap = token_channel_map(raw.shape[2])
    else:
        raise ScheduleError(f"unknown output layout {layout!r}")
    return spiking_output(raw, schedule.requant_shift, tflif, cmap)


@dataclass
class NetworkExecution:
    """Cycle-level run of a whole network."""

    logits: AccumTensor
    outputs: dict[int, np.ndarray]
    schedules: dict[int, Schedule]
    counters: dict[int, ExecCounters]
    memory: MemoryMap
    buffers: dict[str, TrackedBuffer]


def execute_network(
    spec: NetworkSpec,
    params: NetworkParams,
    image: ByteImage,
    cfg: PEModuleConfig | None = None,
    policy: MappingPolicy | None = None,
    mem: MemoryMap | None = None,
    trace: ArithmeticTrace | None = None,
    dump: list[str] | None = None,
) -> NetworkExecution:
    """Drive every layer through its schedule, feeding outputs forward.

    Residual layers combine executed outputs directly and cost no array
    cycles; tokenization between conv and token layers is a relabeling,
    likewise free.
    """
    cfg = cfg or PEModuleConfig()
    policy = policy or MappingPolicy()
    mem = mem or configure_banks()
    buffers: dict[str, TrackedBuffer] = {}
    outs: dict[int, np.ndarray] = {}
    schedules: dict[int, Schedule] = {}
    counters: dict[int, ExecCounters] = {}
    logits = None

    for i, layer in enumerate(spec.layers):
        if layer.kind == KIND_RESIDUAL:
            a, b = (outs[j] for j in layer.inputs)
            outs[i] = iand_residual(tokenize(a), tokenize(b), layer.op)
            continue
        schedule = schedule_layer(spec, i, cfg, policy)
        assert schedule is not None
        sources: dict[str, np.ndarray] = {}
        if layer.kind == KIND_CONV_INPUT:
            sources["layer"] = params.weights[i].data.reshape(-1)
            sources["image"] = image.data.reshape(-1)
        elif layer.kind == KIND_CONV:
            sources["layer"] = params.weights[i].data.reshape(-1)
            sources["spikes"] = outs[layer.inputs[0]].reshape(-1)
        elif layer.kind in (KIND_LINEAR, KIND_HEAD):
            sources["layer"] = params.weights[i].data.reshape(-1)
            sources["spikes"] = tokenize(outs[layer.inputs[0]]).reshape(-1)
        elif layer.kind == KIND_ATTENTION:
            q, k, v = (tokenize(outs[j]) for j in layer.inputs)
            sources["q"] = q.reshape(-1)
            sources["kbits"] = k.reshape(-1)
            sources["v"] = v.reshape(-1)
        else:
            raise ScheduleError(f"no dataflow for layer kind {layer.kind}")

        result = execute_schedule(
            schedule, sources, cfg, mem, buffers, trace=trace, dump=dump
        )
        out = finalize_output(schedule, result.raw, params, spec.timesteps)
        outs[i] = out
        schedules[i] = schedule
        counters[i] = result.counters
        if layer.kind == KIND_HEAD:
            logits = AccumTensor(out.astype(np.int32))

    assert logits is not None
    return NetworkExecution(
        logits=logits,
        outputs=outs,
        schedules=schedules,
        counters=counters,
        memory=mem,
        buffers=buffers,
    )
