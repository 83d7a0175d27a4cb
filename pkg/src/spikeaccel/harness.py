"""Run orchestration and reporting.

Three run modes share one report shape:

* functional - schedule execution cross-checked against the golden model
               layer by layer; logits, class, digest and verdicts.
* cycle      - functional plus cycle counters, memory traffic and buffer
               high-water marks.
* shape-only - closed-form counters; no tensors touched, so even the
               full-size network reports instantly.

Reports are plain dicts with a fixed key order so equal runs serialize to
identical bytes.
"""

from __future__ import annotations

import json
import logging
from fractions import Fraction

import numpy as np

from .dataflow import (
    LAYER_PHASE,
    REPORT_PHASES,
    MappingPolicy,
    execute_network,
    predict_layer,
)
from .dataflow.types import PhaseCounters
from .golden import classify, golden_digest, run_network_reference
from .memory import configure_banks
from .network import (
    KIND_ATTENTION,
    KIND_CONV,
    KIND_HEAD,
    KIND_LINEAR,
    NetworkParams,
    NetworkSpec,
    random_image,
    synthesize_parameters,
)
from .pe import PEModuleConfig
from .tensors import ByteImage

log = logging.getLogger("spikeaccel")

MODE_FUNCTIONAL = "functional"
MODE_CYCLE = "cycle"
MODE_SHAPE = "shape-only"
MODES = (MODE_FUNCTIONAL, MODE_CYCLE, MODE_SHAPE)

SOPS_PER_LANE_CYCLE = 2  # one synaptic op, one membrane update per lane

# Published silicon reference points for the default 512x8 array.
REFERENCE_CLOCK_MHZ = 500.0
REFERENCE_AREA_MM2 = 0.844
REFERENCE_POWER_MW = 416.1

# Reference end-to-end cycle distribution (percent per phase).
REFERENCE_SHARES = {"zsc": 0.19, "sssc": 4.13, "wssl": 80.79, "stdp": 14.88}


def efficiency_metrics(
    num_pes: int = 4096,
    clock_mhz: float = REFERENCE_CLOCK_MHZ,
    area_mm2: float | None = None,
    power_mw: float | None = None,
) -> dict:
    """Peak rates: every PE retires 2 SOPs per cycle when occupied."""
    peak_gsops = num_pes * SOPS_PER_LANE_CYCLE * clock_mhz / 1000.0
    out = {"num_pes": num_pes, "clock_mhz": clock_mhz, "peak_gsops": peak_gsops}
    if area_mm2 is not None:
        out["area_mm2"] = area_mm2
        out["tsops_per_mm2"] = peak_gsops / 1000.0 / area_mm2
    if power_mw is not None:
        out["power_mw"] = power_mw
        # GSOPS per mW is numerically TSOPS per W
        out["tsops_per_w"] = peak_gsops / power_mw
    return out


def _phase_totals_predicted(
    spec: NetworkSpec, cfg: PEModuleConfig, policy: MappingPolicy
):
    """Closed-form per-phase counters plus a per-layer cycle list."""
    totals = {p: PhaseCounters() for p in REPORT_PHASES}
    layers = []
    for i, layer in enumerate(spec.layers):
        counters = predict_layer(spec, i, cfg, policy)
        if counters is None:
            continue
        phase = LAYER_PHASE[layer.kind]
        totals[phase].merge(counters)
        layers.append(
            {"index": i, "label": layer.label, "phase": phase,
             "cycles": counters.cycles}
        )
    return totals, layers


def _fps(total_cycles: int, clock_mhz: float) -> tuple[float, list[int]]:
    hz = Fraction(str(clock_mhz)) * 10**6
    exact = hz / total_cycles
    return float(exact), [exact.numerator, exact.denominator]


def _phase_section(cycles_by_phase: dict, total: int) -> dict:
    section = {}
    for phase in REPORT_PHASES:
        c = cycles_by_phase.get(phase, 0)
        share = 100.0 * c / total if total else 0.0
        section[phase] = {"cycles": c, "share_pct": share}
    return section


def _buffer_reduction(
    spec: NetworkSpec, cfg: PEModuleConfig, policy: MappingPolicy
) -> dict:
    """Proposed dataflow working sets against their modeled naive baselines.

    Naive alternatives: WSSL holding every token column's partial sums at
    once, STDP holding a head's full V matrix per timestep, ZSC spilling
    pre-neuron partial sums to SRAM between input-channel chunks.
    """
    accw = cfg.accumulator_width
    T = spec.timesteps
    out: dict[str, dict] = {}

    split_naive = split_prop = 0
    for layer in spec.layers:
        if layer.kind not in (KIND_LINEAR, KIND_HEAD):
            continue
        if -(-layer.d_in // cfg.num_units) <= 1:
            continue
        split_naive = max(split_naive, layer.n_tokens * T * accw)
        split_prop = max(
            split_prop, min(policy.tokens_per_pair, layer.n_tokens) * T * accw
        )
    if split_naive:
        out["wssl_split"] = {
            "proposed_bits": split_prop,
            "naive_full_column_bits": split_naive,
        }

    v_naive = v_prop = 0
    for layer in spec.layers:
        if layer.kind != KIND_ATTENTION:
            continue
        v_naive = max(v_naive, layer.n_tokens * layer.head_dim)
        v_prop = max(
            v_prop, min(policy.stdp_v_tile, layer.head_dim) * layer.n_tokens
        )
    if v_naive:
        out["stdp_v"] = {
            "proposed_tile_bits": v_prop,
            "naive_full_v_bits": v_naive,
            "ratio": v_prop / v_naive,
        }

    spill_naive = 0
    for layer in spec.layers:
        if layer.kind != KIND_CONV:
            continue
        h, w = layer.conv_out_hw()
        spill_naive = max(spill_naive, h * w * T * accw)
    if spill_naive:
        out["zsc_partials"] = {
            "proposed_spill_bits": 0,
            "naive_spill_bits": spill_naive,
        }
    return out


def run(
    spec: NetworkSpec,
    params: NetworkParams | None = None,
    image: ByteImage | None = None,
    *,
    mode: str = MODE_CYCLE,
    seed: int = 0,
    clock_mhz: float = REFERENCE_CLOCK_MHZ,
    area_mm2: float | None = None,
    power_mw: float | None = None,
    cfg: PEModuleConfig | None = None,
    policy: MappingPolicy | None = None,
    trace=None,
    dump: list[str] | None = None,
) -> dict:
    """Run the network in the requested mode and return the report dict."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    cfg = cfg or PEModuleConfig()
    policy = policy or MappingPolicy()

    report = {
        "network": spec.name,
        "mode": mode,
        "seed": seed,
        "clock_mhz": clock_mhz,
        "pe_array": {
            "num_units": cfg.num_units,
            "pes_per_unit": cfg.pes_per_unit,
            "total_pes": cfg.total_pes,
            "accumulator_bits": cfg.accumulator_width,
        },
        "notes": "cycle counts cover array compute only; host transfers and "
                 "off-chip traffic are outside the model",
    }

    predicted_totals, layer_rows = _phase_totals_predicted(spec, cfg, policy)

    if mode in (MODE_FUNCTIONAL, MODE_CYCLE):
        if params is None:
            params = synthesize_parameters(spec, seed)
        if image is None:
            image = random_image(spec, seed)
        log.info("executing %s at cycle level", spec.name)
        ex = execute_network(
            spec, params, image, cfg, policy, trace=trace, dump=dump
        )
        logits, g_outs = run_network_reference(spec, params, image)
        first_mismatch = None
        for i in sorted(g_outs):
            if not np.array_equal(g_outs[i], ex.outputs[i]):
                first_mismatch = i
                log.warning("layer %d output deviates from the golden model", i)
                break
        counters_match = True
        cycles_by_phase = {p: 0 for p in REPORT_PHASES}
        occupied = 0
        spiking = 0
        for i, sched in ex.schedules.items():
            c = ex.counters[i]
            p = sched.predicted
            if (
                c.cycles != p.cycles
                or (sched.items is not None and c.cycles != len(sched.items))
                or c.occupied_lanes != p.occupied_lanes
                or c.reads != p.reads
                or c.writes != p.writes
            ):
                counters_match = False
                log.warning("layer %d (%s): executed counters deviate from "
                            "prediction", i, sched.label)
            cycles_by_phase[sched.phase] += c.cycles
            occupied += c.occupied_lanes
            spiking += c.spiking_lanes
        report["classification"] = {"class": classify(ex.logits)}
        report["golden_digest"] = golden_digest(logits, g_outs)
        report["equivalence"] = {
            "logits_match": bool(np.array_equal(logits.data, ex.logits.data)),
            "layers_match": first_mismatch is None,
            "first_mismatch_layer": first_mismatch,
            "counters_match": bool(counters_match),
        }
        if mode == MODE_FUNCTIONAL:
            return report
        mem_section = {
            "banks": {
                name: {
                    "capacity_bits": bank.capacity_bits,
                    "read_bits": bank.read_bits,
                    "write_bits": bank.write_bits,
                }
                for name, bank in sorted(ex.memory.banks.items())
            },
            "buffers": {
                name: {
                    "high_water_bits": buf.high_water_bits,
                    "capacity_bits": buf.capacity_bits,
                    "level_bits": buf.level_bits,
                }
                for name, buf in sorted(ex.buffers.items())
            },
            "reduction": _buffer_reduction(spec, cfg, policy),
            "notes": "traffic totals and working-set high-water marks; whole "
                     "tensors are backed off the array",
        }
    else:
        cycles_by_phase = {p: c.cycles for p, c in predicted_totals.items()}
        occupied = sum(c.occupied_lanes for c in predicted_totals.values())
        spiking = None
        banks = configure_banks()
        reads: dict[str, int] = {}
        writes: dict[str, int] = {}
        buffers: dict[str, int] = {}
        for c in predicted_totals.values():
            for bank, bits in c.reads.items():
                reads[bank] = reads.get(bank, 0) + bits
            for bank, bits in c.writes.items():
                writes[bank] = writes.get(bank, 0) + bits
            for name, bits in c.buffer_high_water.items():
                buffers[name] = max(buffers.get(name, 0), bits)
        mem_section = {
            "banks": {
                name: {
                    "capacity_bits": banks[name].capacity_bits,
                    "read_bits": reads.get(name, 0),
                    "write_bits": writes.get(name, 0),
                }
                for name in sorted(banks.banks)
            },
            "buffers": {
                name: {"high_water_bits": bits}
                for name, bits in sorted(buffers.items())
            },
            "reduction": _buffer_reduction(spec, cfg, policy),
            "notes": "traffic totals and working-set high-water marks; whole "
                     "tensors are backed off the array",
        }

    total = sum(cycles_by_phase.values())
    fps, fps_exact = _fps(total, clock_mhz)
    report["phases"] = _phase_section(cycles_by_phase, total)
    report["total_cycles"] = total
    report["throughput"] = {"fps": fps, "fps_exact": fps_exact}
    compute = {
        "occupied_lane_cycles": occupied,
        "sops_per_lane_cycle": SOPS_PER_LANE_CYCLE,
        "total_sops": SOPS_PER_LANE_CYCLE * occupied,
        "utilization_pct": 100.0 * occupied / (total * cfg.total_pes)
        if total else 0.0,
        "achieved_gsops": SOPS_PER_LANE_CYCLE * occupied * clock_mhz
        / (total * 1000.0) if total else 0.0,
    }
    if spiking is not None:
        compute["spiking_lane_cycles"] = spiking
        compute["effective_sops"] = SOPS_PER_LANE_CYCLE * spiking
        compute["effective_gsops"] = (
            SOPS_PER_LANE_CYCLE * spiking * clock_mhz / (total * 1000.0)
            if total else 0.0
        )
    report["compute"] = compute
    report["efficiency"] = efficiency_metrics(
        cfg.total_pes, clock_mhz, area_mm2, power_mw
    )
    report["memory"] = mem_section
    report["layers"] = layer_rows
    return report


def render_report(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


def compare_distribution(
    shares: dict[str, float], reference: dict[str, float] | None = None,
    tolerance_pp: float = 5.0,
) -> dict:
    """Judge a phase share distribution against a reference.

    Mandatory: the phases rank in the same order and the dominant phase
    clears 60 percent.  Stretch: every share within tolerance_pp points.
    """
    reference = reference or REFERENCE_SHARES
    missing = [p for p in reference if p not in shares]
    if missing:
        raise KeyError(f"report lacks phase shares for {missing}")
    got_order = sorted(reference, key=lambda p: shares[p], reverse=True)
    ref_order = sorted(reference, key=lambda p: reference[p], reverse=True)
    dominant = ref_order[0]
    order_ok = got_order == ref_order
    dominant_ok = shares[dominant] > 60.0
    deltas = {p: shares[p] - reference[p] for p in sorted(reference)}
    tight_ok = all(abs(d) <= tolerance_pp for d in deltas.values())
    return {
        "reference_order": ref_order,
        "observed_order": got_order,
        "order_ok": order_ok,
        "dominant_phase": dominant,
        "dominant_share_pct": shares[dominant],
        "dominant_ok": dominant_ok,
        "deltas_pp": deltas,
        "tolerance_pp": tolerance_pp,
        "mandatory": "PASS-ORDER" if (order_ok and dominant_ok) else "FAIL-ORDER",
        "tight": "PASS-TIGHT" if tight_ok else "FAIL-TIGHT",
    }


def report_shares(report: dict) -> dict[str, float]:
    return {p: report["phases"][p]["share_pct"] for p in REPORT_PHASES}
