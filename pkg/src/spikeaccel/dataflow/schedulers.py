"""Cycle-exact schedule builders for the four dataflows.

Every builder emits one WorkItem per array cycle and, independently, a
closed-form PhaseCounters prediction.  The executor replays the items; tests
hold the two routes to byte equality.  Builders know geometry only; tensors
are bound at execution time.

Mapping conventions (U units, L lanes per unit, T timesteps):

* zsc   - kernel-position parallel conv.  Each input channel occupies k*k
          units (one per tap), 128 channels concurrent at k=2.  Lanes carry
          tokens_per_pair output pixels x T timesteps.  Channel chunks are
          the innermost loop so partial sums stay in the accumulators and
          nothing is spilled before the neuron.
* sssc  - first-layer conv on the 8-bit image.  A pixel's whole receptive
          field (k*k*c_in units) folds one output in a single cycle; the 8
          lanes of a unit walk the bitplanes of the input byte and the adder
          applies the binary weighting.
* wssl  - fully-connected rows.  A unit holds one weight of the output row;
          lanes carry tokens_per_pair tokens x T timesteps.  When d_in
          exceeds the array, input chunks are innermost and the in-flight
          pair occupies a split accumulator of exactly L*24 bits.
* stdp  - attention without multipliers.  Score items drive K bits through
          the weight port against Q lanes; SV items feed the materialized
          scores back as 8-bit weights against V lanes, one V column tile
          resident at a time.
"""

from __future__ import annotations

import numpy as np

from ..errors import PolicyError, ScheduleError, WidthError
from ..memory import BANK_LI, BANK_LW, BANK_OUT, BANK_SI, BANK_SW
from ..network import (
    KIND_ATTENTION,
    KIND_CONV,
    KIND_CONV_INPUT,
    KIND_HEAD,
    KIND_LINEAR,
    KIND_RESIDUAL,
    LayerSpec,
    NetworkSpec,
)
from ..pe import PEModuleConfig, ShiftSumWithinUnit, SumAcrossUnits
from .types import (
    IDLE,
    LSRC_IMAGE,
    LSRC_Q,
    LSRC_SPIKES,
    LSRC_V,
    OUT_CONV,
    OUT_CONV_SHARED,
    OUT_LOGITS,
    OUT_TOKENS,
    PHASE_SSSC,
    PHASE_STDP,
    PHASE_STDP_SCORE,
    PHASE_STDP_SV,
    PHASE_WSSL,
    PHASE_ZSC,
    BufferOp,
    MappingPolicy,
    MemOp,
    PhaseCounters,
    Schedule,
    WorkItem,
)

BUF_WSSL_SPLIT = "wssl_split"
BUF_HEAD_ACC = "head_acc"
BUF_STDP_K = "stdp_k"
BUF_STDP_S = "stdp_s"
BUF_STDP_V_TILE = "stdp_v_tile"

HEAD_ACC_BITS = 32


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _chunks(total: int, width: int) -> list[tuple[int, int]]:
    return [(s, min(width, total - s)) for s in range(0, total, width)]


def _pair_lanes(cfg: PEModuleConfig, policy: MappingPolicy, timesteps: int) -> None:
    if policy.tokens_per_pair * timesteps != cfg.pes_per_unit:
        raise PolicyError(
            f"tokens_per_pair ({policy.tokens_per_pair}) x timesteps "
            f"({timesteps}) must fill the {cfg.pes_per_unit} lanes of a unit"
        )


def _empty_maps(cfg: PEModuleConfig):
    widx = np.full(cfg.num_units, IDLE, dtype=np.int64)
    lidx = np.full((cfg.num_units, cfg.pes_per_unit), IDLE, dtype=np.int64)
    role = np.full((cfg.num_units, cfg.pes_per_unit), IDLE, dtype=np.int16)
    return widx, lidx, role


# ---------------------------------------------------------------------------
# ZSC: kernel-position parallel spiking conv


def predict_zsc(
    layer: LayerSpec, timesteps: int, cfg: PEModuleConfig, policy: MappingPolicy
) -> PhaseCounters:
    k = layer.kernel
    upc = policy.zsc_units_per_channel
    h_out, w_out = layer.conv_out_hw()
    npos = h_out * w_out
    pairs = _ceil_div(npos, policy.tokens_per_pair)
    nchunks = _ceil_div(layer.c_in, cfg.num_units // upc)

    c = PhaseCounters()
    c.cycles = layer.c_out * pairs * nchunks
    c.occupied_lanes = layer.c_out * upc * timesteps * layer.c_in * npos
    c.add_read(BANK_LI, c.occupied_lanes)
    c.add_read(BANK_LW, layer.c_out * pairs * upc * 8 * layer.c_in)
    c.add_write(BANK_OUT, layer.c_out * npos * timesteps)
    assert k * k == upc
    return c


def _zsc_items(
    layer: LayerSpec, timesteps: int, cfg: PEModuleConfig, policy: MappingPolicy
):
    k = layer.kernel
    upc = policy.zsc_units_per_channel
    c_in, c_out = layer.c_in, layer.c_out
    h_in, w_in = layer.h_in, layer.w_in
    h_out, w_out = layer.conv_out_hw()
    npos = h_out * w_out
    tpp = policy.tokens_per_pair
    chunk_w = cfg.num_units // upc
    chunks = _chunks(c_in, chunk_w)
    T = timesteps

    # Everything but the co offsets is shared across output channels, so the
    # lane maps for each (pair, chunk) slot are built once and reused.
    slots = []
    for p0 in range(0, npos, tpp):
        toks = list(range(p0, min(npos, p0 + tpp)))
        for ci, (c0, m) in enumerate(chunks):
            lidx = np.full((cfg.num_units, cfg.pes_per_unit), IDLE, dtype=np.int64)
            role = np.full((cfg.num_units, cfg.pes_per_unit), IDLE, dtype=np.int16)
            n = m * upc
            u = np.arange(n)
            g = u // upc
            q = u % upc
            qi, qj = q // k, q % k
            ch = c0 + g
            w_base = (ch * k + qi) * k + qj  # add co*c_in*k*k per channel
            d_base = np.full(cfg.pes_per_unit, IDLE, dtype=np.int64)
            for j, p in enumerate(toks):
                y, x = divmod(p, w_out)
                rows = y * k + qi
                cols = x * k + qj
                for t in range(T):
                    lane = j * T + t
                    lidx[:n, lane] = ((t * c_in + ch) * h_in + rows) * w_in + cols
                    role[:n, lane] = t
                    d_base[lane] = (t * c_out) * npos + y * w_out + x
            occupied = n * len(toks) * T
            mem = [
                MemOp(BANK_LI, "read", occupied, "spikes"),
                MemOp(BANK_LW, "read", n * 8, "weights"),
            ]
            if ci == len(chunks) - 1:
                mem.append(MemOp(BANK_OUT, "write", len(toks) * T, "spikes"))
            nlanes = len(toks) * T
            slots.append(
                (n, nlanes, w_base, lidx, role, d_base, tuple(mem),
                 SumAcrossUnits(group_size=n), occupied)
            )

    for co in range(c_out):
        w_off = co * c_in * k * k
        for n, nlanes, w_base, lidx, role, d_base, mem, adder, occ in slots:
            widx = np.full(cfg.num_units, IDLE, dtype=np.int64)
            widx[:n] = w_base + w_off
            dest = np.full((1, cfg.pes_per_unit), IDLE, dtype=np.int64)
            dest[0, :nlanes] = d_base[:nlanes] + co * npos
            yield WorkItem(
                phase=PHASE_ZSC,
                weight_src="layer",
                lane_src=LSRC_SPIKES,
                weight_idx=widx,
                lane_idx=lidx,
                lane_role=role,
                adder=adder,
                num_groups=1,
                dest_idx=dest,
                mem_ops=mem,
                occupied_count=occ,
            )


def schedule_zsc(
    layer: LayerSpec,
    index: int,
    timesteps: int,
    requant_shift: int,
    cfg: PEModuleConfig,
    policy: MappingPolicy,
    materialize: bool = True,
) -> Schedule:
    if layer.kind != KIND_CONV:
        raise ScheduleError(f"zsc expects a spiking conv layer, got {layer.kind}")
    if layer.stride != layer.kernel:
        raise ScheduleError("zsc models tiled convs only (stride == kernel)")
    k = layer.kernel
    upc = policy.zsc_units_per_channel
    if upc != k * k:
        raise PolicyError(
            f"zsc_units_per_channel ({upc}) must equal kernel taps ({k * k})"
        )
    _pair_lanes(cfg, policy, timesteps)
    if upc > cfg.num_units:
        raise ScheduleError("kernel taps exceed the unit count")

    h_out, w_out = layer.conv_out_hw()
    source = lambda: _zsc_items(layer, timesteps, cfg, policy)  # noqa: E731
    return Schedule(
        phase=PHASE_ZSC,
        layer_index=index,
        label=layer.label,
        items=list(source()) if materialize else None,
        predicted=predict_zsc(layer, timesteps, cfg, policy),
        raw_shape=(timesteps, layer.c_out, h_out, w_out),
        out_layout=OUT_CONV,
        requant_shift=requant_shift,
        accum_bits=cfg.accumulator_width,
        item_source=source,
    )


# ---------------------------------------------------------------------------
# SSSC: whole receptive field per cycle on the 8-bit input


def predict_sssc(
    layer: LayerSpec, timesteps: int, cfg: PEModuleConfig, policy: MappingPolicy
) -> PhaseCounters:
    k = layer.kernel
    group = k * k * layer.c_in
    h_out, w_out = layer.conv_out_hw()
    npos = h_out * w_out
    per_cycle = cfg.num_units // group
    waves = _ceil_div(npos, per_cycle)

    c = PhaseCounters()
    c.cycles = layer.c_out * waves
    c.occupied_lanes = layer.c_out * npos * group * cfg.pes_per_unit
    c.add_read(BANK_LI, c.occupied_lanes)
    c.add_read(BANK_LW, layer.c_out * group * 8)
    c.add_write(BANK_OUT, layer.c_out * npos * timesteps)
    return c


def _sssc_items(
    layer: LayerSpec, timesteps: int, cfg: PEModuleConfig, policy: MappingPolicy
):
    k = layer.kernel
    group = k * k * layer.c_in
    c_in, c_out = layer.c_in, layer.c_out
    h_in, w_in = layer.h_in, layer.w_in
    h_out, w_out = layer.conv_out_hw()
    npos = h_out * w_out
    per_cycle = cfg.num_units // group
    T = timesteps
    planes = np.arange(cfg.pes_per_unit, dtype=np.int16)

    # Wave templates are channel-independent; only the weight base and the
    # output plane move with co.
    slots = []
    adder = ShiftSumWithinUnit(group_size=group)
    for p0 in range(0, npos, per_cycle):
        npix = min(per_cycle, npos - p0)
        n = npix * group
        lidx = np.full((cfg.num_units, cfg.pes_per_unit), IDLE, dtype=np.int64)
        role = np.full((cfg.num_units, cfg.pes_per_unit), IDLE, dtype=np.int16)
        u = np.arange(n)
        pl = u // group
        r = u % group
        ci = r // (k * k)
        q = r % (k * k)
        qi, qj = q // k, q % k
        p = p0 + pl
        y, x = p // w_out, p % w_out
        w_base = (ci * k + qi) * k + qj  # add co*c_in*k*k per channel
        byte = (ci * h_in + (y * k + qi)) * w_in + (x * k + qj)
        lidx[:n, :] = byte[:, None]
        role[:n, :] = planes[None, :]
        pix = p0 + np.arange(npix)
        d_base = (pix // w_out) * w_out + pix % w_out
        mem = [MemOp(BANK_LI, "read", n * 8, "image")]
        if p0 == 0:
            mem.append(MemOp(BANK_LW, "read", group * 8, "weights"))
        mem.append(MemOp(BANK_OUT, "write", npix * T, "spikes"))
        slots.append((n, npix, w_base, lidx, role, d_base, tuple(mem)))

    for co in range(c_out):
        w_off = co * c_in * k * k
        for n, npix, w_base, lidx, role, d_base, mem in slots:
            widx = np.full(cfg.num_units, IDLE, dtype=np.int64)
            widx[:n] = w_base + w_off
            dest = np.full((npix, 1), IDLE, dtype=np.int64)
            dest[:, 0] = d_base + co * npos
            yield WorkItem(
                phase=PHASE_SSSC,
                weight_src="layer",
                lane_src=LSRC_IMAGE,
                weight_idx=widx,
                lane_idx=lidx,
                lane_role=role,
                adder=adder,
                num_groups=npix,
                dest_idx=dest,
                mem_ops=mem,
                occupied_count=n * cfg.pes_per_unit,
            )


def schedule_sssc(
    layer: LayerSpec,
    index: int,
    timesteps: int,
    requant_shift: int,
    cfg: PEModuleConfig,
    policy: MappingPolicy,
    materialize: bool = True,
) -> Schedule:
    if layer.kind != KIND_CONV_INPUT:
        raise ScheduleError(
            f"sssc reads the 8-bit image and applies to the first layer only, "
            f"got {layer.kind}"
        )
    if layer.stride != layer.kernel:
        raise ScheduleError("sssc models tiled convs only (stride == kernel)")
    if cfg.pes_per_unit != 8:
        raise ScheduleError("sssc walks 8 bitplanes and needs 8 lanes per unit")
    group = layer.kernel * layer.kernel * layer.c_in
    if group > cfg.num_units:
        raise ScheduleError(
            f"receptive field needs {group} units, array has {cfg.num_units}"
        )

    h_out, w_out = layer.conv_out_hw()
    source = lambda: _sssc_items(layer, timesteps, cfg, policy)  # noqa: E731
    return Schedule(
        phase=PHASE_SSSC,
        layer_index=index,
        label=layer.label,
        items=list(source()) if materialize else None,
        predicted=predict_sssc(layer, timesteps, cfg, policy),
        raw_shape=(layer.c_out, h_out, w_out),
        out_layout=OUT_CONV_SHARED,
        requant_shift=requant_shift,
        accum_bits=cfg.accumulator_width,
        item_source=source,
    )


# ---------------------------------------------------------------------------
# WSSL: weight-stationary rows for linear layers and the classifier head


def predict_wssl(
    layer: LayerSpec, timesteps: int, cfg: PEModuleConfig, policy: MappingPolicy
) -> PhaseCounters:
    head = layer.kind == KIND_HEAD
    d_in = layer.d_in
    d_out = layer.num_classes if head else layer.d_out
    n = layer.n_tokens
    tpp = policy.tokens_per_pair
    pairs = _ceil_div(n, tpp)
    nchunks = _ceil_div(d_in, cfg.num_units)

    c = PhaseCounters()
    c.cycles = d_out * pairs * nchunks
    c.occupied_lanes = d_out * timesteps * n * d_in
    c.add_read(BANK_LI, c.occupied_lanes)
    if nchunks == 1:
        c.add_read(BANK_LW, d_out * d_in * 8)
    else:
        c.add_read(BANK_LW, d_out * pairs * d_in * 8)
        c.mark_buffer(BUF_WSSL_SPLIT, min(tpp, n) * timesteps * cfg.accumulator_width)
    if head:
        c.add_write(BANK_OUT, d_out * timesteps * HEAD_ACC_BITS)
        c.mark_buffer(BUF_HEAD_ACC, timesteps * HEAD_ACC_BITS)
    else:
        c.add_write(BANK_OUT, n * d_out * timesteps)
    return c


def _wssl_items(
    layer: LayerSpec, timesteps: int, cfg: PEModuleConfig, policy: MappingPolicy
):
    head = layer.kind == KIND_HEAD
    d_in = layer.d_in
    d_out = layer.num_classes if head else layer.d_out
    n_tok = layer.n_tokens
    tpp = policy.tokens_per_pair
    chunks = _chunks(d_in, cfg.num_units)
    split = len(chunks) > 1
    T = timesteps
    split_cap = tpp * T * cfg.accumulator_width

    # Lane maps, byte traffic, and buffer motion repeat identically for every
    # output column; precompute them per (pair, chunk) slot and shift the
    # weight and destination bases by o.
    slots = []
    for p0 in range(0, n_tok, tpp):
        toks = list(range(p0, min(n_tok, p0 + tpp)))
        npix = len(toks)
        for ci, (c0, m) in enumerate(chunks):
            lidx = np.full((cfg.num_units, cfg.pes_per_unit), IDLE, dtype=np.int64)
            role = np.full((cfg.num_units, cfg.pes_per_unit), IDLE, dtype=np.int16)
            u = np.arange(m)
            d_base = np.full(cfg.pes_per_unit, IDLE, dtype=np.int64)
            for j, tok in enumerate(toks):
                for t in range(T):
                    lane = j * T + t
                    lidx[:m, lane] = (t * n_tok + tok) * d_in + c0 + u
                    role[:m, lane] = t
                    if head:
                        d_base[lane] = t * d_out  # + o
                    else:
                        d_base[lane] = (t * n_tok + tok) * d_out  # + o
            mem = [MemOp(BANK_LI, "read", m * npix * T, "spikes")]
            if split or p0 == 0:
                mem.append(MemOp(BANK_LW, "read", m * 8, "weights"))
            bufs = []
            last = ci == len(chunks) - 1
            if split:
                grain = npix * T * cfg.accumulator_width
                if ci == 0:
                    bufs.append(BufferOp(BUF_WSSL_SPLIT, grain, split_cap))
                if last:
                    bufs.append(BufferOp(BUF_WSSL_SPLIT, -grain, split_cap))
            if head:
                if p0 == 0 and ci == 0:
                    bufs.append(BufferOp(BUF_HEAD_ACC, T * HEAD_ACC_BITS))
                if p0 + tpp >= n_tok and last:
                    bufs.append(BufferOp(BUF_HEAD_ACC, -T * HEAD_ACC_BITS))
                    mem.append(MemOp(BANK_OUT, "write", T * HEAD_ACC_BITS, "logits"))
            elif last:
                mem.append(MemOp(BANK_OUT, "write", npix * T, "spikes"))
            slots.append(
                (m, npix * T, c0 + u, lidx, role, d_base, tuple(mem), tuple(bufs),
                 SumAcrossUnits(group_size=m))
            )

    for o in range(d_out):
        w_off = o * d_in
        for m, nlanes, w_base, lidx, role, d_base, mem, bufs, adder in slots:
            widx = np.full(cfg.num_units, IDLE, dtype=np.int64)
            widx[:m] = w_base + w_off
            dest = np.full((1, cfg.pes_per_unit), IDLE, dtype=np.int64)
            dest[0, :nlanes] = d_base[:nlanes] + o
            yield WorkItem(
                phase=PHASE_WSSL,
                weight_src="layer",
                lane_src=LSRC_SPIKES,
                weight_idx=widx,
                lane_idx=lidx,
                lane_role=role,
                adder=adder,
                num_groups=1,
                dest_idx=dest,
                mem_ops=mem,
                buffer_ops=bufs,
                occupied_count=m * nlanes,
            )


def schedule_wssl(
    layer: LayerSpec,
    index: int,
    timesteps: int,
    requant_shift: int,
    cfg: PEModuleConfig,
    policy: MappingPolicy,
    materialize: bool = True,
) -> Schedule:
    if layer.kind not in (KIND_LINEAR, KIND_HEAD):
        raise ScheduleError(f"wssl expects a linear or head layer, got {layer.kind}")
    _pair_lanes(cfg, policy, timesteps)

    head = layer.kind == KIND_HEAD
    T = timesteps
    if head:
        raw_shape = (T, layer.num_classes)
        layout = OUT_LOGITS
        accum_bits = HEAD_ACC_BITS
    else:
        raw_shape = (T, layer.n_tokens, layer.d_out)
        layout = OUT_TOKENS
        accum_bits = cfg.accumulator_width
    source = lambda: _wssl_items(layer, timesteps, cfg, policy)  # noqa: E731
    return Schedule(
        phase=PHASE_WSSL,
        layer_index=index,
        label=layer.label,
        items=list(source()) if materialize else None,
        predicted=predict_wssl(layer, timesteps, cfg, policy),
        raw_shape=raw_shape,
        out_layout=layout,
        requant_shift=requant_shift,
        accum_bits=accum_bits,
        item_source=source,
    )


# ---------------------------------------------------------------------------
# STDP: score then score-value, multiplier-free attention


def predict_stdp(
    layer: LayerSpec, timesteps: int, cfg: PEModuleConfig, policy: MappingPolicy
) -> PhaseCounters:
    heads, d_h, n = layer.heads, layer.head_dim, layer.n_tokens
    T = timesteps
    L = cfg.pes_per_unit
    pack = policy.pack_heads_along_units
    v_tile = policy.stdp_v_tile

    gpc = cfg.num_units // d_h
    iw = _ceil_div(n, L)
    c = PhaseCounters()
    if pack:
        waves = _ceil_div(heads * n, gpc)
        c.cycles += T * waves * iw
    else:
        c.cycles += T * heads * _ceil_div(n, gpc) * iw
    score_occ = T * heads * d_h * n * n
    c.occupied_lanes += score_occ
    c.add_read(BANK_SW, T * heads * d_h * n * iw)
    c.add_read(BANK_LI, score_occ)
    c.add_write(BANK_LW, 8 * T * heads * n * n)

    gpc2 = cfg.num_units // n
    jt = _ceil_div(d_h, v_tile)
    iw2 = _ceil_div(n, gpc2)
    c.cycles += T * heads * jt * iw2
    sv_occ = T * heads * n * n * d_h
    c.occupied_lanes += sv_occ
    c.add_read(BANK_LW, 8 * T * heads * n * n * jt)
    c.add_read(BANK_SI, sv_occ)
    c.add_write(BANK_OUT, T * heads * n * d_h)

    c.mark_buffer(BUF_STDP_V_TILE, min(v_tile, d_h) * n)
    fan = heads if pack else 1
    c.mark_buffer(BUF_STDP_K, fan * n * d_h)
    c.mark_buffer(BUF_STDP_S, fan * n * n * 8)
    return c


def _score_items(
    layer: LayerSpec,
    t: int,
    cols: list[tuple[int, int]],
    cfg: PEModuleConfig,
    first_bufs: tuple[BufferOp, ...],
):
    """Score cycles for one timestep over an (h, j) column list."""
    heads, d_h, n = layer.heads, layer.head_dim, layer.n_tokens
    d_model = heads * d_h
    L = cfg.pes_per_unit
    gpc = cfg.num_units // d_h
    mloc = np.arange(d_h)

    for w0 in range(0, len(cols), gpc):
        slot = cols[w0 : w0 + gpc]
        ps = len(slot)
        h_s = np.array([h for h, _ in slot])
        j_s = np.array([j for _, j in slot])
        nunits = ps * d_h
        base_w = ((t * n + j_s) * d_model + h_s * d_h)[:, None] + mloc[None, :]
        base_q = (h_s * d_h)[:, None] + mloc[None, :]
        for i0 in range(0, n, L):
            pl = min(L, n - i0)
            widx, lidx, role = _empty_maps(cfg)
            widx[:nunits] = base_w.reshape(-1)
            i = i0 + np.arange(pl)
            lane = ((t * n + i)[None, None, :] * d_model + base_q[:, :, None])
            lidx[:nunits, :pl] = lane.reshape(nunits, pl)
            role[:nunits, :pl] = t
            dest = np.full((ps, L), IDLE, dtype=np.int64)
            dest[:, :pl] = ((t * heads + h_s[:, None]) * n + i[None, :]) * n + j_s[
                :, None
            ]
            occ = nunits * pl
            mem = (
                MemOp(BANK_SW, "read", nunits, "kbits"),
                MemOp(BANK_LI, "read", occ, "spikes"),
                MemOp(BANK_LW, "write", ps * pl * 8, "scores"),
            )
            bufs = first_bufs if (w0 == 0 and i0 == 0) else ()
            yield WorkItem(
                phase=PHASE_STDP_SCORE,
                weight_src="kbits",
                lane_src=LSRC_Q,
                weight_idx=widx,
                lane_idx=lidx,
                lane_role=role,
                adder=SumAcrossUnits(group_size=d_h),
                num_groups=ps,
                dest_idx=dest,
                mem_ops=mem,
                buffer_ops=bufs,
            )


def _sv_items(
    layer: LayerSpec,
    h: int,
    t: int,
    cfg: PEModuleConfig,
    v_tile: int,
    tail_bufs: tuple[BufferOp, ...],
):
    """Score-value cycles for one (head, timestep)."""
    heads, d_h, n = layer.heads, layer.head_dim, layer.n_tokens
    d_model = heads * d_h
    gpc2 = cfg.num_units // n
    j = np.arange(n)

    tiles = _chunks(d_h, v_tile)
    for ti, (jt0, tw) in enumerate(tiles):
        tile_bits = tw * n
        n_iw = _ceil_div(n, gpc2)
        for wi, i0 in enumerate(range(0, n, gpc2)):
            pg = min(gpc2, n - i0)
            nunits = pg * n
            widx, lidx, role = _empty_maps(cfg)
            i = i0 + np.arange(pg)
            widx[:nunits] = (
                (((t * heads + h) * n + i)[:, None] * n + j[None, :]).reshape(-1)
            )
            jj = jt0 + np.arange(tw)
            lane = ((t * n + j)[None, :, None] * d_model + h * d_h + jj[None, None, :])
            lidx[:nunits, :tw] = np.broadcast_to(lane, (pg, n, tw)).reshape(nunits, tw)
            role[:nunits, :tw] = t
            dest = np.full((pg, cfg.pes_per_unit), IDLE, dtype=np.int64)
            dest[:, :tw] = (t * n + i)[:, None] * d_model + h * d_h + jj[None, :]
            occ = nunits * tw
            mem = (
                MemOp(BANK_LW, "read", pg * n * 8, "scores"),
                MemOp(BANK_SI, "read", occ, "spikes"),
                MemOp(BANK_OUT, "write", pg * tw, "spikes"),
            )
            bufs: list[BufferOp] = []
            if wi == 0:
                bufs.append(BufferOp(BUF_STDP_V_TILE, tile_bits, v_tile * n))
            if wi == n_iw - 1:
                bufs.append(BufferOp(BUF_STDP_V_TILE, -tile_bits, v_tile * n))
                if ti == len(tiles) - 1:
                    bufs.extend(tail_bufs)
            yield WorkItem(
                phase=PHASE_STDP_SV,
                weight_src="scores",
                lane_src=LSRC_V,
                weight_idx=widx,
                lane_idx=lidx,
                lane_role=role,
                adder=SumAcrossUnits(group_size=n),
                num_groups=pg,
                dest_idx=dest,
                mem_ops=mem,
                buffer_ops=tuple(bufs),
            )


def _stdp_items(
    layer: LayerSpec, timesteps: int, cfg: PEModuleConfig, policy: MappingPolicy
):
    heads, d_h, n = layer.heads, layer.head_dim, layer.n_tokens
    v_tile = policy.stdp_v_tile
    pack = policy.pack_heads_along_units

    fan = heads if pack else 1
    k_bits = fan * n * d_h
    s_bits = fan * n * n * 8
    first = (BufferOp(BUF_STDP_K, k_bits), BufferOp(BUF_STDP_S, s_bits))
    tail = (BufferOp(BUF_STDP_K, -k_bits), BufferOp(BUF_STDP_S, -s_bits))
    for t in range(timesteps):
        if pack:
            cols = [(h, j) for h in range(heads) for j in range(n)]
            yield from _score_items(layer, t, cols, cfg, first)
            for h in range(heads):
                yield from _sv_items(
                    layer, h, t, cfg, v_tile, tail if h == heads - 1 else ()
                )
        else:
            for h in range(heads):
                cols = [(h, j) for j in range(n)]
                yield from _score_items(layer, t, cols, cfg, first)
                yield from _sv_items(layer, h, t, cfg, v_tile, tail)


def schedule_stdp(
    layer: LayerSpec,
    index: int,
    timesteps: int,
    requant_shift: int,
    cfg: PEModuleConfig,
    policy: MappingPolicy,
    materialize: bool = True,
) -> Schedule:
    if layer.kind != KIND_ATTENTION:
        raise ScheduleError(f"stdp expects an attention layer, got {layer.kind}")
    heads, d_h, n = layer.heads, layer.head_dim, layer.n_tokens
    if d_h > 127:
        raise WidthError(
            f"score entries reach head_dim ({d_h}) and must fit the signed "
            f"8-bit weight port"
        )
    if d_h > cfg.num_units:
        raise ScheduleError("head_dim exceeds the unit count")
    if n > cfg.num_units:
        raise ScheduleError(
            f"score-value groups span {n} tokens, array has {cfg.num_units} units"
        )
    if not 1 <= policy.stdp_v_tile <= cfg.pes_per_unit:
        raise PolicyError(f"stdp_v_tile must lie in 1..{cfg.pes_per_unit}")

    source = lambda: _stdp_items(layer, timesteps, cfg, policy)  # noqa: E731
    return Schedule(
        phase=PHASE_STDP,
        layer_index=index,
        label=layer.label,
        items=list(source()) if materialize else None,
        predicted=predict_stdp(layer, timesteps, cfg, policy),
        raw_shape=(timesteps, n, heads * d_h),
        out_layout=OUT_TOKENS,
        requant_shift=requant_shift,
        accum_bits=cfg.accumulator_width,
        score_shape=(timesteps, heads, n, n),
        item_source=source,
    )


# ---------------------------------------------------------------------------
# Dispatch


_PREDICTORS = {
    KIND_CONV_INPUT: predict_sssc,
    KIND_CONV: predict_zsc,
    KIND_LINEAR: predict_wssl,
    KIND_HEAD: predict_wssl,
    KIND_ATTENTION: predict_stdp,
}

_BUILDERS = {
    KIND_CONV_INPUT: schedule_sssc,
    KIND_CONV: schedule_zsc,
    KIND_LINEAR: schedule_wssl,
    KIND_HEAD: schedule_wssl,
    KIND_ATTENTION: schedule_stdp,
}

LAYER_PHASE = {
    KIND_CONV_INPUT: PHASE_SSSC,
    KIND_CONV: PHASE_ZSC,
    KIND_LINEAR: PHASE_WSSL,
    KIND_HEAD: PHASE_WSSL,
    KIND_ATTENTION: PHASE_STDP,
}


def schedule_layer(
    spec: NetworkSpec,
    index: int,
    cfg: PEModuleConfig | None = None,
    policy: MappingPolicy | None = None,
    materialize: bool = True,
) -> Schedule | None:
    """Build the layer's schedule; residuals cost no array cycles."""
    cfg = cfg or PEModuleConfig()
    policy = policy or MappingPolicy()
    layer = spec.layers[index]
    if layer.kind == KIND_RESIDUAL:
        return None
    builder = _BUILDERS[layer.kind]
    shift = spec.requant_shift_of(index)
    return builder(layer, index, spec.timesteps, shift, cfg, policy,
                   materialize=materialize)


def predict_layer(
    spec: NetworkSpec,
    index: int,
    cfg: PEModuleConfig | None = None,
    policy: MappingPolicy | None = None,
) -> PhaseCounters | None:
    """Closed-form counters for one layer without materializing items."""
    cfg = cfg or PEModuleConfig()
    policy = policy or MappingPolicy()
    layer = spec.layers[index]
    if layer.kind == KIND_RESIDUAL:
        return None
    return _PREDICTORS[layer.kind](layer, spec.timesteps, cfg, policy)
