"""Reports, throughput arithmetic and distribution verdicts."""

import json
from fractions import Fraction

import pytest

from spikeaccel.harness import (
    MODE_CYCLE,
    MODE_FUNCTIONAL,
    MODE_SHAPE,
    REPORT_PHASES,
    SOPS_PER_LANE_CYCLE,
    REFERENCE_SHARES,
    compare_distribution,
    efficiency_metrics,
    render_report,
    report_shares,
    run,
)
from spikeaccel.network import build_desk_spec, build_full_spec

# closed-form phase totals for the 8-block, 512-wide network
FULL_CYCLES = {"zsc": 401408, "sssc": 19136, "wssl": 4914896, "stdp": 357504}
FULL_TOTAL = 5692944


class TestMetrics:
    def test_peak_rate(self):
        m = efficiency_metrics()
        assert m["num_pes"] == 4096
        assert m["peak_gsops"] == 4096.0
        assert "area_mm2" not in m and "power_mw" not in m

    def test_density_and_efficiency(self):
        m = efficiency_metrics(area_mm2=0.844, power_mw=416.1)
        assert m["tsops_per_mm2"] == pytest.approx(4096.0 / 1000.0 / 0.844)
        assert m["tsops_per_w"] == pytest.approx(4096.0 / 416.1)

    def test_scales_with_array_and_clock(self):
        m = efficiency_metrics(num_pes=8192, clock_mhz=250.0)
        assert m["peak_gsops"] == 8192 * SOPS_PER_LANE_CYCLE * 250.0 / 1000.0


class TestShapeOnly:
    def test_full_model_phase_totals(self):
        rep = run(build_full_spec(), mode=MODE_SHAPE)
        for phase, cycles in FULL_CYCLES.items():
            assert rep["phases"][phase]["cycles"] == cycles
        assert rep["total_cycles"] == FULL_TOTAL

    def test_shares_sum_to_100(self):
        rep = run(build_full_spec(), mode=MODE_SHAPE)
        assert sum(report_shares(rep).values()) == pytest.approx(100.0)

    def test_fps_fraction_identity(self):
        rep = run(build_full_spec(), mode=MODE_SHAPE)
        num, den = rep["throughput"]["fps_exact"]
        assert Fraction(num, den) * rep["total_cycles"] == 500_000_000
        assert rep["throughput"]["fps"] == pytest.approx(num / den)

    def test_compute_section(self):
        rep = run(build_full_spec(), mode=MODE_SHAPE)
        c = rep["compute"]
        assert c["sops_per_lane_cycle"] == SOPS_PER_LANE_CYCLE
        assert c["total_sops"] == c["occupied_lane_cycles"] * 2
        assert 0 < c["utilization_pct"] <= 100.0
        assert c["achieved_gsops"] <= 4096.0
        # no execution happened, so no spiking-lane figure
        assert "spiking_lane_cycles" not in c

    def test_layer_rows_skip_residuals(self):
        full = build_full_spec()
        rep = run(full, mode=MODE_SHAPE)
        residuals = sum(l.kind == "residual" for l in full.layers)
        assert len(rep["layers"]) == len(full.layers) - residuals
        assert sum(row["cycles"] for row in rep["layers"]) == FULL_TOTAL

    def test_matches_cycle_mode_totals(self):
        desk = build_desk_spec()
        shape = run(desk, mode=MODE_SHAPE)
        cycle = run(desk, mode=MODE_CYCLE, seed=5)
        assert shape["total_cycles"] == cycle["total_cycles"]
        assert shape["phases"] == cycle["phases"]

    def test_notes_scope_the_model(self):
        rep = run(build_desk_spec(), mode=MODE_SHAPE)
        assert "array compute only" in rep["notes"]


class TestCycleMode:
    def test_desk_equivalence(self):
        rep = run(build_desk_spec(), mode=MODE_CYCLE, seed=3)
        eq = rep["equivalence"]
        assert eq["logits_match"] is True
        assert eq["layers_match"] is True
        assert eq["first_mismatch_layer"] is None
        assert eq["counters_match"] is True
        assert rep["total_cycles"] == 2540

    def test_functional_mode_stops_at_equivalence(self):
        rep = run(build_desk_spec(), mode=MODE_FUNCTIONAL, seed=3)
        assert "phases" not in rep and "total_cycles" not in rep
        assert rep["equivalence"]["logits_match"] is True
        assert "classification" in rep and "golden_digest" in rep

    def test_functional_and_cycle_agree_on_goldens(self):
        func = run(build_desk_spec(), mode=MODE_FUNCTIONAL, seed=3)
        cyc = run(build_desk_spec(), mode=MODE_CYCLE, seed=3)
        assert func["golden_digest"] == cyc["golden_digest"]
        assert func["classification"] == cyc["classification"]

    def test_memory_section(self):
        rep = run(build_desk_spec(), mode=MODE_CYCLE, seed=0)
        mem = rep["memory"]
        assert set(mem["banks"]) == {"lw", "sw", "li", "si", "out"}
        red = mem["reduction"]
        assert red["zsc_partials"]["proposed_spill_bits"] == 0
        assert red["zsc_partials"]["naive_spill_bits"] > 0
        assert red["stdp_v"]["proposed_tile_bits"] \
            < red["stdp_v"]["naive_full_v_bits"]
        # desk layers never split d_in across chunks
        assert "wssl_split" not in red

    def test_full_model_reduction_reports_split(self):
        rep = run(build_full_spec(), mode=MODE_SHAPE)
        red = rep["memory"]["reduction"]
        assert red["wssl_split"]["proposed_bits"] == 192
        assert red["wssl_split"]["naive_full_column_bits"] == 196 * 4 * 24

    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError):
            run(build_desk_spec(), mode="fast")


class TestRendering:
    def test_deterministic_bytes(self):
        a = render_report(run(build_desk_spec(), mode=MODE_CYCLE, seed=9))
        b = render_report(run(build_desk_spec(), mode=MODE_CYCLE, seed=9))
        assert a == b
        assert a.endswith("\n")

    def test_round_trips_as_json(self):
        rep = run(build_desk_spec(), mode=MODE_SHAPE)
        assert json.loads(render_report(rep)) == rep


class TestDistributionVerdict:
    def test_self_comparison_passes(self):
        verdict = compare_distribution(dict(REFERENCE_SHARES))
        assert verdict["mandatory"] == "PASS-ORDER"
        assert verdict["tight"] == "PASS-TIGHT"
        assert verdict["dominant_phase"] == "wssl"
        assert all(d == 0 for d in verdict["deltas_pp"].values())

    def test_order_swap_fails(self):
        shares = dict(REFERENCE_SHARES)
        shares["zsc"], shares["stdp"] = shares["stdp"], shares["zsc"]
        verdict = compare_distribution(shares)
        assert verdict["mandatory"] == "FAIL-ORDER"

    def test_weak_dominant_fails(self):
        shares = {"wssl": 55.0, "stdp": 30.0, "sssc": 10.0, "zsc": 5.0}
        verdict = compare_distribution(shares)
        assert verdict["order_ok"] is True
        assert verdict["dominant_ok"] is False
        assert verdict["mandatory"] == "FAIL-ORDER"

    def test_tolerance_width(self):
        shares = {"wssl": 86.79, "stdp": 8.88, "sssc": 4.13, "zsc": 0.20}
        tight = compare_distribution(shares, tolerance_pp=5.0)
        assert tight["tight"] == "FAIL-TIGHT"  # stdp off by 6 points
        loose = compare_distribution(shares, tolerance_pp=10.0)
        assert loose["tight"] == "PASS-TIGHT"

    def test_missing_phase_raises(self):
        with pytest.raises(KeyError):
            compare_distribution({"wssl": 100.0})

    def test_report_shares_extraction(self):
        rep = run(build_full_spec(), mode=MODE_SHAPE)
        shares = report_shares(rep)
        assert set(shares) == set(REPORT_PHASES)
        assert shares["wssl"] == rep["phases"]["wssl"]["share_pct"]
