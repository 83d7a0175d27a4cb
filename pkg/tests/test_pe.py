"""PE module arithmetic: mux multiply, adder tree modes, requantization."""

import math

import numpy as np
import pytest

from spikeaccel.errors import PolicyError, WidthError
from spikeaccel.pe import (
    ArithmeticTrace,
    PassThrough,
    PEModuleConfig,
    ShiftSumWithinUnit,
    SumAcrossUnits,
    UnitInput,
    adder_tree_reduce,
    mux_multiply_batch,
    pe_mux_multiply,
    requantize_batch,
    requantize_to_8bit,
    shift_sum_within_unit,
    unit_cycle,
)

CFG = PEModuleConfig()


class TestMuxMultiply:
    def test_spike_low(self):
        assert pe_mux_multiply(-77, 0) == 0

    def test_spike_high(self):
        assert pe_mux_multiply(-77, 1) == -77

    def test_exhaustive_256x2(self):
        for w in range(-128, 128):
            assert pe_mux_multiply(w, 0) == w * 0
            assert pe_mux_multiply(w, 1) == w * 1

    def test_weight_width_guard(self):
        with pytest.raises(WidthError):
            pe_mux_multiply(128, 1)
        with pytest.raises(WidthError):
            pe_mux_multiply(-129, 0)

    def test_spike_must_be_bit(self):
        with pytest.raises(WidthError):
            pe_mux_multiply(1, 2)


class TestUnitCycle:
    def test_all_lanes_quiet(self):
        assert unit_cycle(UnitInput(weight=5, spikes=(0,) * 8)) == [0] * 8

    def test_all_lanes_firing(self):
        assert unit_cycle(UnitInput(weight=3, spikes=(1,) * 8)) == [3] * 8

    def test_fuzz_against_scalar(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            w = int(rng.integers(-128, 128))
            s = tuple(int(b) for b in rng.integers(0, 2, size=8))
            assert unit_cycle(UnitInput(weight=w, spikes=s)) == [w * b for b in s]

    def test_lane_count_guard(self):
        with pytest.raises(WidthError):
            unit_cycle(UnitInput(weight=1, spikes=(1, 0)))


class TestShiftSum:
    def test_w1_x255(self):
        products = [1 * ((255 >> b) & 1) for b in range(8)]
        assert shift_sum_within_unit(products, range(8)) == 255

    def test_wneg128_x255(self):
        products = [-128 * ((255 >> b) & 1) for b in range(8)]
        assert shift_sum_within_unit(products, range(8)) == -32640

    def test_exhaustive_65536(self):
        # single-weight 8x8 reconstruction over every (w, x) pair
        planes = list(range(8))
        for w in range(-128, 128):
            for x in range(256):
                products = [w * ((x >> b) & 1) for b in planes]
                assert shift_sum_within_unit(products, planes) == w * x

    def test_duplicate_tag_rejected(self):
        with pytest.raises(PolicyError):
            shift_sum_within_unit([1, 1], [3, 3])

    def test_tag_out_of_range(self):
        with pytest.raises(WidthError):
            shift_sum_within_unit([1], [8])

    def test_length_mismatch(self):
        with pytest.raises(WidthError):
            shift_sum_within_unit([1, 2], [0])


class TestRequantize:
    def test_zero(self):
        for shift in (0, 5, 31):
            assert requantize_to_8bit(0, shift) == 0

    def test_saturates_high(self):
        assert requantize_to_8bit(1000, 2) == 127

    def test_floor_negative(self):
        # floor(-1000 / 8) = -125, inside range: no saturation
        assert requantize_to_8bit(-1000, 3) == -125

    def test_floor_semantics(self):
        for acc in range(-64, 64):
            for shift in range(0, 6):
                want = math.floor(acc / 2 ** shift)
                want = max(-128, min(127, want))
                assert requantize_to_8bit(acc, shift) == want

    def test_shift_range_guard(self):
        with pytest.raises(WidthError):
            requantize_to_8bit(1, 32)
        with pytest.raises(WidthError):
            requantize_to_8bit(1, -1)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(31)
        acc = rng.integers(-(2 ** 23), 2 ** 23, size=300)
        for shift in (0, 3, 9):
            batch = requantize_batch(acc, shift)
            for a, b in zip(acc, batch):
                assert int(b) == requantize_to_8bit(int(a), shift)


class TestAdderTree:
    def test_zeros_all_modes(self):
        out = np.zeros((8, 8), dtype=np.int64)
        for mode in (SumAcrossUnits(group_size=4), ShiftSumWithinUnit(group_size=2),
                     PassThrough()):
            roles = np.tile(np.arange(8), (8, 1))
            reduced = adder_tree_reduce(out, mode, CFG, lane_roles=roles)
            assert not np.asarray(reduced).any()

    def test_full_group_counting(self):
        ones = np.ones((512, 8), dtype=np.int64)
        reduced = adder_tree_reduce(ones, SumAcrossUnits(group_size=512), CFG)
        assert reduced.shape == (1, 8)
        assert (reduced == 512).all()

    def test_sum_across_units_matches_flat_reference(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            g = int(rng.choice([1, 2, 4, 8, 16]))
            n = int(rng.integers(1, 64 // g + 1))
            out = np.zeros((64, 8), dtype=np.int64)
            out[: n * g] = rng.integers(-128, 128, size=(n * g, 8))
            reduced = adder_tree_reduce(out, SumAcrossUnits(group_size=g), CFG,
                                        num_groups=n)
            want = out[: n * g].reshape(n, g, 8).sum(axis=1)
            assert np.array_equal(reduced, want)

    def test_shift_sum_mode_matches_scalar(self):
        rng = np.random.default_rng(43)
        g = 3
        n = 2
        out = np.zeros((8, 8), dtype=np.int64)
        roles = np.tile(np.arange(8), (8, 1))
        out[: n * g] = rng.integers(-16, 16, size=(n * g, 8))
        reduced = adder_tree_reduce(out, ShiftSumWithinUnit(group_size=g), CFG,
                                    lane_roles=roles, num_groups=n)
        per_unit = [shift_sum_within_unit(list(out[u]), list(roles[u]))
                    for u in range(n * g)]
        want = np.array([[sum(per_unit[i * g:(i + 1) * g])] for i in range(n)])
        assert np.array_equal(reduced, want)

    def test_order_invariance(self):
        # integer sums with no overflow are permutation-invariant per group
        rng = np.random.default_rng(47)
        out = rng.integers(-128, 128, size=(16, 8)).astype(np.int64)
        base = adder_tree_reduce(out, SumAcrossUnits(group_size=16), CFG)
        perm = rng.permutation(16)
        again = adder_tree_reduce(out[perm], SumAcrossUnits(group_size=16), CFG)
        assert np.array_equal(base, again)

    def test_tail_must_be_idle(self):
        out = np.zeros((8, 8), dtype=np.int64)
        out[7, 0] = 1  # beyond 1 group of 4
        with pytest.raises(PolicyError):
            adder_tree_reduce(out, SumAcrossUnits(group_size=4), CFG, num_groups=1)

    def test_overflow_raises_width_error(self):
        # 512 lanes of +127 is within 24 bits, but a tighter accumulator trips
        tight = PEModuleConfig(accumulator_width=8)
        out = np.full((4, 8), 127, dtype=np.int64)
        with pytest.raises(WidthError):
            adder_tree_reduce(out, SumAcrossUnits(group_size=4), tight)

    def test_24bit_boundary(self):
        # 2^23 - 1 passes, 2^23 trips
        out = np.zeros((2, 8), dtype=np.int64)
        out[0, 0] = (1 << 23) - 1
        ok = adder_tree_reduce(out, SumAcrossUnits(group_size=2), CFG)
        assert ok[0, 0] == (1 << 23) - 1
        out[1, 0] = 1
        with pytest.raises(WidthError):
            adder_tree_reduce(out, SumAcrossUnits(group_size=2), CFG)

    def test_pass_through_copies(self):
        out = np.arange(16).reshape(2, 8)
        got = adder_tree_reduce(out, PassThrough(), CFG)
        assert np.array_equal(got, out)
        got[0, 0] = 99
        assert out[0, 0] == 0

    def test_bad_group_size(self):
        out = np.zeros((4, 8), dtype=np.int64)
        with pytest.raises(PolicyError):
            adder_tree_reduce(out, SumAcrossUnits(group_size=5), CFG, num_groups=1)


class TestBatchMux:
    def test_matches_scalar_products(self):
        rng = np.random.default_rng(53)
        w = rng.integers(-128, 128, size=16)
        b = rng.integers(0, 2, size=(16, 8))
        got = mux_multiply_batch(w, b)
        for u in range(16):
            assert got[u].tolist() == [int(w[u]) * int(x) for x in b[u]]

    def test_rejects_wide_weight(self):
        with pytest.raises(WidthError):
            mux_multiply_batch(np.array([200]), np.ones((1, 8), dtype=np.uint8))

    def test_rejects_non_bits(self):
        with pytest.raises(WidthError):
            mux_multiply_batch(np.array([1]), np.full((1, 8), 2))

    def test_trace_products_never_exceed_weight_width(self):
        # structural claim: a lane product is the weight or zero, so the
        # recorded arithmetic never shows anything wider than 8x1
        rng = np.random.default_rng(59)
        trace = ArithmeticTrace()
        for cycle in range(10):
            w = rng.integers(-128, 128, size=4)
            b = rng.integers(0, 2, size=(4, 8))
            p = mux_multiply_batch(w, b)
            assert p.min() >= -128 and p.max() <= 127
            for u in range(4):
                assert set(np.unique(p[u])) <= {0, int(w[u])}
            trace.record_cycle(cycle, w, b, p)
        assert trace.lines
        assert all(line.startswith("cycle=") for line in trace.lines)


class TestConfig:
    def test_total_pes(self):
        assert CFG.total_pes == 4096
        assert CFG.num_units == 512
        assert CFG.pes_per_unit == 8

    def test_accum_limit(self):
        assert CFG.accum_limit == 1 << 23

    def test_invalid_geometry(self):
        with pytest.raises(PolicyError):
            PEModuleConfig(num_units=0)
        with pytest.raises(PolicyError):
            PEModuleConfig(accumulator_width=1)
