"""Folded batch-norm LIF: fold correctness, fixed-point recurrence, resets."""

import numpy as np
import pytest

from spikeaccel.errors import FoldError, PrecisionError, WidthError
from spikeaccel.neuron import (
    MANT_BITS_LIMIT,
    RESET_SUBTRACT,
    TFLIFParams,
    fold_bn_into_lif,
    fold_ulp_bound,
    tflif_apply,
    tflif_forward,
)


def _params(mant, bias, theta=0, shift=0, **kw):
    """One-channel params with explicit integer constants."""
    return TFLIFParams(
        scale_mant=np.array([mant], dtype=np.int32),
        scale_shift=np.array([shift], dtype=np.int32),
        bias_folded=np.array([bias], dtype=np.int64),
        theta_scaled=np.array([theta], dtype=np.int64),
        **kw,
    )


class TestFold:
    def test_identity_channel(self):
        # gamma=1, var+eps=1, mean=0, beta=theta: BN(x) - theta == x.
        # Largest shift with rint(2**s) <= 32767 is 14.
        eps = 1e-5
        p = fold_bn_into_lif([1.0], [0.7], [0.0], [1.0 - eps], eps, [0.7])
        assert int(p.scale_shift[0]) == 14
        assert int(p.scale_mant[0]) == 1 << 14
        assert int(p.bias_folded[0]) == 0
        assert int(p.theta_scaled[0]) == round(0.7 * (1 << 14))

    def test_gamma2_threshold_brute_force(self):
        # BN(x) = 2x, theta = 1: spike iff 2x >= 1, i.e. x >= 1 on ints.
        eps = 1e-5
        p = fold_bn_into_lif([2.0], [0.0], [0.0], [1.0 - eps], eps, [1.0],
                             timesteps=1)
        for x in range(-128, 128):
            spikes, _ = tflif_forward((x,), p)
            assert spikes[0] == (1 if 2 * x >= 1 else 0), x

    def test_random_folds_within_ulp_bound(self):
        rng = np.random.default_rng(101)
        checked = 0
        for _ in range(100):
            gamma = rng.uniform(-2, 2, size=4)
            beta = rng.uniform(-3, 3, size=4)
            mean = rng.uniform(-5, 5, size=4)
            var = rng.uniform(0.01, 4, size=4)
            theta = rng.uniform(-1, 2, size=4)
            eps = 1e-5
            p = fold_bn_into_lif(gamma, beta, mean, var, eps, theta,
                                 timesteps=1)
            m = gamma / np.sqrt(var + eps)
            b = beta - m * mean - theta
            for c in range(4):
                for x in rng.integers(-128, 128, size=25):
                    x = int(x)
                    spikes, _ = tflif_forward((x,), p, channel=c)
                    exact = m[c] * x + b[c]
                    if spikes[0] != (1 if exact >= 0 else 0):
                        # decisions may differ only inside the rounding band
                        assert abs(exact) <= fold_ulp_bound(p, c, x) + 1e-9
                    checked += 1
        assert checked == 10000

    def test_zero_variance_rejected(self):
        with pytest.raises(FoldError):
            fold_bn_into_lif([1.0], [0.0], [0.0], [0.0], 0.0, [1.0])

    def test_quant_bits_range(self):
        for bad in (1, MANT_BITS_LIMIT + 1):
            with pytest.raises(PrecisionError):
                fold_bn_into_lif([1.0], [0.0], [0.0], [1.0], 1e-5, [1.0],
                                 quant_bits=bad)

    def test_unfittable_mantissa(self):
        with pytest.raises(PrecisionError):
            fold_bn_into_lif([1e30], [0.0], [0.0], [1.0], 1e-5, [1.0])

    def test_unfittable_bias(self):
        with pytest.raises(PrecisionError):
            fold_bn_into_lif([1.0], [1e12], [0.0], [1.0], 1e-5, [0.0])

    def test_narrow_mantissa_uses_smaller_shift(self):
        eps = 1e-5
        wide = fold_bn_into_lif([1.0], [0.0], [0.0], [1.0 - eps], eps, [0.0])
        narrow = fold_bn_into_lif([1.0], [0.0], [0.0], [1.0 - eps], eps, [0.0],
                                  quant_bits=8)
        assert int(narrow.scale_shift[0]) < int(wide.scale_shift[0])
        assert abs(int(narrow.scale_mant[0])) <= 127

    def test_ulp_bound_formula(self):
        p = _params(1, 0, shift=5)
        assert fold_ulp_bound(p, 0, 0) == 0.5 * 1 * 2.0 ** -5
        assert fold_ulp_bound(p, 0, -100) == 0.5 * 101 * 2.0 ** -5


class TestForward:
    def test_hand_stepped_leaky_silence(self):
        # u: -1, -2, -2, -2 with decay 1/2 (floor), never reaches 0
        p = _params(1, -3)
        spikes, u = tflif_forward((2, 2, 2, 2), p)
        assert spikes == (0, 0, 0, 0)
        assert u == -2

    def test_hard_reset_clears_membrane(self):
        p = _params(1, 10)
        spikes, u = tflif_forward((0, 0, 0, 0), p)
        assert spikes == (1, 1, 1, 1)
        assert u == 0

    def test_subtract_reset(self):
        p = _params(1, 0, theta=5, decay_num=1, decay_den=1,
                    reset_mode=RESET_SUBTRACT)
        spikes, u = tflif_forward((3, 3, 3, 3), p)
        # u: 3 -> -2, +3 = 1 -> -4, +3 = -1, +3 = 2 -> -3
        assert spikes == (1, 1, 0, 1)
        assert u == -3

    def test_no_decay_accumulates(self):
        p = _params(1, -100, decay_num=1, decay_den=1)
        spikes, u = tflif_forward((30, 30, 30, 30), p)
        assert spikes == (0, 0, 0, 0)
        assert u == 4 * (30 - 100)

    def test_timestep_count_enforced(self):
        p = _params(1, 0)
        with pytest.raises(WidthError):
            tflif_forward((1, 2, 3), p)

    def test_rejects_wide_accumulator(self):
        p = _params(1, 0)
        with pytest.raises(WidthError):
            tflif_forward((128, 0, 0, 0), p)

    def test_floor_decay_on_negative_membrane(self):
        # (-1 * 1) // 2 == -1: the leak may not pull toward zero from below
        p = _params(1, -1)
        _, u = tflif_forward((0, 0, 0, 0), p)
        assert u == -2  # fixed point of u -> u//2 - 1


class TestApply:
    def test_matches_scalar_forward(self):
        rng = np.random.default_rng(113)
        p = TFLIFParams(
            scale_mant=np.array([3, -2], dtype=np.int32),
            scale_shift=np.array([1, 4], dtype=np.int32),
            bias_folded=np.array([-7, 12], dtype=np.int64),
            theta_scaled=np.array([4, 9], dtype=np.int64),
            reset_mode=RESET_SUBTRACT,
        )
        acc = rng.integers(-128, 128, size=(4, 5, 4))
        ch = rng.integers(0, 2, size=(5, 4))
        spikes = tflif_apply(acc, p, ch)
        assert spikes.shape == acc.shape
        assert spikes.dtype == np.uint8
        for i in range(5):
            for j in range(4):
                want, _ = tflif_forward(acc[:, i, j], p, channel=int(ch[i, j]))
                assert tuple(spikes[:, i, j]) == want

    def test_leading_axis_guard(self):
        p = _params(1, 0)
        with pytest.raises(WidthError):
            tflif_apply(np.zeros((3, 2)), p, np.zeros(2, dtype=np.int64))

    def test_range_guard(self):
        p = _params(1, 0)
        bad = np.zeros((4, 2), dtype=np.int64)
        bad[0, 0] = 300
        with pytest.raises(WidthError):
            tflif_apply(bad, p, np.zeros(2, dtype=np.int64))


class TestParamValidation:
    def test_unknown_reset_mode(self):
        with pytest.raises(WidthError):
            _params(1, 0, reset_mode="wrap")

    def test_decay_must_be_fraction(self):
        with pytest.raises(WidthError):
            _params(1, 0, decay_num=3, decay_den=2)
        with pytest.raises(WidthError):
            _params(1, 0, decay_num=-1, decay_den=2)

    def test_mantissa_width_limit(self):
        with pytest.raises(WidthError):
            _params(1 << 15, 0)

    def test_shift_range(self):
        with pytest.raises(WidthError):
            _params(1, 0, shift=32)

    def test_num_channels(self):
        p = TFLIFParams(
            scale_mant=np.zeros(6, dtype=np.int32),
            scale_shift=np.zeros(6, dtype=np.int32),
            bias_folded=np.zeros(6, dtype=np.int64),
            theta_scaled=np.zeros(6, dtype=np.int64),
        )
        assert p.num_channels == 6
