"""Threshold-fused leaky integrate-and-fire activation.

Batch-norm scale, batch-norm bias and the firing threshold are folded
offline into a per-channel fixed-point multiplier and a pre-scaled
integer bias, so the online neuron compares its membrane against zero
and needs no multiplier wider than mantissa times 8-bit accumulator.
The membrane recurrence runs entirely in the scaled integer domain:

    u[t] = floor(u[t-1] * decay_num / decay_den)  (per reset mode)
           + mant[c] * acc[t] + bias[c]
    spike[t] = (u[t] >= 0)

Hard reset zeroes the membrane after a spike; subtract mode subtracts
the scaled pre-fold threshold instead.  State carries across the fused
timesteps of one frame and is discarded between frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FoldError, PrecisionError, WidthError

RESET_HARD = "hard"
RESET_SUBTRACT = "subtract"

MAX_SHIFT = 31
MANT_BITS_LIMIT = 16
BIAS_LIMIT = 2 ** 31 - 1


@dataclass(frozen=True)
class TFLIFParams:
    """Folded per-channel neuron parameters.

    scale_mant/scale_shift give the fixed-point multiplier
    mant * 2**-shift; bias_folded and theta_scaled are already
    multiplied by 2**shift so they add directly onto mant*acc.
    """

    scale_mant: np.ndarray    # int32 [C]
    scale_shift: np.ndarray   # int32 [C], exponent of the scaled domain
    bias_folded: np.ndarray   # int64 [C], includes -theta
    theta_scaled: np.ndarray  # int64 [C], used only by subtract reset
    decay_num: int = 1
    decay_den: int = 2
    reset_mode: str = RESET_HARD
    timesteps: int = 4

    def __post_init__(self):
        if self.reset_mode not in (RESET_HARD, RESET_SUBTRACT):
            raise WidthError(f"unknown reset mode {self.reset_mode!r}")
        if self.decay_den < 1 or not 0 <= self.decay_num <= self.decay_den:
            raise WidthError("decay must be a fraction in [0, 1]")
        if self.timesteps < 1:
            raise WidthError("need at least one timestep")
        sh = np.asarray(self.scale_shift)
        if sh.size and (sh.min() < 0 or sh.max() > MAX_SHIFT):
            raise WidthError(f"scale shift out of range 0..{MAX_SHIFT}")
        m = np.asarray(self.scale_mant)
        lim = 1 << (MANT_BITS_LIMIT - 1)
        if m.size and (m.min() < -lim or m.max() >= lim):
            raise WidthError(f"mantissa exceeds {MANT_BITS_LIMIT} signed bits")

    @property
    def num_channels(self) -> int:
        return int(np.asarray(self.scale_mant).shape[0])


def fold_bn_into_lif(gamma, beta, mean, var, eps: float, theta,
                     quant_bits: int = 16, decay: tuple[int, int] = (1, 2),
                     reset_mode: str = RESET_HARD,
                     timesteps: int = 4) -> TFLIFParams:
    """Fold batch-norm statistics and the firing threshold.

    The spike decision BN(x) >= theta becomes mant*x + bias >= 0 with
    mant = round(m * 2**s), bias = round((beta - m*mean - theta) * 2**s)
    and m = gamma / sqrt(var + eps).  The shift s is chosen per channel
    as the largest value in 0..31 whose rounded mantissa still fits
    quant_bits signed bits (and whose bias fits 32 bits); if even s = 0
    overflows, the channel is unrepresentable at this width.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if not 2 <= quant_bits <= MANT_BITS_LIMIT:
        raise PrecisionError(f"mantissa width must be 2..{MANT_BITS_LIMIT} bits")
    if np.any(var + eps <= 0):
        raise FoldError("var + eps must be positive")

    m_real = gamma / np.sqrt(var + eps)
    b_real = beta - m_real * mean - theta
    mant_limit = (1 << (quant_bits - 1)) - 1

    shift = np.full(m_real.shape, MAX_SHIFT, dtype=np.int64)
    for _ in range(MAX_SHIFT + 1):
        scale = np.ldexp(1.0, shift)
        bad = (
            (np.abs(np.rint(m_real * scale)) > mant_limit)
            | (np.abs(np.rint(b_real * scale)) > BIAS_LIMIT)
            | (np.abs(np.rint(theta * scale)) > BIAS_LIMIT)
        )
        if not bad.any():
            break
        if np.any(bad & (shift == 0)):
            raise PrecisionError(
                f"channel scale does not fit {quant_bits}-bit mantissa at shift 0"
            )
        shift = np.where(bad, shift - 1, shift)

    scale = np.ldexp(1.0, shift)
    return TFLIFParams(
        scale_mant=np.rint(m_real * scale).astype(np.int32),
        scale_shift=shift.astype(np.int32),
        bias_folded=np.rint(b_real * scale).astype(np.int64),
        theta_scaled=np.rint(theta * scale).astype(np.int64),
        decay_num=decay[0],
        decay_den=decay[1],
        reset_mode=reset_mode,
        timesteps=timesteps,
    )


def fold_ulp_bound(params: TFLIFParams, channel: int, x: int) -> float:
    """Distance from the threshold boundary within which the folded and
    unfolded decisions may legitimately disagree: both the mantissa and
    the bias carry up to half a unit of rounding error in the scaled
    domain, so the slack is 0.5*(|x| + 1) * 2**-shift in BN units.
    """
    s = int(np.asarray(params.scale_shift)[channel])
    return 0.5 * (abs(int(x)) + 1) * 2.0 ** -s


def tflif_forward(acc, params: TFLIFParams, channel: int = 0):
    """Scalar reference: run one element's T accumulator values.

    Returns (spikes, final_membrane).  Accumulator entries must already
    be requantized to signed 8-bit.
    """
    if len(acc) != params.timesteps:
        raise WidthError(f"expected {params.timesteps} accumulator values")
    mant = int(np.asarray(params.scale_mant)[channel])
    bias = int(np.asarray(params.bias_folded)[channel])
    theta = int(np.asarray(params.theta_scaled)[channel])
    u = 0
    spikes = []
    for a in acc:
        a = int(a)
        if not -128 <= a <= 127:
            raise WidthError(f"accumulator {a} not requantized to 8 bits")
        u = (u * params.decay_num) // params.decay_den + mant * a + bias
        fired = u >= 0
        spikes.append(1 if fired else 0)
        if fired:
            u = 0 if params.reset_mode == RESET_HARD else u - theta
    return tuple(spikes), u


def tflif_apply(acc: np.ndarray, params: TFLIFParams,
                channel_of_element: np.ndarray) -> np.ndarray:
    """Vectorized forward over a whole activation map.

    acc is [T, *element_shape] of requantized 8-bit values;
    channel_of_element maps each element position to its parameter
    channel and must broadcast to element_shape.  Returns uint8 spikes
    with acc's shape.
    """
    a = np.asarray(acc, dtype=np.int64)
    if a.shape[0] != params.timesteps:
        raise WidthError(
            f"leading axis {a.shape[0]} != {params.timesteps} timesteps"
        )
    if a.size and (a.min() < -128 or a.max() > 127):
        raise WidthError("accumulators not requantized to 8 bits")
    ch = np.asarray(channel_of_element)
    mant = np.asarray(params.scale_mant, dtype=np.int64)[ch]
    bias = np.asarray(params.bias_folded, dtype=np.int64)[ch]
    theta = np.asarray(params.theta_scaled, dtype=np.int64)[ch]

    u = np.zeros(np.broadcast_shapes(a.shape[1:], ch.shape), dtype=np.int64)
    spikes = np.empty((params.timesteps,) + u.shape, dtype=np.uint8)
    for t in range(params.timesteps):
        u = (u * params.decay_num) // params.decay_den + mant * a[t] + bias
        fired = u >= 0
        spikes[t] = fired
        if params.reset_mode == RESET_HARD:
            u = np.where(fired, 0, u)
        else:
            u = np.where(fired, u - theta, u)
    return spikes
