"""Bit-exact functional reference for the whole workload.

Every operation here is plain integer arithmetic over dense arrays, with
no notion of the PE array; the schedule executor must reproduce these
values bit for bit.  Layer outputs use canonical dense layouts:

    conv layers       uint8 spikes [T, C, H, W]
    linear/attention  uint8 spikes [T, N, D]
    head              int32 logits [T, classes]

Spike maps entering a token-shaped layer are flattened [T, C, H, W] ->
[T, H*W, C]: one token per pixel, channels become the feature axis.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ShapeError
from .neuron import TFLIFParams, tflif_apply
from .network import (
    IMAGE_INPUT, KIND_ATTENTION, KIND_CONV, KIND_CONV_INPUT, KIND_HEAD,
    KIND_LINEAR, KIND_RESIDUAL, RES_IAND, NetworkParams, NetworkSpec,
)
from .pe import requantize_batch
from .tensors import AccumTensor, ByteImage, SpikeTensor, WeightMatrix


# ---------------------------------------------------------------------------
# reference operations
# ---------------------------------------------------------------------------

def _conv_windows(x: np.ndarray, kernel: int, stride: int):
    """Yield ((ki, kj), strided window [..., H_out, W_out]) pairs."""
    h, w = x.shape[-2:]
    h_out = (h - kernel) // stride + 1
    w_out = (w - kernel) // stride + 1
    for ki in range(kernel):
        for kj in range(kernel):
            yield (ki, kj), x[..., ki:ki + stride * h_out:stride,
                              kj:kj + stride * w_out:stride]


def ref_spiking_conv2d(spikes: np.ndarray, weights: WeightMatrix) -> np.ndarray:
    """Convolve binary activations [T, C, H, W] with int8 kernels.

    Returns int64 accumulators [T, C_out, H_out, W_out]; every value is a
    plain sum of weight-or-zero terms.
    """
    w = weights.data
    c_out, c_in, kernel, _ = w.shape
    if spikes.ndim != 4 or spikes.shape[1] != c_in:
        raise ShapeError(f"spike map {spikes.shape} does not match {w.shape}")
    stride = kernel  # stem convs tile the image: stride == kernel
    acc = None
    for (ki, kj), win in _conv_windows(spikes, kernel, stride):
        part = np.einsum("tchw,oc->tohw", win.astype(np.int64),
                         w[:, :, ki, kj].astype(np.int64))
        acc = part if acc is None else acc + part
    return acc


def ref_conv2d_u8(image: ByteImage, weights: WeightMatrix,
                  timesteps: int) -> np.ndarray:
    """First-layer convolution over the 8-bit image.

    The image does not change across timesteps, so the accumulator map is
    computed once and replicated along T without recompute.
    """
    w = weights.data
    c_out, c_in, kernel, _ = w.shape
    if image.data.shape[0] != c_in:
        raise ShapeError(f"image {image.shape} does not match kernel {w.shape}")
    stride = kernel
    acc = None
    for (ki, kj), win in _conv_windows(image.data, kernel, stride):
        part = np.einsum("chw,oc->ohw", win.astype(np.int64),
                         w[:, :, ki, kj].astype(np.int64))
        acc = part if acc is None else acc + part
    return np.broadcast_to(acc, (timesteps,) + acc.shape).copy()


def ref_spiking_linear(spikes: np.ndarray, weights: WeightMatrix) -> np.ndarray:
    """Token-wise linear layer: [T, N, D_in] x [D_out, D_in] -> int64 acc."""
    w = weights.data
    if spikes.ndim != 3 or spikes.shape[2] != w.shape[1]:
        raise ShapeError(f"tokens {spikes.shape} do not match weights {w.shape}")
    return np.einsum("tnd,od->tno", spikes.astype(np.int64),
                     w.astype(np.int64))


def ref_ssa_raw(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                heads: int) -> np.ndarray:
    """Spiking self-attention accumulators: S = q k^T, raw = S v, per
    head and timestep, no softmax.  Inputs are binary [T, N, D]; the
    result is int64 [T, N, D] in the same token layout.
    """
    t, n, d = q.shape
    if d % heads:
        raise ShapeError(f"feature dim {d} does not split into {heads} heads")
    dh = d // heads
    if k.shape != q.shape or v.shape != q.shape:
        raise ShapeError("q, k, v must share one shape")

    def split(x):
        return x.reshape(t, n, heads, dh).transpose(0, 2, 1, 3).astype(np.int64)

    qh, kh, vh = split(q), split(k), split(v)
    scores = qh @ kh.transpose(0, 1, 3, 2)   # [T, heads, N, N], entries 0..dh
    raw = scores @ vh                        # [T, heads, N, dh]
    return raw.transpose(0, 2, 1, 3).reshape(t, n, d)


def ref_head_logits(spikes: np.ndarray, weights: WeightMatrix) -> np.ndarray:
    """Classification head: per-timestep logits summed over all tokens."""
    w = weights.data
    if spikes.ndim != 3 or spikes.shape[2] != w.shape[1]:
        raise ShapeError(f"tokens {spikes.shape} do not match weights {w.shape}")
    return np.einsum("tnd,cd->tc", spikes.astype(np.int64), w.astype(np.int64))


def iand_residual(a: np.ndarray, b: np.ndarray, op: str = RES_IAND) -> np.ndarray:
    """Spike-domain shortcut combine.

    IAND keeps the operands binary without accumulation: the block output
    a gates the shortcut b through (NOT a) AND b.  OR is the plain union.
    """
    if a.shape != b.shape:
        raise ShapeError(f"residual operands differ: {a.shape} vs {b.shape}")
    if op == RES_IAND:
        return ((a ^ 1) & b).astype(np.uint8)
    return (a | b).astype(np.uint8)


def spiking_output(acc: np.ndarray, shift: int, params: TFLIFParams,
                   channel_of_element: np.ndarray) -> np.ndarray:
    """Shared spiking epilogue: requantize to 8 bits, then TFLIF."""
    return tflif_apply(requantize_batch(acc, shift), params, channel_of_element)


def conv_channel_map(c_out: int) -> np.ndarray:
    return np.arange(c_out)[:, None, None]


def token_channel_map(d_out: int) -> np.ndarray:
    return np.arange(d_out)


# ---------------------------------------------------------------------------
# network runner
# ---------------------------------------------------------------------------

def tokenize(x: np.ndarray) -> np.ndarray:
    """[T, C, H, W] spike map -> [T, H*W, C] token map (no-op for tokens)."""
    if x.ndim == 3:
        return x
    t, c, h, w = x.shape
    return x.transpose(0, 2, 3, 1).reshape(t, h * w, c)


def run_network_reference(spec: NetworkSpec, params: NetworkParams,
                          image: ByteImage):
    """Run the whole network functionally.

    Returns (logits AccumTensor [T, classes], intermediates) where
    intermediates maps layer index to that layer's canonical dense
    output (uint8 spikes, or int32 logits for the head).
    """
    if image.shape != spec.input_shape:
        raise ShapeError(
            f"image {image.shape} does not match spec input {spec.input_shape}"
        )
    outs: dict[int, np.ndarray] = {}

    def fetch(j: int) -> np.ndarray:
        return outs[j]

    logits = None
    for i, layer in enumerate(spec.layers):
        kind = layer.kind
        if kind == KIND_CONV_INPUT:
            acc = ref_conv2d_u8(image, params.weights[i], spec.timesteps)
            outs[i] = spiking_output(acc, spec.requant_shift_of(i),
                                     params.tflif[i],
                                     conv_channel_map(layer.c_out))
        elif kind == KIND_CONV:
            acc = ref_spiking_conv2d(fetch(layer.inputs[0]), params.weights[i])
            outs[i] = spiking_output(acc, spec.requant_shift_of(i),
                                     params.tflif[i],
                                     conv_channel_map(layer.c_out))
        elif kind == KIND_LINEAR:
            x = tokenize(fetch(layer.inputs[0]))
            acc = ref_spiking_linear(x, params.weights[i])
            outs[i] = spiking_output(acc, spec.requant_shift_of(i),
                                     params.tflif[i],
                                     token_channel_map(layer.d_out))
        elif kind == KIND_ATTENTION:
            q, k, v = (tokenize(fetch(j)) for j in layer.inputs)
            raw = ref_ssa_raw(q, k, v, layer.heads)
            outs[i] = spiking_output(raw, spec.requant_shift_of(i),
                                     params.tflif[i],
                                     token_channel_map(q.shape[2]))
        elif kind == KIND_RESIDUAL:
            a = tokenize(fetch(layer.inputs[0]))
            b = tokenize(fetch(layer.inputs[1]))
            outs[i] = iand_residual(a, b, layer.op)
        elif kind == KIND_HEAD:
            x = tokenize(fetch(layer.inputs[0]))
            acc = ref_head_logits(x, params.weights[i])
            outs[i] = acc.astype(np.int32)
            logits = AccumTensor(outs[i])
        else:  # pragma: no cover - kinds validated at spec load
            raise ShapeError(f"unhandled layer kind {kind!r}")
    return logits, outs


def classify(logits: AccumTensor) -> int:
    """Predicted class: argmax of the timestep-summed logits."""
    return int(np.argmax(logits.data.sum(axis=0)))


def golden_digest(logits: AccumTensor, intermediates) -> str:
    """Stable hash over logits and every layer output, packed form."""
    h = hashlib.sha256()
    h.update(logits.data.astype("<i4").tobytes())
    for i in sorted(intermediates):
        arr = intermediates[i]
        if arr.dtype == np.uint8:
            h.update(SpikeTensor.from_dense(arr).payload.tobytes())
        else:
            h.update(arr.astype("<i4").tobytes())
    return h.hexdigest()
