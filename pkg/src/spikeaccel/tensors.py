"""Tensor containers for the quantized spiking datapath.

Activations between spiking layers are single bits, so spike maps are
stored bit-packed.  Packing order is fixed (little-endian within each
byte, flat C-order element index) so a serialized tensor is
byte-identical on every platform.  The remaining containers carry the
8-bit input image, signed 8-bit weights and 32-bit accumulators.

File format (shared by all four containers)::

    bytes 0..3    magic "VSTA"
    bytes 4..7    format version, little-endian u32 (currently 1)
    bytes 8..11   dtype tag, little-endian u32 (see DTYPE_* constants)
    bytes 12..15  rank, little-endian u32
    then          rank little-endian u32 dims
    then          payload (packed bits, or raw little-endian values)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

MAGIC = b"VSTA"
FORMAT_VERSION = 1

# One word of the packed spike payload is one byte; bit k of byte j is
# flat element j*8 + k.
WORD_BITS = 8

DTYPE_BITS = 1   # packed 1-bit spikes, leading time axis
DTYPE_U8 = 2     # unsigned 8-bit image
DTYPE_I8 = 3     # signed 8-bit weights
DTYPE_I32 = 4    # signed 32-bit accumulators

# Accumulators are sums of at most 2**24 products of an 8-bit weight and
# a single bit, so every legal value fits in a signed 32-bit register.
ACCUM_MIN = -(2 ** 31)
ACCUM_MAX = 2 ** 31 - 1


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpikeTensor:
    """Bit-packed binary activation map with a leading time axis."""

    shape: tuple[int, ...]
    payload: np.ndarray  # uint8 words, little-endian bit order

    def __post_init__(self):
        if len(self.shape) < 1:
            raise ShapeError("spike tensor needs at least a time axis")
        n = int(np.prod(self.shape, dtype=np.int64))
        want_words = -(-n // WORD_BITS)
        if self.payload.dtype != np.uint8 or self.payload.ndim != 1:
            raise ShapeError("payload must be a flat uint8 word array")
        if len(self.payload) != want_words:
            raise ShapeError(
                f"payload holds {len(self.payload)} words, "
                f"shape {self.shape} needs {want_words}"
            )

    @property
    def timesteps(self) -> int:
        return self.shape[0]

    @property
    def num_bits(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "SpikeTensor":
        """Pack a 0/1 integer array; values outside {0, 1} are rejected."""
        arr = np.asarray(dense)
        if arr.size and (arr.min() < 0 or arr.max() > 1):
            raise ShapeError("spike values must be 0 or 1")
        flat = arr.astype(np.uint8).reshape(-1)
        payload = np.packbits(flat, bitorder="little")
        return cls(tuple(int(d) for d in arr.shape), payload)

    def to_dense(self) -> np.ndarray:
        """Unpack to a uint8 array of 0/1 with the logical shape."""
        flat = np.unpackbits(self.payload, count=self.num_bits, bitorder="little")
        return flat.reshape(self.shape)

    def reshape(self, shape: tuple[int, ...]) -> "SpikeTensor":
        if int(np.prod(shape, dtype=np.int64)) != self.num_bits:
            raise ShapeError(f"cannot reshape {self.shape} to {shape}")
        return SpikeTensor(tuple(int(d) for d in shape), self.payload)


@dataclass(frozen=True)
class ByteImage:
    """Unsigned 8-bit input image, laid out [channels, height, width]."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ShapeError("image must be [C, H, W]")
        if self.data.dtype != np.uint8:
            raise ShapeError("image values must be uint8")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)


@dataclass(frozen=True)
class WeightMatrix:
    """Signed 8-bit weights; layout is owner-defined (conv or linear)."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.dtype != np.int8:
            raise ShapeError("weights must be int8")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)


@dataclass(frozen=True)
class AccumTensor:
    """Signed 32-bit accumulator values (pre-activation partial sums)."""

    data: np.ndarray

    def __post_init__(self):
        if not np.issubdtype(self.data.dtype, np.signedinteger):
            raise ShapeError("accumulators must be signed integers")
        if self.data.size:
            lo = int(self.data.min())
            hi = int(self.data.max())
            if lo < ACCUM_MIN or hi > ACCUM_MAX:
                raise ShapeError(
                    f"accumulator range [{lo}, {hi}] exceeds signed 32-bit"
                )

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)


# ---------------------------------------------------------------------------
# spike helpers
# ---------------------------------------------------------------------------

def pack_spikes(bits, shape: tuple[int, ...]) -> SpikeTensor:
    """Pack a flat 0/1 sequence into a SpikeTensor of the given shape."""
    flat = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
    n = int(np.prod(shape, dtype=np.int64))
    if flat.size != n:
        raise ShapeError(f"{flat.size} bits cannot fill shape {shape} ({n} elements)")
    return SpikeTensor.from_dense(flat.reshape(shape))


def spike_density(t: SpikeTensor) -> float:
    """Fraction of bits that are 1; invariant under reshape by construction."""
    if t.num_bits == 0:
        return 0.0
    ones = int(np.unpackbits(t.payload, count=t.num_bits, bitorder="little").sum())
    return ones / t.num_bits


def extract_bitplane(img: ByteImage, plane: int) -> np.ndarray:
    """Binary plane of bit `plane` (0 = LSB) with the image's [C, H, W] shape."""
    if not 0 <= plane < 8:
        raise ShapeError(f"bitplane index {plane} out of range 0..7")
    return ((img.data >> plane) & 1).astype(np.uint8)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIII")


def _encode(tag: int, shape: tuple[int, ...], payload: bytes) -> bytes:
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, tag, len(shape))
    dims = struct.pack(f"<{len(shape)}I", *shape)
    return head + dims + payload


def to_bytes(t) -> bytes:
    """Serialize any of the four tensor containers."""
    if isinstance(t, SpikeTensor):
        return _encode(DTYPE_BITS, t.shape, t.payload.tobytes())
    if isinstance(t, ByteImage):
        return _encode(DTYPE_U8, t.shape, t.data.tobytes())
    if isinstance(t, WeightMatrix):
        return _encode(DTYPE_I8, t.shape, t.data.tobytes())
    if isinstance(t, AccumTensor):
        data = t.data.astype("<i4")
        return _encode(DTYPE_I32, t.shape, data.tobytes())
    raise ShapeError(f"cannot serialize {type(t).__name__}")


def from_bytes(blob: bytes):
    """Inverse of to_bytes; validates header, length and payload size."""
    if len(blob) < _HEADER.size:
        raise ShapeError("tensor blob shorter than header")
    magic, version, tag, rank = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ShapeError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ShapeError(f"unsupported format version {version}")
    off = _HEADER.size
    if len(blob) < off + 4 * rank:
        raise ShapeError("tensor blob truncated in dims")
    shape = struct.unpack_from(f"<{rank}I", blob, off)
    off += 4 * rank
    n = int(np.prod(shape, dtype=np.int64)) if rank else 1
    payload = blob[off:]

    if tag == DTYPE_BITS:
        words = -(-n // WORD_BITS)
        if len(payload) != words:
            raise ShapeError(f"expected {words} payload words, got {len(payload)}")
        return SpikeTensor(tuple(shape), np.frombuffer(payload, dtype=np.uint8).copy())
    if tag == DTYPE_U8:
        if len(payload) != n:
            raise ShapeError("u8 payload size mismatch")
        return ByteImage(np.frombuffer(payload, dtype=np.uint8).reshape(shape).copy())
    if tag == DTYPE_I8:
        if len(payload) != n:
            raise ShapeError("i8 payload size mismatch")
        return WeightMatrix(np.frombuffer(payload, dtype=np.int8).reshape(shape).copy())
    if tag == DTYPE_I32:
        if len(payload) != 4 * n:
            raise ShapeError("i32 payload size mismatch")
        data = np.frombuffer(payload, dtype="<i4").reshape(shape)
        return AccumTensor(data.astype(np.int32))
    raise ShapeError(f"unknown dtype tag {tag}")


def save_tensor(path, t) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(t))


def load_tensor(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
