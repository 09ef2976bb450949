"""Vector quantization of feature grids and the bit-packed index wire format.

Wire format of a payload (all integers little-endian)::

    magic  b"KBP1"
    u32    version (1)
    u32    height
    u32    width
    u64    kb_size K
    u8     bits per index B
    ...    height*width indices, B bits each, MSB first, row-major,
           final byte zero-padded
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .codebook import EuclideanCodebook
from .errors import DecodeError, InvalidInputError
from .geometry import as_float_array

PAYLOAD_MAGIC = b"KBP1"
PAYLOAD_VERSION = 1
PAYLOAD_HEADER = struct.Struct("<4sIIIQB")

FEATURES_MAGIC = b"KBX1"
_FEATURES_HEADER = struct.Struct("<4sIQQQ")
INDICES_MAGIC = b"KBI1"
_INDICES_HEADER = struct.Struct("<4sIIIQ")
_FILE_VERSION = 1


def bits_per_index(kb_size: int) -> int:
    """``ceil(log2(K))`` bits, but never fewer than one."""
    if isinstance(kb_size, bool) or not isinstance(kb_size, (int, np.integer)) or kb_size < 1:
        raise InvalidInputError(f"codebook size must be a positive integer, got {kb_size!r}")
    return max(1, (int(kb_size) - 1).bit_length())


def _check_dims(height, width):
    for name, v in (("height", height), ("width", width)):
        if not isinstance(v, (int, np.integer)) or not 1 <= v < 2**32:
            raise InvalidInputError(f"{name} must be an integer in [1, 2**32), got {v!r}")


@dataclass(frozen=True, eq=False)
class FeatureGrid:
    """``height x width`` grid of ``dim``-vectors, stored row-major as ``(height*width, dim)``."""

    height: int
    width: int
    values: np.ndarray

    def __post_init__(self):
        _check_dims(self.height, self.width)
        v = as_float_array(self.values, "values", copy=True)
        if v.ndim == 3:
            v = v.reshape(-1, v.shape[-1])
        if v.ndim != 2 or v.shape[0] != self.height * self.width or v.shape[1] < 1:
            raise InvalidInputError(f"values must hold {self.height}*{self.width} vectors, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("feature grid contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_array(cls, array) -> "FeatureGrid":
        a = np.asarray(array)
        if a.ndim != 3:
            raise InvalidInputError(f"expected an (H, W, C) array, got shape {a.shape}")
        return cls(a.shape[0], a.shape[1], a)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.height, self.width, self.dim)

    def to_bytes(self) -> bytes:
        header = _FEATURES_HEADER.pack(FEATURES_MAGIC, _FILE_VERSION, self.height, self.width, self.dim)
        return header + self.values.astype("<f4").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "FeatureGrid":
        if len(data) < _FEATURES_HEADER.size:
            raise DecodeError("truncated KBX header", offset=len(data))
        magic, version, h, w, dim = _FEATURES_HEADER.unpack_from(data)
        if magic != FEATURES_MAGIC:
            raise DecodeError(f"bad KBX magic {magic!r}", offset=0)
        if version != _FILE_VERSION:
            raise DecodeError(f"unsupported KBX version {version}", offset=4)
        if not (1 <= h < 2**32 and 1 <= w < 2**32 and dim >= 1):
            raise DecodeError(f"invalid KBX shape {h}x{w}x{dim}", offset=8)
        expected = _FEATURES_HEADER.size + 4 * h * w * dim
        if len(data) < expected:
            raise DecodeError(f"truncated KBX payload: expected {expected} bytes, got {len(data)}", offset=len(data))
        if len(data) > expected:
            raise DecodeError("trailing bytes after KBX payload", offset=expected)
        values = np.frombuffer(data, dtype="<f4", offset=_FEATURES_HEADER.size)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise DecodeError("non-finite value in KBX payload", offset=_FEATURES_HEADER.size + 4 * int(bad[0]))
        return cls(h, w, values.astype(np.float64).reshape(h * w, dim))


@dataclass(frozen=True, eq=False)
class IndexGrid:
    """``height x width`` codebook indices (0-based, each ``< kb_size``), row-major."""

    height: int
    width: int
    indices: np.ndarray
    kb_size: int

    def __post_init__(self):
        _check_dims(self.height, self.width)
        bits_per_index(self.kb_size)
        idx = np.array(self.indices, copy=True)
        if idx.size and not np.issubdtype(idx.dtype, np.integer):
            raise InvalidInputError("indices must be integers")
        idx = idx.astype(np.int64).reshape(-1)
        if idx.size != self.height * self.width:
            raise InvalidInputError(f"expected {self.height * self.width} indices, got {idx.size}")
        if np.any(idx < 0) or np.any(idx >= self.kb_size):
            raise InvalidInputError(f"indices must lie in [0, {self.kb_size})")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __eq__(self, other):
        if not isinstance(other, IndexGrid):
            return NotImplemented
        return ((self.height, self.width, self.kb_size) == (other.height, other.width, other.kb_size)
                and np.array_equal(self.indices, other.indices))

    def as_array(self) -> np.ndarray:
        return self.indices.reshape(self.height, self.width)

    def to_bytes(self) -> bytes:
        header = _INDICES_HEADER.pack(INDICES_MAGIC, _FILE_VERSION, self.height, self.width, self.kb_size)
        return header + self.indices.astype("<u8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "IndexGrid":
        if len(data) < _INDICES_HEADER.size:
            raise DecodeError("truncated KBI header", offset=len(data))
        magic, version, h, w, k = _INDICES_HEADER.unpack_from(data)
        if magic != INDICES_MAGIC:
            raise DecodeError(f"bad KBI magic {magic!r}", offset=0)
        if version != _FILE_VERSION:
            raise DecodeError(f"unsupported KBI version {version}", offset=4)
        if h < 1 or w < 1 or k < 1:
            raise DecodeError(f"invalid KBI header {h}x{w}, K={k}", offset=8)
        expected = _INDICES_HEADER.size + 8 * h * w
        if len(data) < expected:
            raise DecodeError(f"truncated KBI payload: expected {expected} bytes, got {len(data)}", offset=len(data))
        if len(data) > expected:
            raise DecodeError("trailing bytes after KBI payload", offset=expected)
        idx = np.frombuffer(data, dtype="<u8", offset=_INDICES_HEADER.size)
        bad = np.flatnonzero(idx >= k)
        if bad.size:
            raise DecodeError(f"index {int(idx[bad[0]])} >= K={k}", offset=_INDICES_HEADER.size + 8 * int(bad[0]))
        return cls(h, w, idx.astype(np.int64), k)


@dataclass(frozen=True)
class Payload:
    """Packed index stream plus the framing needed to decode it."""

    height: int
    width: int
    kb_size: int
    bits_per_index: int
    data: bytes

    @property
    def bit_count(self) -> int:
        """Bits carrying indices, excluding framing and padding."""
        return self.height * self.width * self.bits_per_index

    def to_bytes(self) -> bytes:
        header = PAYLOAD_HEADER.pack(PAYLOAD_MAGIC, PAYLOAD_VERSION, self.height, self.width,
                                     self.kb_size, self.bits_per_index)
        return header + self.data

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Payload":
        """Parse the framing and check the stream length; index values are checked by :func:`unpack`."""
        if len(buf) < PAYLOAD_HEADER.size:
            raise DecodeError("truncated payload header", offset=len(buf))
        magic, version, h, w, k, b = PAYLOAD_HEADER.unpack_from(buf)
        if magic != PAYLOAD_MAGIC:
            raise DecodeError(f"bad payload magic {magic!r}", offset=0)
        if version != PAYLOAD_VERSION:
            raise DecodeError(f"unsupported payload version {version}", offset=4)
        if h < 1:
            raise DecodeError("height must be >= 1", offset=8)
        if w < 1:
            raise DecodeError("width must be >= 1", offset=12)
        if k < 1:
            raise DecodeError("kb_size must be >= 1", offset=16)
        if b != bits_per_index(k):
            raise DecodeError(f"bits per index {b} inconsistent with K={k}", offset=24)
        body = buf[PAYLOAD_HEADER.size:]
        need = (h * w * b + 7) // 8
        if len(body) < need:
            raise DecodeError(f"truncated payload: expected {need} stream bytes, got {len(body)}", offset=len(buf))
        if len(body) > need:
            raise DecodeError("trailing bytes after payload stream", offset=PAYLOAD_HEADER.size + need)
        return cls(h, w, k, b, bytes(body))


def quantize(features: FeatureGrid, kb: EuclideanCodebook) -> IndexGrid:
    """Nearest codebook entry (squared L2, exact float64) per cell; ties to the lower index."""
    if features.dim != kb.dim:
        raise InvalidInputError(f"feature dim {features.dim} != codebook dim {kb.dim}")
    idx, _ = kernels.nearest(np.ascontiguousarray(features.values), np.ascontiguousarray(kb.vectors))
    return IndexGrid(features.height, features.width, idx, kb.size)


def dequantize(indices: IndexGrid, kb: EuclideanCodebook) -> FeatureGrid:
    """Receiver lookup: replace every index by its codebook vector."""
    if indices.kb_size != kb.size:
        raise InvalidInputError(f"index grid expects K={indices.kb_size}, codebook has {kb.size}")
    return FeatureGrid(indices.height, indices.width, kb.vectors[indices.indices])


def pack(grid: IndexGrid) -> Payload:
    b = bits_per_index(grid.kb_size)
    idx = grid.indices.astype(np.uint64)
    shifts = np.arange(b - 1, -1, -1, dtype=np.uint64)
    bits = ((idx[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
    return Payload(grid.height, grid.width, grid.kb_size, b, np.packbits(bits.ravel()).tobytes())


def unpack(payload: Payload | bytes) -> IndexGrid:
    """Inverse of :func:`pack`; accepts a :class:`Payload` or its wire bytes.

    Raises
    ------
    DecodeError
        On bad framing, a truncated stream, nonzero padding, or an index >= K.
        The offset refers to the wire bytes.
    """
    if not isinstance(payload, Payload):
        payload = Payload.from_bytes(bytes(payload))
    h, w, k, b = payload.height, payload.width, payload.kb_size, payload.bits_per_index
    if b != bits_per_index(k):
        raise DecodeError(f"bits per index {b} inconsistent with K={k}", offset=24)
    n = h * w
    need = (n * b + 7) // 8
    if len(payload.data) != need:
        raise DecodeError(f"stream has {len(payload.data)} bytes, expected {need}",
                          offset=PAYLOAD_HEADER.size + min(len(payload.data), need))
    bits = np.unpackbits(np.frombuffer(payload.data, dtype=np.uint8))
    if np.any(bits[n * b:]):
        raise DecodeError("nonzero padding bits", offset=PAYLOAD_HEADER.size + need - 1)
    weights = np.uint64(1) << np.arange(b - 1, -1, -1, dtype=np.uint64)
    idx = (bits[: n * b].reshape(n, b).astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)
    bad = np.flatnonzero(idx >= np.uint64(k))
    if bad.size:
        i = int(bad[0])
        raise DecodeError(f"index {int(idx[i])} at position {i} >= K={k}",
                          offset=PAYLOAD_HEADER.size + (i * b) // 8)
    return IndexGrid(h, w, idx.astype(np.int64), k)
