"""Euclidean codebooks and their on-disk forms (KBF binary, CSV)."""

from __future__ import annotations

import csv
import hashlib
import io
import os
import struct
import tempfile
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DecodeError, InvalidInputError
from .geometry import as_float_array

KBF_MAGIC = b"KBF1"
KBF_VERSION = 1
_KBF_HEADER = struct.Struct("<4sIQQ")


def atomic_write(path, data: bytes | str) -> None:
    """Write ``data`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True, eq=False)
class EuclideanCodebook:
    """Ordered set of ``size`` vectors of length ``dim``; row ``k`` is entry ``k``."""

    vectors: np.ndarray

    def __post_init__(self):
        v = as_float_array(self.vectors, "vectors", copy=True)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise InvalidInputError(f"codebook must have shape (K, dim) with K, dim >= 1, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("codebook contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.size

    def to_bytes(self) -> bytes:
        """Canonical KBF encoding (values stored as little-endian float32)."""
        header = _KBF_HEADER.pack(KBF_MAGIC, KBF_VERSION, self.size, self.dim)
        return header + self.vectors.astype("<f4").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "EuclideanCodebook":
        if len(data) < _KBF_HEADER.size:
            raise DecodeError("truncated KBF header", offset=len(data))
        magic, version, k, dim = _KBF_HEADER.unpack_from(data)
        if magic != KBF_MAGIC:
            raise DecodeError(f"bad KBF magic {magic!r}", offset=0)
        if version != KBF_VERSION:
            raise DecodeError(f"unsupported KBF version {version}", offset=4)
        if k < 1:
            raise DecodeError("KBF codebook size must be >= 1", offset=8)
        if dim < 1:
            raise DecodeError("KBF dim must be >= 1", offset=16)
        expected = _KBF_HEADER.size + 4 * k * dim
        if len(data) < expected:
            raise DecodeError(f"truncated KBF payload: expected {expected} bytes, got {len(data)}", offset=len(data))
        if len(data) > expected:
            raise DecodeError("trailing bytes after KBF payload", offset=expected)
        values = np.frombuffer(data, dtype="<f4", offset=_KBF_HEADER.size).reshape(k, dim)
        bad = np.flatnonzero(~np.isfinite(values.ravel()))
        if bad.size:
            raise DecodeError("non-finite value in KBF payload", offset=_KBF_HEADER.size + 4 * int(bad[0]))
        return cls(values.astype(np.float64))

    @cached_property
    def canonical_vectors(self) -> np.ndarray:
        """Vectors as stored in KBF (rounded through float32), i.e. what the fingerprint covers."""
        v = self.vectors.astype(np.float32).astype(np.float64)
        v.setflags(write=False)
        return v

    @cached_property
    def fingerprint(self) -> str:
        """SHA-256 of the canonical KBF bytes, lowercase hex."""
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for row in self.vectors:
            writer.writerow([f"{x:.17g}" for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EuclideanCodebook":
        rows = []
        for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise DecodeError(f"line {lineno}: {exc}") from None
            if len(rows[-1]) != len(rows[0]):
                raise DecodeError(f"line {lineno}: expected {len(rows[0])} values, got {len(rows[-1])}")
        if not rows:
            raise DecodeError("CSV contains no vectors")
        try:
            return cls(np.array(rows))
        except InvalidInputError as exc:
            raise DecodeError(str(exc)) from None


def read_codebook(path) -> EuclideanCodebook:
    """Load a codebook from ``.csv`` (by extension) or KBF (anything else)."""
    path = os.fspath(path)
    if path.lower().endswith(".csv"):
        with open(path, encoding="utf-8") as fh:
            return EuclideanCodebook.from_csv(fh.read())
    with open(path, "rb") as fh:
        return EuclideanCodebook.from_bytes(fh.read())


def write_codebook(path, kb: EuclideanCodebook) -> None:
    path = os.fspath(path)
    atomic_write(path, kb.to_csv() if path.lower().endswith(".csv") else kb.to_bytes())
