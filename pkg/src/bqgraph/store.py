"""Index files, fvecs/ivecs I/O and memory accounting.

Index file layout (all little-endian), segments in hot-first order::

    header   magic "QIVR", version u32, N u64, D u32, m u32, alpha_milli u32,
             entry_point u64, sig_offset u64, adj_offset u64, cold_offset u64
    sigs     N rows of [pos words | strong words], u64 each
    adj      N slots of [degree u32 | 2m ids u32]
    cold     N rows of D float32

Segments start on 64-byte boundaries; gaps are zero-filled.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .builder import Index
from .encoding import n_words
from .graph import AdjacencyTable, BuildParams

MAGIC = b"QIVR"
VERSION = 1
_HEADER = struct.Struct("<4sIQIIIQQQQ")
_ALIGN = 64


class IndexFormatError(ValueError):
    pass


def _align(n: int) -> int:
    return (n + _ALIGN - 1) // _ALIGN * _ALIGN


@dataclass(frozen=True)
class IndexFileHeader:
    magic: bytes
    version: int
    n: int
    d: int
    m: int
    alpha_milli: int
    entry_point: int
    sig_offset: int
    adj_offset: int
    cold_offset: int

    @property
    def sig_bytes(self) -> int:
        return self.n * 2 * n_words(self.d) * 8

    @property
    def adj_bytes(self) -> int:
        return self.n * (2 * self.m + 1) * 4

    @property
    def cold_bytes(self) -> int:
        return self.n * self.d * 4

    def pack(self) -> bytes:
        return _HEADER.pack(
            self.magic, self.version, self.n, self.d, self.m, self.alpha_milli,
            self.entry_point, self.sig_offset, self.adj_offset, self.cold_offset,
        )

    @classmethod
    def unpack(cls, raw: bytes) -> "IndexFileHeader":
        if len(raw) < _HEADER.size:
            raise IndexFormatError("truncated header")
        return cls(*_HEADER.unpack(raw[: _HEADER.size]))

    @classmethod
    def for_shape(cls, n, d, m, alpha_milli, entry_point) -> "IndexFileHeader":
        sig_off = _align(_HEADER.size)
        adj_off = _align(sig_off + n * 2 * n_words(d) * 8)
        cold_off = _align(adj_off + n * (2 * m + 1) * 4)
        return cls(MAGIC, VERSION, n, d, m, alpha_milli, entry_point, sig_off, adj_off, cold_off)

    def validate(self, file_size: int | None = None) -> None:
        if self.magic != MAGIC:
            raise IndexFormatError(f"bad magic {self.magic!r}")
        if self.version != VERSION:
            raise IndexFormatError(f"unsupported version {self.version}")
        if self.n == 0 or self.d == 0 or self.m == 0:
            raise IndexFormatError("empty index dimensions")
        if self.entry_point >= self.n:
            raise IndexFormatError("entry point out of range")
        if not (
            _HEADER.size <= self.sig_offset
            and self.sig_offset + self.sig_bytes <= self.adj_offset
            and self.adj_offset + self.adj_bytes <= self.cold_offset
        ):
            raise IndexFormatError("inconsistent segment offsets")
        if file_size is not None and file_size < self.cold_offset + self.cold_bytes:
            raise IndexFormatError("truncated file")


def save_index(index: Index, path) -> None:
    p = index.params
    hdr = IndexFileHeader.for_shape(
        index.num_nodes, index.dim, p.m, p.alpha_milli, index.entry_point
    )
    with open(path, "wb") as f:
        f.write(hdr.pack())
        f.write(b"\0" * (hdr.sig_offset - _HEADER.size))
        f.write(np.ascontiguousarray(index.signatures, dtype="<u8").tobytes())
        f.write(b"\0" * (hdr.adj_offset - hdr.sig_offset - hdr.sig_bytes))
        f.write(np.ascontiguousarray(index.adjacency.slots, dtype="<u4").tobytes())
        f.write(b"\0" * (hdr.cold_offset - hdr.adj_offset - hdr.adj_bytes))
        # stream the cold segment in blocks so a file-backed store is never fully materialized
        cold = index.cold_vectors
        for start in range(0, index.num_nodes, 65536):
            block = np.asarray(cold[start : start + 65536], dtype="<f4")
            f.write(np.ascontiguousarray(block).tobytes())


def read_header(path) -> IndexFileHeader:
    with open(path, "rb") as f:
        hdr = IndexFileHeader.unpack(f.read(_HEADER.size))
    hdr.validate(os.path.getsize(path))
    return hdr


def load_index(path, cold_mode: str = "eager") -> Index:
    """Load an index file.

    Args:
        path: File written by ``save_index``.
        cold_mode: ``"eager"`` reads float vectors into memory; ``"mapped"``
            exposes them through a read-only memory map. Hot segments are
            always read eagerly.
    """
    if cold_mode not in ("eager", "mapped"):
        raise ValueError("cold_mode must be 'eager' or 'mapped'")
    hdr = read_header(path)
    W = n_words(hdr.d)
    R = 2 * hdr.m
    with open(path, "rb") as f:
        f.seek(hdr.sig_offset)
        sigs = np.frombuffer(f.read(hdr.sig_bytes), dtype="<u8").astype(np.uint64)
        f.seek(hdr.adj_offset)
        slots = np.frombuffer(f.read(hdr.adj_bytes), dtype="<u4").astype(np.uint32)
        if cold_mode == "eager":
            f.seek(hdr.cold_offset)
            cold = np.frombuffer(f.read(hdr.cold_bytes), dtype="<f4").astype(np.float32)
            cold = cold.reshape(hdr.n, hdr.d)
    if cold_mode == "mapped":
        cold = np.memmap(path, dtype="<f4", mode="r", offset=hdr.cold_offset, shape=(hdr.n, hdr.d))
    slots = slots.reshape(hdr.n, R + 1)
    if np.any(slots[:, 0] > R):
        raise IndexFormatError("slot degree exceeds 2m")
    params = BuildParams(m=hdr.m, alpha=hdr.alpha_milli / 1000)
    return Index(
        params=params,
        entry_point=hdr.entry_point,
        adjacency=AdjacencyTable(hdr.n, R, slots),
        signatures=sigs.reshape(hdr.n, 2 * W),
        cold_vectors=cold,
        dim=hdr.d,
    )


# -- fvecs / ivecs ------------------------------------------------------------


def _read_vecs(path, dtype) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw:
        return np.zeros((0, 0), dtype=dtype)
    if len(raw) < 4:
        raise ValueError("truncated record header")
    dim = struct.unpack_from("<i", raw, 0)[0]
    if dim <= 0:
        raise ValueError(f"invalid dimension {dim}")
    rec = 4 * (dim + 1)
    if len(raw) % rec:
        raise ValueError("truncated record")
    data = np.frombuffer(raw, dtype="<i4").reshape(-1, dim + 1)
    if np.any(data[:, 0] != dim):
        raise ValueError("inconsistent dimensions")
    return np.ascontiguousarray(data[:, 1:]).view(np.dtype(dtype).newbyteorder("<")).astype(dtype)


def read_fvecs(path) -> np.ndarray:
    """Records of ``[dim i32][dim x f32]``; returns an ``(n, dim)`` float32 array."""
    return _read_vecs(path, np.float32)


def read_ivecs(path) -> np.ndarray:
    return _read_vecs(path, np.int32)


def _write_vecs(path, rows, dtype) -> None:
    A = np.asarray(rows, dtype=dtype)
    if A.ndim != 2:
        raise ValueError("expected a 2-d array")
    out = np.empty((A.shape[0], A.shape[1] + 1), dtype="<i4")
    out[:, 0] = A.shape[1]
    out[:, 1:] = A.astype(np.dtype(dtype).newbyteorder("<")).view("<i4")
    Path(path).write_bytes(out.tobytes())


def write_fvecs(path, vectors) -> None:
    _write_vecs(path, vectors, np.float32)


def write_ivecs(path, rows) -> None:
    _write_vecs(path, rows, np.int32)


# -- memory accounting --------------------------------------------------------


@dataclass(frozen=True)
class MemoryReport:
    """Logical segment sizes in bytes (formula values, not measured residency)."""

    hot_signatures_bytes: int
    hot_adjacency_bytes: int
    cold_vector_bytes: int

    @property
    def hot_bytes(self) -> int:
        return self.hot_signatures_bytes + self.hot_adjacency_bytes

    def as_dict(self) -> dict:
        return {
            "hot_signatures_bytes": self.hot_signatures_bytes,
            "hot_adjacency_bytes": self.hot_adjacency_bytes,
            "cold_vector_bytes": self.cold_vector_bytes,
        }


def memory_for(n: int, d: int, m: int) -> MemoryReport:
    return MemoryReport(
        hot_signatures_bytes=n * 2 * n_words(d) * 8,
        hot_adjacency_bytes=n * (2 * m + 1) * 4,
        cold_vector_bytes=n * d * 4,
    )


def memory_report(index: Index) -> MemoryReport:
    return memory_for(index.num_nodes, index.dim, index.params.m)
