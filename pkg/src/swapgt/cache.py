"""Versioned binary cache for token tables and sequence batches.

Layout (little-endian throughout)::

    magic     4 bytes  b"SWGT"
    version   u32
    n, d, k, s, seed   u64 each
    digest    32 bytes sha256 over the tokenizer config and graph contents
    count     u64      number of arrays that follow
    per array: ndim u64, ndim x u64 dims, int64 payload

Arrays are stored in the order: attribute table, topology table,
attribute sequence ids, topology sequence ids.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"SWGT"
VERSION = 1
_HEADER = struct.Struct("<4sI5Q32s")


class CacheError(ValueError):
    pass


@dataclass(frozen=True)
class CacheHeader:
    n: int
    d: int
    k: int
    s: int
    seed: int
    digest: bytes
    version: int = VERSION

    def pack(self) -> bytes:
        return _HEADER.pack(MAGIC, self.version, self.n, self.d, self.k, self.s, self.seed, self.digest)

    @classmethod
    def unpack(cls, raw: bytes) -> "CacheHeader":
        if len(raw) < _HEADER.size:
            raise CacheError("truncated header")
        magic, version, n, d, k, s, seed, digest = _HEADER.unpack(raw[:_HEADER.size])
        if magic != MAGIC:
            raise CacheError("bad magic")
        return cls(n, d, k, s, seed, digest, version)


def graph_digest(graph, config_pairs) -> bytes:
    """sha256 over the graph arrays and the tokenizer-relevant config."""
    h = hashlib.sha256()
    for arr in (graph.indptr, graph.indices, graph.y):
        h.update(np.ascontiguousarray(arr, dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(graph.X, dtype="<f4").tobytes())
    for key in sorted(config_pairs):
        h.update(f"{key}={config_pairs[key]}\n".encode())
    return h.digest()


def write_cache(path, header: CacheHeader, arrays):
    parts = [header.pack(), struct.pack("<Q", len(arrays))]
    for arr in arrays:
        arr = np.ascontiguousarray(arr, dtype="<i8")
        parts.append(struct.pack("<Q", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_header(path) -> CacheHeader:
    with open(path, "rb") as fh:
        return CacheHeader.unpack(fh.read(_HEADER.size))


def read_cache(path):
    raw = Path(path).read_bytes()
    header = CacheHeader.unpack(raw)
    if header.version != VERSION:
        raise CacheError(f"unsupported cache version {header.version}")
    try:
        return header, _read_arrays(raw, _HEADER.size)
    except struct.error as exc:
        raise CacheError(f"truncated cache ({exc})") from exc


def _read_arrays(raw, pos):
    (count,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    arrays = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<Q", raw, pos)
        pos += 8
        shape = struct.unpack_from(f"<{ndim}Q", raw, pos)
        pos += 8 * ndim
        size = int(np.prod(shape, dtype=np.int64)) * 8
        if pos + size > len(raw):
            raise CacheError("truncated payload")
        arrays.append(np.frombuffer(raw, dtype="<i8", count=size // 8, offset=pos).reshape(shape).astype(np.int64))
        pos += size
    if pos != len(raw):
        raise CacheError("trailing bytes after the last array")
    return arrays
