import struct

import numpy as np
import pytest

from swapgt.cache import CacheError, CacheHeader, graph_digest, read_cache, read_header, write_cache
from swapgt.graph import SbmSpec, generate_sbm


def _header(**kw):
    base = dict(n=4, d=3, k=2, s=1, seed=10000, digest=b"\x01" * 32)
    base.update(kw)
    return CacheHeader(**base)


def test_header_layout():
    raw = _header().pack()
    assert raw[:4] == b"SWGT"
    assert struct.unpack_from("<I", raw, 4)[0] == 1
    assert struct.unpack_from("<5Q", raw, 8) == (4, 3, 2, 1, 10000)
    assert len(raw) == 4 + 4 + 40 + 32
    assert CacheHeader.unpack(raw) == _header()


def test_round_trip_byte_identical(tmp_path, rng):
    arrays = [rng.integers(0, 4, (4, 2)), rng.integers(0, 4, (4, 2)),
              rng.integers(0, 4, (4, 2, 3)), rng.integers(0, 4, (4, 2, 3))]
    a, b = tmp_path / "a.swgt", tmp_path / "b.swgt"
    write_cache(a, _header(), arrays)
    header, back = read_cache(a)
    assert header == _header() and read_header(a) == _header()
    for x, y in zip(arrays, back):
        np.testing.assert_array_equal(x, y)
        assert y.dtype == np.int64
    write_cache(b, header, back)
    assert a.read_bytes() == b.read_bytes()


def test_corrupt_files_rejected(tmp_path):
    path = tmp_path / "c.swgt"
    write_cache(path, _header(), [np.arange(8).reshape(4, 2)])
    raw = path.read_bytes()
    for bad in (b"XXXX" + raw[4:], raw[:50], raw[:-8], raw + b"\0" * 8, raw[:-20]):
        path.write_bytes(bad)
        with pytest.raises(CacheError):
            read_cache(path)
    path.write_bytes(raw[:4] + struct.pack("<I", 9) + raw[8:])
    with pytest.raises(CacheError, match="version"):
        read_cache(path)


def test_digest_tracks_graph_and_config():
    g = generate_sbm(SbmSpec((6, 6), 0.5, 0.1, 3, 2.0), seed=0)
    h = generate_sbm(SbmSpec((6, 6), 0.5, 0.1, 3, 2.0), seed=1)
    base = graph_digest(g, {"k": "3"})
    assert len(base) == 32
    assert base == graph_digest(g, {"k": "3"})
    assert base != graph_digest(g, {"k": "4"})
    assert base != graph_digest(h, {"k": "3"})
