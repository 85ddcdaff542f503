import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import gap_streams
from fwdindex import ValueFormat, to_gaps
from fwdindex import bytecodecs as bc
from fwdindex.bytecodecs import (
    StreamVByteBlock,
    svb_decode_doc,
    svb_dot_buffered,
    svb_encode_doc,
    svb_encode_stream,
    svb_stream_decode_doc,
    vbyte_decode,
    vbyte_decode_doc,
    vbyte_encode,
    vbyte_encode_doc,
)
from fwdindex.errors import CorruptionError, ValidationError


# -- VByte ------------------------------------------------------------------


@pytest.mark.parametrize("x,code", [
    (0, b"\x00"), (127, b"\x7f"), (128, b"\x80\x01"), (300, b"\xac\x02"),
    (16383, b"\xff\x7f"), (16384, b"\x80\x80\x01"), (2**21 - 1, b"\xff\xff\x7f"),
])
def test_vbyte_codewords(x, code):
    assert vbyte_encode(x) == code
    assert vbyte_decode(code) == (x, len(code))


def test_vbyte_range():
    with pytest.raises(ValidationError):
        vbyte_encode(2**21)
    with pytest.raises(ValidationError):
        vbyte_encode(-1)


def test_vbyte_unterminated():
    with pytest.raises(CorruptionError):
        vbyte_decode(b"\x80\x80")
    with pytest.raises(CorruptionError):
        vbyte_decode(b"")
    with pytest.raises(CorruptionError):
        vbyte_decode_doc(b"\x05\x06", 1)


def test_vbyte_exhaustive_bulk():
    x = np.arange(2**21, dtype=np.int64)
    indptr = np.arange(x.size + 1)
    blob, offsets = bc.vbyte_encode_all(x, indptr)
    sizes = np.diff(offsets.astype(np.int64))
    assert np.array_equal(sizes, 1 + (x >= 2**7) + (x >= 2**14))
    out = bc.vbyte_decode_all(blob, offsets, np.ones(x.size, np.uint32), 2**21)
    assert np.array_equal(out, x)
    for v in (0, 1, 127, 128, 300, 16383, 16384, 2**21 - 1):
        assert bytes(blob[int(offsets[v]) : int(offsets[v + 1])]) == vbyte_encode(v)


@given(gap_streams())
def test_vbyte_doc_round_trip(gaps):
    buf = vbyte_encode_doc(gaps)
    assert np.array_equal(vbyte_decode_doc(buf, gaps.size, 1 << 16), gaps)


# -- StreamVByte ------------------------------------------------------------


def test_svb_small_gaps_cost_ten_bits():
    block = svb_encode_doc([1, 1, 1, 1])
    assert block.controls == b"\x00"
    assert block.data == b"\x01\x01\x01\x01"
    assert 8 * block.nbytes / 4 == 10.0


def test_svb_control_byte_counts():
    block = svb_encode_doc([300, 2, 70000, 5])
    ctrl = block.controls[0]
    assert [((ctrl >> (2 * j)) & 3) + 1 for j in range(4)] == [2, 1, 3, 1]
    assert ctrl == 0b00_10_00_01
    assert block.data == (300).to_bytes(2, "little") + b"\x02" + (70000).to_bytes(3, "little") + b"\x05"


def test_svb_partial_quad():
    block = svb_encode_doc([1, 256, 3, 4, 70000])
    assert len(block.controls) == 2 and block.controls[1] == 0b10
    for path in ("vector", "scalar"):
        assert svb_decode_doc(block, 5, path=path).tolist() == [1, 256, 3, 4, 70000]


def test_svb_short_data_is_corruption():
    block = svb_encode_doc([300, 2, 70000, 5])
    with pytest.raises(CorruptionError):
        svb_decode_doc(StreamVByteBlock(block.controls, block.data[:-1]), 4)
    with pytest.raises(CorruptionError):
        svb_decode_doc(StreamVByteBlock(block.controls + b"\x00", block.data), 4)


@given(st.lists(st.integers(0, 2**32 - 1), max_size=40))
def test_svb_round_trip_and_size(vals):
    g = np.array(vals, dtype=np.int64)
    block = svb_encode_doc(g)
    nbytes = sum(1 if v < 2**8 else 2 if v < 2**16 else 3 if v < 2**24 else 4 for v in vals)
    assert len(block.data) == nbytes
    assert len(block.controls) == -(-len(vals) // 4)
    vec = svb_decode_doc(block, g.size, path="vector")
    sca = svb_decode_doc(block, g.size, path="scalar")
    assert np.array_equal(vec, g) and np.array_equal(sca, g)


def test_svb_vector_equals_scalar_on_10k_docs():
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        n = int(rng.integers(0, 40))
        g = rng.integers(0, 2 ** rng.integers(1, 33, n), dtype=np.int64) if n else np.zeros(0, np.int64)
        block = svb_encode_doc(g)
        assert np.array_equal(svb_decode_doc(block, n, path="vector"), svb_decode_doc(block, n, path="scalar"))


def test_svb_dot_examples():
    q = np.zeros(10, dtype=np.float32)
    q[2], q[5] = 3.0, 0.5
    block = svb_encode_doc([2, 3])
    fmt = ValueFormat.f32()
    assert svb_dot_buffered(block, 2, np.array([1.0, 2.0], np.float32), fmt, q) == 4.0
    assert svb_dot_buffered(block, 2, np.array([1.0, 2.0], np.float32), fmt, np.zeros(10, np.float32)) == 0.0
    with pytest.raises(CorruptionError):
        svb_dot_buffered(block, 2, np.array([1.0, 2.0], np.float32), fmt, np.zeros(5, np.float32))


def test_svb_dot_against_f64_oracle():
    rng = np.random.default_rng(2)
    d = 30522
    fmt = ValueFormat.f32()
    for _ in range(1000):
        n = int(rng.integers(0, 150))
        comps = np.sort(rng.choice(d, n, replace=False))
        vals = rng.lognormal(-0.7, 0.7, n).astype(np.float32)
        q = np.where(rng.random(d) < 0.05, rng.random(d), 0).astype(np.float32)
        exact = float(np.dot(vals.astype(np.float64), q[comps].astype(np.float64)))
        got = svb_dot_buffered(svb_encode_doc(to_gaps(comps)), n, vals, fmt, q)
        assert abs(got - exact) <= 1e-4 * max(abs(exact), 1e-30) + 1e-12


def test_svb_dot_permutation_consistent():
    rng = np.random.default_rng(4)
    d = 1000
    comps = np.sort(rng.choice(d, 30, replace=False))
    vals = rng.random(30).astype(np.float32)
    q = rng.random(d).astype(np.float32)
    perm = rng.permutation(d)
    fmt = ValueFormat.f32()

    def dot(c, v, qq):
        order = np.argsort(c)
        c, v = c[order], v[order]
        return svb_dot_buffered(svb_encode_doc(to_gaps(c)), c.size, v, fmt, qq)

    base = dot(comps, vals, q)
    qp = np.empty_like(q)
    qp[perm] = q
    moved = dot(perm[comps], vals, qp)
    assert abs(base - moved) <= 1e-6 * abs(base)


# -- shared-control stream mode ---------------------------------------------


def test_stream_mode_shares_control_bytes():
    docs = [np.array([5, 1, 1]), np.array([7, 2, 2, 2, 2]), np.array([], dtype=np.int64), np.array([9])]
    stream = svb_encode_stream(docs)
    assert len(stream.controls) == 3  # 9 values
    assert stream.shared_control_bytes == 1  # byte 0 holds values of docs 0 and 1
    per_doc = sum(svb_encode_doc(d).nbytes for d in docs)
    assert stream.nbytes < per_doc
    for i, d in enumerate(docs):
        gaps, wasted = svb_stream_decode_doc(stream, i)
        assert gaps.tolist() == d.tolist()
    # document 1 begins inside the first control byte: the 3 values of doc 0 are decoded too
    assert svb_stream_decode_doc(stream, 1)[1] == 3
