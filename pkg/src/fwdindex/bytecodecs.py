"""VByte and StreamVByte over per-document gap streams.

VByte stores 7 payload bits per byte, least significant group first, and
uses the top bit as a continuation flag (1 = more bytes follow).

StreamVByte keeps a 2-bit length code per value (``code + 1`` data bytes) in
separate control bytes, four values per control byte, lowest bits first.
Data bytes are little-endian. In the index every document starts on its own
control byte; :func:`svb_encode_stream` builds the shared-control layout used
to show what that alignment costs and saves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._jit import U0, U1, U2, jit, load_value
from .core import ValueFormat, dequantize, from_gaps
from .errors import CorruptionError, ValidationError

VBYTE_LIMIT = 1 << 21


# ---------------------------------------------------------------------------
# VByte
# ---------------------------------------------------------------------------


def vbyte_encode(x: int) -> bytes:
    x = int(x)
    if not 0 <= x < VBYTE_LIMIT:
        raise ValidationError(f"vbyte encodes integers in [0, 2**21), got {x}")
    out = bytearray()
    while x >= 0x80:
        out.append(0x80 | (x & 0x7F))
        x >>= 7
    out.append(x)
    return bytes(out)


def vbyte_decode(buf: bytes, pos: int = 0) -> tuple[int, int]:
    """Decode one integer at ``pos``; returns (value, position after it)."""
    x = 0
    i = 0
    while True:
        if pos >= len(buf):
            raise CorruptionError(f"unterminated vbyte codeword at byte {pos}")
        b = buf[pos]
        x += (b % 128) << (7 * i)
        pos += 1
        i += 1
        if b < 0x80:
            return x, pos


def vbyte_encode_doc(gaps) -> bytes:
    return b"".join(vbyte_encode(g) for g in np.asarray(gaps, dtype=np.int64).tolist())


def vbyte_decode_doc(buf: bytes, nnz: int, dim: int | None = None) -> np.ndarray:
    gaps = np.empty(nnz, dtype=np.int64)
    pos = 0
    for i in range(nnz):
        gaps[i], pos = vbyte_decode(buf, pos)
    if pos != len(buf):
        raise CorruptionError(f"{len(buf) - pos} stray bytes after {nnz} vbyte codewords")
    if dim is not None:
        from_gaps(gaps, dim)
    return gaps


@jit
def _vbyte_encode_all(comps, indptr):
    n = indptr.shape[0] - 1
    buf = np.zeros(comps.shape[0] * 3, dtype=np.uint8)
    offsets = np.zeros(n + 1, dtype=np.uint64)
    p = 0
    for d in range(n):
        prev = 0
        for j in range(indptr[d], indptr[d + 1]):
            x = comps[j] - prev
            prev = comps[j]
            while x >= 0x80:
                buf[p] = 0x80 | (x & 0x7F)
                x >>= 7
                p += 1
            buf[p] = x
            p += 1
        offsets[d + 1] = p
    return buf[:p].copy(), offsets


@jit
def _vbyte_decode_all(buf, offsets, nnzs, dim, out):
    o = 0
    for d in range(nnzs.shape[0]):
        p = offsets[d]
        end = offsets[d + 1]
        cur = np.int64(0)
        for j in range(nnzs[d]):
            x = np.int64(0)
            shift = 0
            while True:
                if p >= end or shift > 14:
                    return d
                b = buf[p]
                p += U1
                x |= np.int64(b & 0x7F) << shift
                shift += 7
                if b < 0x80:
                    break
            if j > 0 and x == 0:
                return d
            cur += x
            if cur >= dim:
                return d
            out[o] = cur
            o += 1
        if p != end:
            return d
    return -1


@jit
def _vbyte_scores_all(buf, offsets, nnzs, vals, lut, voffs, q, out):
    for d in range(nnzs.shape[0]):
        p = offsets[d]
        vp = voffs[d]
        cur = U0
        acc = np.float32(0)
        for j in range(nnzs[d]):
            b = np.uint64(buf[p])
            p += U1
            x = b & np.uint64(0x7F)
            shift = np.uint64(7)
            while b >= np.uint64(0x80):
                b = np.uint64(buf[p])
                p += U1
                x |= (b & np.uint64(0x7F)) << shift
                shift += np.uint64(7)
            cur += x
            acc += load_value(vals, lut, vp) * q[cur]
            vp += U1
        out[d] = acc


def vbyte_encode_all(comps, indptr):
    return _vbyte_encode_all(
        np.ascontiguousarray(comps, dtype=np.int64), np.ascontiguousarray(indptr, dtype=np.int64)
    )


def vbyte_decode_all(blob, offsets, nnzs, dim: int) -> np.ndarray:
    out = np.empty(int(np.sum(nnzs, dtype=np.int64)), dtype=np.int64)
    bad = _vbyte_decode_all(blob, offsets, nnzs, np.int64(dim), out)
    if bad >= 0:
        raise CorruptionError(f"vbyte: document {bad} does not decode to valid components")
    return out


def vbyte_scores_all(blob, offsets, nnzs, vals, lut, voffs, q, out) -> None:
    _vbyte_scores_all(blob, offsets, nnzs, vals, lut, voffs, q, out)


# ---------------------------------------------------------------------------
# StreamVByte
# ---------------------------------------------------------------------------


def _svb_tables():
    lengths = np.zeros(256, dtype=np.uint8)
    shuffle = np.full((256, 16), 0xFF, dtype=np.uint8)
    for ctrl in range(256):
        src = 0
        for lane in range(4):
            nbytes = ((ctrl >> (2 * lane)) & 3) + 1
            for b in range(nbytes):
                shuffle[ctrl, 4 * lane + b] = src + b
            src += nbytes
        lengths[ctrl] = src
    return lengths, shuffle


#: data bytes consumed by a control byte, and the byte shuffle that expands
#: those data bytes into four little-endian 32-bit lanes (0xFF = zero byte)
SVB_LENGTHS, SVB_SHUFFLE = _svb_tables()


@dataclass(frozen=True)
class StreamVByteBlock:
    controls: bytes
    data: bytes

    @property
    def nbytes(self) -> int:
        return len(self.controls) + len(self.data)


def _byte_count(x: np.ndarray) -> np.ndarray:
    return 1 + (x >= 1 << 8).astype(np.int64) + (x >= 1 << 16) + (x >= 1 << 24)


def svb_encode_doc(gaps) -> StreamVByteBlock:
    g = np.asarray(gaps, dtype=np.int64)
    if g.size and (g.min() < 0 or g.max() >= 1 << 32):
        raise ValidationError("streamvbyte encodes unsigned 32-bit integers")
    nbytes = _byte_count(g)
    codes = np.zeros(-(-g.size // 4) * 4, dtype=np.int64)
    codes[: g.size] = nbytes - 1
    controls = (codes.reshape(-1, 4) << np.array([0, 2, 4, 6])).sum(axis=1).astype(np.uint8)
    le = g.astype("<u4").view(np.uint8).reshape(-1, 4)
    keep = np.arange(4) < nbytes[:, None]
    return StreamVByteBlock(controls.tobytes(), le[keep].tobytes())


def _svb_expected_data_len(ctrl: np.ndarray, nnz: int) -> int:
    codes = ((ctrl[:, None] >> np.array([0, 2, 4, 6], dtype=np.uint8)) & 3).reshape(-1)[:nnz]
    return int(codes.sum()) + nnz


def svb_decode_doc(block: StreamVByteBlock, nnz: int, *, path: str = "vector",
                   dim: int | None = None) -> np.ndarray:
    """Decode ``nnz`` gaps. ``path`` selects the shuffle-table decode or the
    per-value scalar loop; both return identical sequences."""
    ctrl = np.frombuffer(block.controls, dtype=np.uint8)
    if ctrl.size != -(-nnz // 4):
        raise CorruptionError(f"expected {-(-nnz // 4)} control bytes for {nnz} values, got {ctrl.size}")
    need = _svb_expected_data_len(ctrl, nnz)
    if len(block.data) != need:
        raise CorruptionError(f"controls imply {need} data bytes, block has {len(block.data)}")
    if path == "vector":
        gaps = _svb_decode_vector(ctrl, block.data, nnz)
    elif path == "scalar":
        gaps = _svb_decode_scalar(ctrl, block.data, nnz)
    else:
        raise ValueError(f"unknown decode path {path!r}")
    if dim is not None:
        from_gaps(gaps, dim)
    return gaps


def _svb_decode_vector(ctrl: np.ndarray, data: bytes, nnz: int) -> np.ndarray:
    if nnz == 0:
        return np.zeros(0, dtype=np.int64)
    window = np.frombuffer(data + bytes(16), dtype=np.uint8)
    starts = np.zeros(ctrl.size, dtype=np.int64)
    np.cumsum(SVB_LENGTHS[ctrl][:-1], out=starts[1:])
    pattern = SVB_SHUFFLE[ctrl]
    lanes = window[starts[:, None] + (pattern & 0x0F)]
    lanes[pattern & 0x80 != 0] = 0
    return lanes.view("<u4").reshape(-1)[:nnz].astype(np.int64)


def _svb_decode_scalar(ctrl: np.ndarray, data: bytes, nnz: int) -> np.ndarray:
    out = np.empty(nnz, dtype=np.int64)
    pos = 0
    for i in range(nnz):
        nbytes = ((int(ctrl[i >> 2]) >> (2 * (i & 3))) & 3) + 1
        out[i] = int.from_bytes(data[pos : pos + nbytes], "little")
        pos += nbytes
    return out


def svb_dot_buffered(block: StreamVByteBlock, nnz: int, doc_values, fmt: ValueFormat, q) -> float:
    """Decode into a buffer, then accumulate products left to right in float32."""
    q = getattr(q, "buffer", q)
    comps = np.cumsum(svb_decode_doc(block, nnz))
    if comps.size and comps[-1] >= q.shape[0]:
        raise CorruptionError(f"decoded component {comps[-1]} >= dim {q.shape[0]}")
    vals = dequantize(np.asarray(doc_values), fmt).reshape(-1)
    acc = np.float32(0)
    for v, qq in zip(vals, q[comps]):
        acc = np.float32(acc + np.float32(v * qq))
    return float(acc)


@jit
def _svb_encode_all(comps, indptr):
    n = indptr.shape[0] - 1
    buf = np.zeros(comps.shape[0] * 5 + n, dtype=np.uint8)
    offsets = np.zeros(n + 1, dtype=np.uint64)
    p = 0
    for d in range(n):
        s = indptr[d]
        nnz = indptr[d + 1] - s
        cp = p
        dp = p + (nnz + 3) // 4
        prev = 0
        for j in range(nnz):
            x = comps[s + j] - prev
            prev = comps[s + j]
            nb = 1
            if x >= 1 << 8:
                nb += 1
            if x >= 1 << 16:
                nb += 1
            if x >= 1 << 24:
                nb += 1
            buf[cp + (j >> 2)] |= (nb - 1) << (2 * (j & 3))
            for b in range(nb):
                buf[dp] = (x >> (8 * b)) & 0xFF
                dp += 1
        p = dp
        offsets[d + 1] = p
    return buf[:p].copy(), offsets


@jit
def _svb_decode_doc_vector(buf, cp, nnz, lengths, shuffle, gaps):
    """Shuffle-table decode of one document into ``gaps`` (len >= nnz rounded up to 4);
    returns the position after the data bytes."""
    nq = (nnz + U1 + U2) >> U2
    dp = cp + nq
    for qi in range(nq):
        c = buf[cp + np.uint64(qi)]
        for lane in range(4):
            x = U0
            for b in range(4):
                s = shuffle[c, 4 * lane + b]
                if s != 0xFF:
                    x |= np.uint64(buf[dp + np.uint64(s)]) << np.uint64(8 * b)
            gaps[4 * qi + lane] = x
        dp += np.uint64(lengths[c])
    # phantom lanes of a partial last quad were counted as one byte each
    return dp - (nq * np.uint64(4) - nnz)


@jit
def _svb_decode_doc_scalar(buf, cp, nnz, gaps):
    nq = (nnz + U1 + U2) >> U2
    dp = cp + nq
    for j in range(nnz):
        c = np.uint64(buf[cp + np.uint64(j >> 2)])
        nb = ((c >> np.uint64(2 * (j & 3))) & np.uint64(3)) + U1
        x = U0
        for b in range(nb):
            x |= np.uint64(buf[dp]) << np.uint64(8 * b)
            dp += U1
        gaps[j] = x
    return dp


@jit
def _svb_decode_all(buf, offsets, nnzs, dim, lengths, shuffle, vector, out):
    maxn = 0
    for d in range(nnzs.shape[0]):
        maxn = max(maxn, nnzs[d])
    gaps = np.zeros(maxn + 4, dtype=np.uint64)
    o = 0
    for d in range(nnzs.shape[0]):
        nnz = np.uint64(nnzs[d])
        if vector:
            end = _svb_decode_doc_vector(buf, offsets[d], nnz, lengths, shuffle, gaps)
        else:
            end = _svb_decode_doc_scalar(buf, offsets[d], nnz, gaps)
        if end != offsets[d + 1]:
            return d
        cur = np.int64(0)
        for j in range(nnz):
            if j > 0 and gaps[j] == U0:
                return d
            cur += np.int64(gaps[j])
            if cur >= dim:
                return d
            out[o] = cur
            o += 1
    return -1


@jit
def _svb_scores_all(buf, offsets, nnzs, lengths, shuffle, vals, lut, voffs, q, out):
    maxn = 0
    for d in range(nnzs.shape[0]):
        maxn = max(maxn, nnzs[d])
    gaps = np.zeros(maxn + 4, dtype=np.uint64)
    for d in range(nnzs.shape[0]):
        nnz = np.uint64(nnzs[d])
        _svb_decode_doc_vector(buf, offsets[d], nnz, lengths, shuffle, gaps)
        vp = voffs[d]
        cur = U0
        acc = np.float32(0)
        for j in range(nnz):
            cur += gaps[j]
            acc += load_value(vals, lut, vp) * q[cur]
            vp += U1
        out[d] = acc



def svb_encode_all(comps, indptr):
    return _svb_encode_all(
        np.ascontiguousarray(comps, dtype=np.int64), np.ascontiguousarray(indptr, dtype=np.int64)
    )


def svb_decode_all(padded_blob, offsets, nnzs, dim: int, *, path: str = "vector") -> np.ndarray:
    if path not in ("vector", "scalar"):
        raise ValueError(f"unknown decode path {path!r}")
    out = np.empty(int(np.sum(nnzs, dtype=np.int64)), dtype=np.int64)
    bad = _svb_decode_all(padded_blob, offsets, nnzs, np.int64(dim), SVB_LENGTHS, SVB_SHUFFLE,
                          path == "vector", out)
    if bad >= 0:
        raise CorruptionError(f"streamvbyte: document {bad} does not decode to valid components")
    return out


def svb_scores_all(padded_blob, offsets, nnzs, vals, lut, voffs, q, out) -> None:
    _svb_scores_all(padded_blob, offsets, nnzs, SVB_LENGTHS, SVB_SHUFFLE, vals, lut, voffs, q, out)


# ---------------------------------------------------------------------------
# shared-control stream mode
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SvbStream:
    """Documents concatenated into one StreamVByte stream with shared controls."""

    controls: bytes
    data: bytes
    nnzs: np.ndarray
    first_value: np.ndarray
    quad_data_offset: np.ndarray

    @property
    def nbytes(self) -> int:
        return len(self.controls) + len(self.data)

    @property
    def shared_control_bytes(self) -> int:
        """Control bytes holding lengths for values of two or more documents."""
        starts = self.first_value[(self.nnzs > 0)]
        return int(np.count_nonzero((starts % 4 != 0) & (starts > 0)))


def svb_encode_stream(gap_streams) -> SvbStream:
    streams = [np.asarray(g, dtype=np.int64) for g in gap_streams]
    nnzs = np.array([g.size for g in streams], dtype=np.int64)
    first = np.zeros(len(streams), dtype=np.int64)
    if len(streams) > 1:
        np.cumsum(nnzs[:-1], out=first[1:])
    allg = np.concatenate(streams) if streams else np.zeros(0, np.int64)
    block = svb_encode_doc(allg)
    nbytes = _byte_count(allg)
    data_pos = np.zeros(allg.size + 1, dtype=np.int64)
    np.cumsum(nbytes, out=data_pos[1:])
    quad_off = data_pos[(first // 4) * 4] if allg.size else np.zeros(len(streams), np.int64)
    return SvbStream(block.controls, block.data, nnzs, first, quad_off)


def svb_stream_decode_doc(stream: SvbStream, i: int) -> tuple[np.ndarray, int]:
    """Decode document ``i``; returns (gaps, values decoded that belong to other documents).

    Decoding must start at the control byte holding the document's first value,
    so values of the previous document sharing that byte are decoded and dropped.
    """
    nnz = int(stream.nnzs[i])
    if nnz == 0:
        return np.zeros(0, dtype=np.int64), 0
    first = int(stream.first_value[i])
    q0 = first // 4
    q1 = (first + nnz - 1) // 4
    ctrl = np.frombuffer(stream.controls, dtype=np.uint8)[q0 : q1 + 1]
    data = stream.data[int(stream.quad_data_offset[i]) :]
    skip = first - 4 * q0
    decoded_count = min(4 * ctrl.size, int(stream.nnzs.sum()) - 4 * q0)
    vals = _svb_decode_vector(ctrl, data, decoded_count)
    return vals[skip : skip + nnz], decoded_count - nnz
