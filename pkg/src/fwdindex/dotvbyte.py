"""DotVByte: one control bit per 16-bit gap and a fused inner-product kernel.

Layout of one document with ``nnz`` components::

    [nnz // 8 control bytes][data bytes][nnz % 8 raw uint16 component IDs]

Gaps are coded in groups of eight. Bit ``j`` of a group's control byte is 0
when gap ``j`` fits one data byte and 1 when it takes two (little-endian).
A group therefore consumes ``8 + popcount(control)`` data bytes. Components
that do not fill a whole group are stored verbatim as absolute IDs, so no
control byte ever straddles two documents.

The dot product never materialises the decoded components: each group is
expanded into eight lanes, turned into IDs by a running prefix sum, used to
gather query weights, multiplied with the document values and added into
eight float32 lane accumulators. The lanes are reduced once per document,
then the tail is added scalar-wise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._jit import U0, U1, U8, hsum8, hsum8_py, jit, jit_inline, load_u16, load_value
from .core import ValueFormat, dequantize
from .errors import CorruptionError, ValidationError

GROUP = 8
MAX_GAP = 1 << 16


def _tables():
    lengths = np.zeros(256, dtype=np.uint8)
    shuffle = np.full((256, 16), 0xFF, dtype=np.uint8)
    for ctrl in range(256):
        src = 0
        for lane in range(GROUP):
            shuffle[ctrl, 2 * lane] = src
            src += 1
            if (ctrl >> lane) & 1:
                shuffle[ctrl, 2 * lane + 1] = src
                src += 1
        lengths[ctrl] = src
    return lengths, shuffle


#: data bytes consumed per control byte (8 + popcount) and the byte shuffle
#: that expands them into eight little-endian uint16 lanes (0xFF = zero byte)
DVB_LENGTHS, DVB_SHUFFLE = _tables()


def _lane_table(shuffle):
    # the shuffle folded for 16-bit loads: low byte = source offset of the
    # lane's first byte, bits 16..31 = mask keeping one or two bytes
    src = shuffle[:, 0::2].astype(np.uint64)
    two = shuffle[:, 1::2] != 0xFF
    mask = np.where(two, 0xFFFF, 0x00FF).astype(np.uint64)
    return src | (mask << np.uint64(16))


#: per control byte and lane: data-byte offset and width mask
DVB_LANES = _lane_table(DVB_SHUFFLE)


@dataclass(frozen=True)
class DotVByteDoc:
    controls: bytes
    data: bytes
    tail: np.ndarray
    nnz: int

    def __post_init__(self):
        tail = np.asarray(self.tail, dtype=np.uint16)
        object.__setattr__(self, "tail", tail)
        groups, rest = divmod(self.nnz, GROUP)
        if len(self.controls) != groups:
            raise CorruptionError(f"{groups} control bytes expected for nnz={self.nnz}, got {len(self.controls)}")
        if tail.shape[0] != rest:
            raise CorruptionError(f"{rest} tail IDs expected for nnz={self.nnz}, got {tail.shape[0]}")
        need = int(DVB_LENGTHS[np.frombuffer(self.controls, dtype=np.uint8)].sum(dtype=np.int64))
        if len(self.data) != need:
            raise CorruptionError(f"control bytes imply {need} data bytes, got {len(self.data)}")

    @property
    def nbytes(self) -> int:
        return len(self.controls) + len(self.data) + 2 * self.tail.shape[0]

    def to_bytes(self) -> bytes:
        return self.controls + self.data + self.tail.astype("<u2").tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes, nnz: int) -> "DotVByteDoc":
        groups, rest = divmod(nnz, GROUP)
        if len(buf) < groups:
            raise CorruptionError("document shorter than its control bytes")
        controls = bytes(buf[:groups])
        need = int(DVB_LENGTHS[np.frombuffer(controls, dtype=np.uint8)].sum(dtype=np.int64))
        if len(buf) != groups + need + 2 * rest:
            raise CorruptionError(
                f"document has {len(buf)} bytes, layout needs {groups + need + 2 * rest}"
            )
        tail = np.frombuffer(buf, dtype="<u2", count=rest, offset=groups + need)
        return cls(controls, bytes(buf[groups : groups + need]), tail.copy(), nnz)


def dvb_encode_doc(gaps) -> DotVByteDoc:
    g = np.asarray(gaps, dtype=np.int64)
    if g.size and (g.min() < 0 or g.max() >= MAX_GAP):
        raise ValidationError("DotVByte encodes gaps in [0, 65536)")
    comps = np.cumsum(g)
    if comps.size and comps[-1] >= MAX_GAP:
        raise ValidationError(f"component {comps[-1]} does not fit 16 bits")
    nnz = g.size
    full = (nnz // GROUP) * GROUP
    body = g[:full].reshape(-1, GROUP)
    wide = body >= 256
    controls = (wide.astype(np.uint16) << np.arange(GROUP, dtype=np.uint16)).sum(axis=1)
    le = body.astype("<u2").view(np.uint8).reshape(-1, 2)
    keep = np.ones_like(le, dtype=bool)
    keep[:, 1] = wide.reshape(-1)
    return DotVByteDoc(
        controls.astype(np.uint8).tobytes(), le[keep].tobytes(), comps[full:].astype(np.uint16), nnz
    )


def _decode_gaps_vector(doc: DotVByteDoc) -> np.ndarray:
    ctrl = np.frombuffer(doc.controls, dtype=np.uint8)
    if ctrl.size == 0:
        return np.zeros(0, dtype=np.int64)
    window = np.frombuffer(doc.data + bytes(16), dtype=np.uint8)
    starts = np.zeros(ctrl.size, dtype=np.int64)
    np.cumsum(DVB_LENGTHS[ctrl][:-1], out=starts[1:])
    pattern = DVB_SHUFFLE[ctrl]
    lanes = window[starts[:, None] + (pattern & 0x0F)]
    lanes[pattern & 0x80 != 0] = 0
    return lanes.view("<u2").reshape(-1).astype(np.int64)


def _decode_gaps_scalar(doc: DotVByteDoc) -> np.ndarray:
    out = np.empty(len(doc.controls) * GROUP, dtype=np.int64)
    pos = 0
    data = doc.data
    for g, ctrl in enumerate(doc.controls):
        for lane in range(GROUP):
            x = data[pos]
            pos += 1
            if (ctrl >> lane) & 1:
                x |= data[pos] << 8
                pos += 1
            out[g * GROUP + lane] = x
    return out


def dvb_decode_doc(doc: DotVByteDoc, *, path: str = "vector", dim: int | None = None) -> np.ndarray:
    """Ascending component IDs of ``doc``."""
    if path == "vector":
        gaps = _decode_gaps_vector(doc)
    elif path == "scalar":
        gaps = _decode_gaps_scalar(doc)
    else:
        raise ValueError(f"unknown decode path {path!r}")
    ids = np.concatenate([np.cumsum(gaps), doc.tail.astype(np.int64)])
    if ids.size:
        steps = np.diff(ids)
        if steps.size and steps.min() <= 0:
            j = int(np.flatnonzero(steps <= 0)[0]) + 1
            raise CorruptionError(f"decoded components not increasing at position {j}")
        if dim is not None and ids[-1] >= dim:
            raise CorruptionError(f"decoded component {ids[-1]} >= dim {dim}")
    return ids


def dvb_dot(doc: DotVByteDoc, doc_values, fmt: ValueFormat, q, *, path: str = "vector") -> float:
    """Inner product of one encoded document with a dense query.

    Both paths accumulate lane ``j`` of every group into partial sum ``j``,
    reduce the eight partials, then add tail products in order, so they
    return the same float32 result; ``path`` only changes how gaps are decoded.
    """
    q = getattr(q, "buffer", q)
    ids = dvb_decode_doc(doc, path=path, dim=q.shape[0])
    vals = dequantize(np.asarray(doc_values), fmt).reshape(-1)
    if vals.shape[0] != doc.nnz:
        raise ValidationError(f"{vals.shape[0]} values for {doc.nnz} components")
    full = (doc.nnz // GROUP) * GROUP
    f32 = np.float32
    if path == "vector":
        prods = (vals[:full] * q[ids[:full]]).reshape(-1, GROUP)
        lanes = prods.cumsum(axis=0, dtype=np.float32)[-1] if full else np.zeros(GROUP, f32)
    else:
        lanes = [f32(0)] * GROUP
        for i in range(full):
            lanes[i % GROUP] = f32(lanes[i % GROUP] + f32(vals[i] * q[ids[i]]))
    acc = hsum8_py(lanes)
    for i in range(full, doc.nnz):
        acc = f32(acc + f32(vals[i] * q[ids[i]]))
    return float(acc)


# ---------------------------------------------------------------------------
# bulk kernels
# ---------------------------------------------------------------------------


@jit
def _dvb_encode_all(comps, indptr):
    n = indptr.shape[0] - 1
    buf = np.zeros(comps.shape[0] * 2 + n, dtype=np.uint8)
    offsets = np.zeros(n + 1, dtype=np.uint64)
    p = 0
    for d in range(n):
        s = indptr[d]
        nnz = indptr[d + 1] - s
        groups = nnz // 8
        dp = p + groups
        prev = 0
        for g in range(groups):
            ctrl = 0
            for lane in range(8):
                c = comps[s + 8 * g + lane]
                gap = c - prev
                prev = c
                buf[dp] = gap & 0xFF
                dp += 1
                if gap >= 256:
                    ctrl |= 1 << lane
                    buf[dp] = gap >> 8
                    dp += 1
            buf[p + g] = ctrl
        for j in range(s + 8 * groups, s + nnz):
            buf[dp] = comps[j] & 0xFF
            buf[dp + 1] = comps[j] >> 8
            dp += 2
        p = dp
        offsets[d + 1] = p
    return buf[:p].copy(), offsets


@jit
def _group_lanes(buf, dp, ctrl, shuffle, ids):
    """Expand one group's data bytes at ``dp`` into eight gap lanes (pshufb-style)."""
    for lane in range(8):
        s0 = np.uint64(shuffle[ctrl, 2 * lane])
        s1 = np.uint64(shuffle[ctrl, 2 * lane + 1])
        lo = np.uint64(buf[dp + (s0 & np.uint64(0x0F))]) & ((s0 >> np.uint64(7)) - U1)
        hi = np.uint64(buf[dp + (s1 & np.uint64(0x0F))]) & ((s1 >> np.uint64(7)) - U1)
        ids[lane] = lo | (hi << U8)


@jit
def _group_lanes_scalar(buf, dp, ctrl, ids):
    for lane in range(8):
        x = np.uint64(buf[dp])
        dp += U1
        if (ctrl >> np.uint64(lane)) & U1:
            x |= np.uint64(buf[dp]) << U8
            dp += U1
        ids[lane] = x
    return dp


@jit
def _dvb_decode_all(buf, offsets, nnzs, dim, lengths, shuffle, vector, out):
    ids = np.zeros(8, dtype=np.uint64)
    udim = np.uint64(dim)
    o = 0
    for d in range(nnzs.shape[0]):
        nnz = np.uint64(nnzs[d])
        groups = nnz >> np.uint64(3)
        cp = offsets[d]
        dp = cp + groups
        end = offsets[d + 1]
        cur = U0
        first = True
        for g in range(groups):
            ctrl = np.uint64(buf[cp + np.uint64(g)])
            if dp + np.uint64(lengths[ctrl]) > end:
                return d
            if vector:
                _group_lanes(buf, dp, ctrl, shuffle, ids)
                dp += np.uint64(lengths[ctrl])
            else:
                dp = _group_lanes_scalar(buf, dp, ctrl, ids)
            for lane in range(8):
                if ids[lane] == U0 and not first:
                    return d
                first = False
                cur += ids[lane]
                if cur >= udim:
                    return d
                out[o] = cur
                o += 1
        rest = nnz - (groups << np.uint64(3))
        if dp + rest * np.uint64(2) != end:
            return d
        for t in range(rest):
            c = np.uint64(buf[dp]) | (np.uint64(buf[dp + U1]) << U8)
            dp += np.uint64(2)
            if (c <= cur and not first) or c >= udim:
                return d
            first = False
            cur = c
            out[o] = cur
            o += 1
    return -1


@jit_inline
def _lane(buf, dp, entry):
    return load_u16(buf, dp + (entry & np.uint64(0xFF))) & (entry >> np.uint64(16))


@jit
def _dvb_scores_vector(buf, offsets, nnzs, lengths, lanes, vals, lut, voffs, q, out):
    # lanes are unrolled into locals so they stay in registers
    for d in range(nnzs.shape[0]):
        nnz = np.uint64(nnzs[d])
        groups = nnz >> np.uint64(3)
        cp = offsets[d]
        dp = cp + groups
        vp = voffs[d]
        c = U0
        a0 = a1 = a2 = a3 = a4 = a5 = a6 = a7 = np.float32(0)
        for g in range(groups):
            ctrl = np.uint64(buf[cp + np.uint64(g)])
            e = lanes[ctrl]
            c0 = c + _lane(buf, dp, e[0])
            c1 = c0 + _lane(buf, dp, e[1])
            c2 = c1 + _lane(buf, dp, e[2])
            c3 = c2 + _lane(buf, dp, e[3])
            c4 = c3 + _lane(buf, dp, e[4])
            c5 = c4 + _lane(buf, dp, e[5])
            c6 = c5 + _lane(buf, dp, e[6])
            c7 = c6 + _lane(buf, dp, e[7])
            c = c7
            dp += np.uint64(lengths[ctrl])
            a0 += load_value(vals, lut, vp) * q[c0]
            a1 += load_value(vals, lut, vp + U1) * q[c1]
            a2 += load_value(vals, lut, vp + np.uint64(2)) * q[c2]
            a3 += load_value(vals, lut, vp + np.uint64(3)) * q[c3]
            a4 += load_value(vals, lut, vp + np.uint64(4)) * q[c4]
            a5 += load_value(vals, lut, vp + np.uint64(5)) * q[c5]
            a6 += load_value(vals, lut, vp + np.uint64(6)) * q[c6]
            a7 += load_value(vals, lut, vp + np.uint64(7)) * q[c7]
            vp += U8
        acc = ((a0 + a1) + (a2 + a3)) + ((a4 + a5) + (a6 + a7))
        for t in range(nnz - (groups << np.uint64(3))):
            acc += load_value(vals, lut, vp) * q[load_u16(buf, dp)]
            dp += np.uint64(2)
            vp += U1
        out[d] = acc


@jit
def _dvb_scores_scalar(buf, offsets, nnzs, vals, lut, voffs, q, out):
    lanes = np.zeros(8, dtype=np.float32)
    for d in range(nnzs.shape[0]):
        nnz = np.uint64(nnzs[d])
        groups = nnz >> np.uint64(3)
        dp = offsets[d] + groups
        vp = voffs[d]
        carry = U0
        lanes[:] = 0
        for g in range(groups):
            ctrl = np.uint64(buf[offsets[d] + np.uint64(g)])
            for lane in range(8):
                # branch-free: always read two bytes, keep the second iff the bit is set
                wide = (ctrl >> np.uint64(lane)) & U1
                x = np.uint64(buf[dp]) | ((np.uint64(buf[dp + U1]) << U8) & (U0 - wide))
                dp += U1 + wide
                carry += x
                lanes[lane] += load_value(vals, lut, vp) * q[carry]
                vp += U1
        acc = hsum8(lanes)
        for t in range(nnz - (groups << np.uint64(3))):
            c = np.uint64(buf[dp]) | (np.uint64(buf[dp + U1]) << U8)
            dp += np.uint64(2)
            acc += load_value(vals, lut, vp) * q[c]
            vp += U1
        out[d] = acc


def dvb_encode_all(comps, indptr):
    c = np.ascontiguousarray(comps, dtype=np.int64)
    if c.size and (c.min() < 0 or c.max() >= MAX_GAP):
        raise ValidationError("DotVByte components must fit 16 bits")
    return _dvb_encode_all(c, np.ascontiguousarray(indptr, dtype=np.int64))


def dvb_decode_all(padded_blob, offsets, nnzs, dim: int, *, path: str = "vector") -> np.ndarray:
    if path not in ("vector", "scalar"):
        raise ValueError(f"unknown decode path {path!r}")
    out = np.empty(int(np.sum(nnzs, dtype=np.int64)), dtype=np.int64)
    bad = _dvb_decode_all(padded_blob, offsets, nnzs, np.int64(dim), DVB_LENGTHS, DVB_SHUFFLE,
                          path == "vector", out)
    if bad >= 0:
        raise CorruptionError(f"dotvbyte: document {bad} does not decode to valid components")
    return out


def dvb_scores_all(padded_blob, offsets, nnzs, vals, lut, voffs, q, out, *, path: str = "vector") -> None:
    if path == "vector":
        _dvb_scores_vector(padded_blob, offsets, nnzs, DVB_LENGTHS, DVB_LANES, vals, lut, voffs, q, out)
    elif path == "scalar":
        _dvb_scores_scalar(padded_blob, offsets, nnzs, vals, lut, voffs, q, out)
    else:
        raise ValueError(f"unknown kernel path {path!r}")
