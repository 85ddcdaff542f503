"""Elias gamma, Elias delta and zeta codes over per-document gap streams.

Bits are written most-significant-first within each byte and the final byte
is zero-padded. Bit codes need positive integers, so the first gap of a
document (the absolute first component, possibly 0) is stored as ``gap + 1``.

The ``BitWriter``/``BitReader`` path is the readable reference. The
``*_all`` functions are numba kernels that encode, decode and score a whole
index at once; tests pin them against the reference.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from numba import errors, literally, types
from numba.extending import overload, register_jitable

from ._jit import U0, U1, U8, clz64, jit, jit_inline, load_be64, load_value
from .core import from_gaps
from .errors import CorruptionError, ValidationError


class BitCodecKind(IntEnum):
    GAMMA = 0
    DELTA = 1
    ZETA = 2


@dataclass(frozen=True)
class BitBuffer:
    data: bytes
    bit_len: int

    def __post_init__(self):
        if not 0 <= self.bit_len <= 8 * len(self.data):
            raise ValidationError(f"bit_len {self.bit_len} does not fit {len(self.data)} bytes")
        pad = 8 * len(self.data) - self.bit_len
        if pad and self.data[-1] & ((1 << min(pad, 8)) - 1):
            raise ValidationError("trailing pad bits must be zero")


class BitWriter:
    def __init__(self):
        self._acc = 0
        self._n = 0

    def write(self, value: int, nbits: int) -> None:
        if nbits:
            self._acc = (self._acc << nbits) | (value & ((1 << nbits) - 1))
            self._n += nbits

    def write_unary(self, h: int) -> None:
        """``h`` zeros followed by a one."""
        self.write(1, h + 1)

    def __len__(self):
        return self._n

    def getbuffer(self) -> BitBuffer:
        nbytes = (self._n + 7) // 8
        data = (self._acc << (8 * nbytes - self._n)).to_bytes(nbytes, "big")
        return BitBuffer(data, self._n)


class BitReader:
    def __init__(self, buf: BitBuffer | bytes, bit_len: int | None = None):
        if isinstance(buf, BitBuffer):
            data, bit_len = buf.data, buf.bit_len
        else:
            data = bytes(buf)
            bit_len = 8 * len(data) if bit_len is None else bit_len
        self._int = int.from_bytes(data, "big")
        self._total = 8 * len(data)
        self.bit_len = bit_len
        self.pos = 0

    def read(self, nbits: int) -> int:
        if self.pos + nbits > self.bit_len:
            raise CorruptionError(f"bitstream truncated at bit {self.pos} (need {nbits} more)")
        shift = self._total - self.pos - nbits
        self.pos += nbits
        return (self._int >> shift) & ((1 << nbits) - 1)

    def read_unary(self) -> int:
        h = 0
        while self.read(1) == 0:
            h += 1
        return h


# ---------------------------------------------------------------------------
# single-value codes
# ---------------------------------------------------------------------------


def _check_positive(x: int) -> int:
    x = int(x)
    if x < 1:
        raise ValidationError(f"bit codes encode integers >= 1, got {x}")
    return x


def gamma_encode(x: int, out: BitWriter) -> None:
    x = _check_positive(x)
    n = x.bit_length() - 1
    out.write(0, n)
    out.write(x, n + 1)


def gamma_decode(src: BitReader) -> int:
    n = src.read_unary()
    return (1 << n) | src.read(n)


def gamma_length(x: int) -> int:
    return 2 * (int(x).bit_length() - 1) + 1


def delta_encode(x: int, out: BitWriter) -> None:
    x = _check_positive(x)
    n = x.bit_length() - 1
    gamma_encode(n + 1, out)
    out.write(x, n)


def delta_decode(src: BitReader) -> int:
    n = gamma_decode(src) - 1
    return (1 << n) | src.read(n)


def delta_length(x: int) -> int:
    n = int(x).bit_length() - 1
    return gamma_length(n + 1) + n


def _zeta_shape(x: int, k: int) -> tuple[int, int, int, int]:
    """(h, low, width, threshold) for value x: low = 2^(hk), interval size
    m = 2^((h+1)k) - 2^(hk), width = ceil(log2 m), threshold = 2^width - m."""
    h = (x.bit_length() - 1) // k
    return (h, *_zeta_interval(h, k))


def _zeta_interval(h: int, k: int) -> tuple[int, int, int]:
    low = 1 << (h * k)
    m = (1 << ((h + 1) * k)) - low
    width = (m - 1).bit_length()
    return low, width, (1 << width) - m


def zeta_encode(x: int, k: int, out: BitWriter) -> None:
    x = _check_positive(x)
    if k < 1:
        raise ValidationError(f"zeta shape k must be >= 1, got {k}")
    h, low, width, thr = _zeta_shape(x, k)
    out.write_unary(h)
    z = x - low
    # minimal binary code: the first `thr` values take one bit less
    if z < thr:
        out.write(z, width - 1)
    else:
        out.write(z + thr, width)


def zeta_decode(src: BitReader, k: int) -> int:
    h = src.read_unary()
    low, width, thr = _zeta_interval(h, k)
    if width == 0:
        return low
    y = src.read(width - 1)
    if y >= thr:
        y = ((y << 1) | src.read(1)) - thr
    return low + y


def zeta_length(x: int, k: int) -> int:
    h, low, width, thr = _zeta_shape(int(x), k)
    return h + 1 + (width - 1 if x - low < thr else width)


@dataclass(frozen=True)
class BitCodec:
    """A bit code choice; ``k`` is the zeta shape and ignored otherwise."""

    kind: BitCodecKind
    k: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kind", BitCodecKind(self.kind))
        if self.k < 1:
            raise ValidationError(f"zeta shape k must be >= 1, got {self.k}")

    def encode(self, x: int, out: BitWriter) -> None:
        if self.kind == BitCodecKind.GAMMA:
            gamma_encode(x, out)
        elif self.kind == BitCodecKind.DELTA:
            delta_encode(x, out)
        else:
            zeta_encode(x, self.k, out)

    def decode(self, src: BitReader) -> int:
        if self.kind == BitCodecKind.GAMMA:
            return gamma_decode(src)
        if self.kind == BitCodecKind.DELTA:
            return delta_decode(src)
        return zeta_decode(src, self.k)

    def length(self, x: int) -> int:
        if self.kind == BitCodecKind.GAMMA:
            return gamma_length(x)
        if self.kind == BitCodecKind.DELTA:
            return delta_length(x)
        return zeta_length(x, self.k)

    def __str__(self):
        return f"zeta(k={self.k})" if self.kind == BitCodecKind.ZETA else self.kind.name.lower()


GAMMA = BitCodec(BitCodecKind.GAMMA)
DELTA = BitCodec(BitCodecKind.DELTA)


def zeta(k: int = 2) -> BitCodec:
    return BitCodec(BitCodecKind.ZETA, k)


# ---------------------------------------------------------------------------
# per-document streams
# ---------------------------------------------------------------------------


def bitcodec_encode_doc(gaps, codec: BitCodec) -> BitBuffer:
    out = BitWriter()
    for i, g in enumerate(np.asarray(gaps, dtype=np.int64).tolist()):
        codec.encode(g + 1 if i == 0 else g, out)
    return out.getbuffer()


def bitcodec_decode_doc(buf: BitBuffer, nnz: int, codec: BitCodec, dim: int | None = None) -> np.ndarray:
    src = BitReader(buf)
    gaps = np.empty(nnz, dtype=np.int64)
    for i in range(nnz):
        gaps[i] = codec.decode(src)
    if nnz:
        gaps[0] -= 1
    if dim is not None:
        from_gaps(gaps, dim)
    return gaps


# ---------------------------------------------------------------------------
# bulk kernels
# ---------------------------------------------------------------------------

#: bytes of zero padding the readers may peek past the last payload byte
READ_PAD = 8
_MAX_H = 40
_MAX_COMPONENT = 1 << 40


def zeta_tables(k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-h (low, width, threshold) arrays for the kernels."""
    hmax = min(_MAX_H, 62 // k)
    rows = [_zeta_interval(h, k) for h in range(hmax)]
    low, width, thr = (np.array(col, dtype=np.uint64) for col in zip(*rows))
    return low, width, thr


def _kernel_args(codec: BitCodec):
    low, width, thr = zeta_tables(codec.k if codec.kind == BitCodecKind.ZETA else 1)
    return int(codec.kind), low, width, thr


@jit
def _put(buf, pos, value, nbits):
    for i in range(nbits - 1, -1, -1):
        if (value >> i) & 1:
            buf[pos >> 3] |= np.uint8(0x80 >> (pos & 7))
        pos += 1
    return pos


@jit
def _bitlen(x):
    n = 0
    while x:
        x >>= 1
        n += 1
    return n


@jit
def _encode_one(buf, pos, x, kind, low, width, thr, k):
    if kind == 0:
        n = _bitlen(x) - 1
        return _put(buf, pos + n, x, n + 1)
    if kind == 1:
        n = _bitlen(x) - 1
        m = _bitlen(n + 1) - 1
        pos = _put(buf, pos + m, n + 1, m + 1)
        return _put(buf, pos, x, n)
    h = (_bitlen(x) - 1) // k
    pos = _put(buf, pos + h, 1, 1)
    z = x - np.int64(low[h])
    w = np.int64(width[h])
    t = np.int64(thr[h])
    if z < t:
        return _put(buf, pos, z, w - 1)
    return _put(buf, pos, z + t, w)


@jit
def _encode_all(comps, indptr, kind, k, low, width, thr, cap):
    n = indptr.shape[0] - 1
    buf = np.zeros(cap, dtype=np.uint8)
    offsets = np.zeros(n + 1, dtype=np.uint64)
    pos = 0
    for d in range(n):
        prev = -1
        for j in range(indptr[d], indptr[d + 1]):
            c = comps[j]
            pos = _encode_one(buf, pos, c - prev, kind, low, width, thr, k)
            prev = c
        pos = (pos + 7) & ~7
        offsets[d + 1] = pos >> 3
    return buf[: pos >> 3].copy(), offsets


@jit
def _peek(buf, pos, nbits):
    """Next ``nbits`` (<= 56) bits at bit position ``pos``; needs READ_PAD bytes of slack."""
    if nbits == U0:
        return U0
    b = pos >> np.uint64(3)
    w = U0
    for i in range(8):
        w = (w << U8) | np.uint64(buf[b + np.uint64(i)])
    sh = np.uint64(64) - (pos & np.uint64(7)) - nbits
    return (w >> sh) & ((U1 << nbits) - U1)


@jit
def _unary(buf, pos, limit):
    """Count zeros before the next one bit; returns (h, pos after the one)."""
    h = U0
    while pos < limit:
        if (buf[pos >> np.uint64(3)] >> (np.uint64(7) - (pos & np.uint64(7)))) & U1:
            return h, pos + U1
        h += U1
        pos += U1
    return np.uint64(1 << 62), pos


@jit
def _decode_slow(buf, pos, limit, kind, low, width, thr):
    """Bit-at-a-time decoder for codes too long for the 64-bit window."""
    if kind == 0:
        h, pos = _unary(buf, pos, limit)
        if h > np.uint64(56) or pos + h > limit:
            return U0, pos
        return (U1 << h) | _peek(buf, pos, h), pos + h
    if kind == 1:
        h, pos = _unary(buf, pos, limit)
        if h > np.uint64(6) or pos + h > limit:
            return U0, pos
        n = ((U1 << h) | _peek(buf, pos, h)) - U1
        pos += h
        if n > np.uint64(56) or pos + n > limit:
            return U0, pos
        return (U1 << n) | _peek(buf, pos, n), pos + n
    h, pos = _unary(buf, pos, limit)
    if h >= np.uint64(low.shape[0]):
        return U0, pos
    w = width[h]
    if w == U0:
        return low[h], pos
    if pos + w - U1 > limit:
        return U0, pos
    y = _peek(buf, pos, w - U1)
    pos += w - U1
    if y >= thr[h]:
        if pos + U1 > limit:
            return U0, pos
        y = ((y << U1) | _peek(buf, pos, U1)) - thr[h]
        pos += U1
    return low[h] + y, pos


@jit_inline
def _hi(w, n):
    """The ``n`` high bits of ``w``, for 0 <= n <= 63."""
    return (w >> U1) >> (np.uint64(63) - n)


# Windowed decoders: each reads a 64-bit window at ``pos`` (at least 57 valid
# bits, enough for any code of a 16-bit gap) and returns (value, new pos), or
# value 0 when the code is too long for the window or runs past ``limit``;
# callers then retry with :func:`_decode_slow`, which tells the two apart.
# Each computes unconditionally and tests validity in one branch at the end:
# early returns made numba emit code several times slower. Shift counts are
# masked to 6 bits so the discarded results stay well defined.

_M6 = np.uint64(63)


def _gamma_fast(buf, pos, limit, low, width, thr):
    w = load_be64(buf, pos >> np.uint64(3)) << (pos & np.uint64(7))
    h = clz64(w)
    n = h + h + U1
    x = w >> ((np.uint64(64) - n) & _M6)
    if not ((h <= np.uint64(27)) & (pos + n <= limit)):
        return U0, pos
    return x, pos + n


def _delta_fast(buf, pos, limit, low, width, thr):
    w = load_be64(buf, pos >> np.uint64(3)) << (pos & np.uint64(7))
    h = clz64(w)
    m = (h + h + U1) & _M6
    nb = ((w >> ((np.uint64(64) - m) & _M6)) - U1) & _M6
    x = (U1 << nb) | _hi(w << m, nb)
    n = m + nb
    if not ((h <= np.uint64(4)) & (pos + n <= limit)):
        return U0, pos
    return x, pos + n


def _zeta_fast(buf, pos, limit, low, width, thr):
    w = load_be64(buf, pos >> np.uint64(3)) << (pos & np.uint64(7))
    h = clz64(w)
    top = np.uint64(low.shape[0] - 1)
    hc = min(h, top)
    wd = width[hc]
    rest = w << (hc + U1)
    t = thr[hc]
    short = _hi(rest, (wd - U1) & _M6)
    wide = np.uint64(short >= t)
    mask = U0 - wide
    y = (short & ~mask) | ((_hi(rest, wd & _M6) - t) & mask)
    n = hc + wd + wide
    if not ((h <= top) & (wd != U0) & (hc + wd <= np.uint64(56)) & (pos + n <= limit)):
        return U0, pos
    return low[hc] + y, pos + n


_FAST = {0: _gamma_fast, 1: _delta_fast, 2: _zeta_fast}


def _decode_fast(buf, pos, limit, kind, low, width, thr):  # pragma: no cover - overloaded
    raise NotImplementedError


@overload(_decode_fast, jit_options={"nogil": True})
def _decode_fast_impl(buf, pos, limit, kind, low, width, thr):
    # one kernel per codec: a merged kind switch in the hot loop decodes
    # several times slower than any specialised loop
    if not isinstance(kind, types.IntegerLiteral):
        raise errors.TypingError("codec kind must be a compile-time literal")
    fast = register_jitable(_FAST[kind.literal_value])
    return lambda buf, pos, limit, kind, low, width, thr: fast(buf, pos, limit, low, width, thr)


@jit
def _decode_all(buf, offsets, nnzs, dim, kind, low, width, thr, out):
    """Decode every document into ``out``; returns -1 or the first bad document."""
    literally(kind)
    o = 0
    for d in range(nnzs.shape[0]):
        pos = offsets[d] * U8
        limit = offsets[d + 1] * U8
        cur = np.int64(-1)
        for _ in range(nnzs[d]):
            x, nxt = _decode_fast(buf, pos, limit, kind, low, width, thr)
            if x == U0:
                x, nxt = _decode_slow(buf, pos, limit, kind, low, width, thr)
                if x == U0:
                    return d
            pos = nxt
            cur += np.int64(x)
            if cur >= dim:
                return d
            out[o] = cur
            o += 1
        # padding must be zero and within one byte
        if limit - pos >= U8:
            return d
        while pos < limit:
            if (buf[pos >> np.uint64(3)] >> (np.uint64(7) - (pos & np.uint64(7)))) & U1:
                return d
            pos += U1
    return -1


@jit
def _scores_all(buf, offsets, nnzs, kind, low, width, thr, vals, lut, voffs, q, out):
    literally(kind)
    for d in range(nnzs.shape[0]):
        pos = offsets[d] * U8
        limit = offsets[d + 1] * U8
        vp = voffs[d]
        cur = U0
        acc = np.float32(0)
        for j in range(nnzs[d]):
            x, nxt = _decode_fast(buf, pos, limit, kind, low, width, thr)
            if x == U0:
                x, nxt = _decode_slow(buf, pos, limit, kind, low, width, thr)
            pos = nxt
            cur += x
            acc += load_value(vals, lut, vp) * q[cur - U1]
            vp += U1
        out[d] = acc


# Python-level entry points, one per codec kind. Calling a ``literally``
# kernel from Python goes through numba's literal-retry path on every call
# (several milliseconds); a jitted caller passing a constant does not.
@jit
def _decode_gamma(buf, offsets, nnzs, dim, low, width, thr, out):
    return _decode_all(buf, offsets, nnzs, dim, 0, low, width, thr, out)


@jit
def _decode_delta(buf, offsets, nnzs, dim, low, width, thr, out):
    return _decode_all(buf, offsets, nnzs, dim, 1, low, width, thr, out)


@jit
def _decode_zeta(buf, offsets, nnzs, dim, low, width, thr, out):
    return _decode_all(buf, offsets, nnzs, dim, 2, low, width, thr, out)


@jit
def _scores_gamma(buf, offsets, nnzs, low, width, thr, vals, lut, voffs, q, out):
    _scores_all(buf, offsets, nnzs, 0, low, width, thr, vals, lut, voffs, q, out)


@jit
def _scores_delta(buf, offsets, nnzs, low, width, thr, vals, lut, voffs, q, out):
    _scores_all(buf, offsets, nnzs, 1, low, width, thr, vals, lut, voffs, q, out)


@jit
def _scores_zeta(buf, offsets, nnzs, low, width, thr, vals, lut, voffs, q, out):
    _scores_all(buf, offsets, nnzs, 2, low, width, thr, vals, lut, voffs, q, out)


_DECODE_ENTRY = (_decode_gamma, _decode_delta, _decode_zeta)
_SCORES_ENTRY = (_scores_gamma, _scores_delta, _scores_zeta)


def encode_all(comps: np.ndarray, indptr: np.ndarray, codec: BitCodec):
    """Encode every document; returns (blob, byte offsets).

    ``comps`` holds each document's ascending components back to back.
    """
    kind, low, width, thr = _kernel_args(codec)
    comps = np.ascontiguousarray(comps, dtype=np.int64)
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    if comps.size and (comps.min() < 0 or comps.max() >= _MAX_COMPONENT):
        raise ValidationError("bulk bit coding needs components in [0, 2**40)")
    gaps = np.diff(comps, prepend=-1)
    nnzs = np.diff(indptr)
    gaps[indptr[:-1][nnzs > 0]] = comps[indptr[:-1][nnzs > 0]] + 1
    if gaps.size and gaps.min() < 1:
        raise ValidationError("components must be strictly increasing within each document")
    cap = (int(code_lengths(gaps, codec).sum()) + 8 * nnzs.size) // 8 + 8
    return _encode_all(comps, indptr, kind, np.int64(codec.k), low, width, thr, cap)


def decode_all(padded_blob, offsets, nnzs, dim: int, codec: BitCodec) -> np.ndarray:
    """Decode an index's component blob (padded by READ_PAD bytes) to flat IDs."""
    kind, low, width, thr = _kernel_args(codec)
    out = np.empty(int(np.sum(nnzs, dtype=np.int64)), dtype=np.int64)
    bad = _DECODE_ENTRY[kind](padded_blob, offsets, nnzs, np.int64(dim), low, width, thr, out)
    if bad >= 0:
        raise CorruptionError(f"{codec}: document {bad} does not decode to valid components")
    return out


def scores_all(padded_blob, offsets, nnzs, codec: BitCodec, vals, lut, voffs, q, out) -> None:
    kind, low, width, thr = _kernel_args(codec)
    _SCORES_ENTRY[kind](padded_blob, offsets, nnzs, low, width, thr, vals, lut, voffs, q, out)


def code_lengths(values, codec: BitCodec) -> np.ndarray:
    """Codeword length in bits of every (positive) value, vectorised."""
    x = np.asarray(values, dtype=np.int64)
    if x.size and x.min() < 1:
        raise ValidationError("bit codes encode integers >= 1")
    floor_log = np.zeros(x.shape, dtype=np.int64)
    if x.size:
        floor_log = np.frexp(x.astype(np.float64))[1].astype(np.int64) - 1
    if codec.kind == BitCodecKind.GAMMA:
        return 2 * floor_log + 1
    if codec.kind == BitCodecKind.DELTA:
        inner = np.frexp((floor_log + 1).astype(np.float64))[1].astype(np.int64) - 1
        return 2 * inner + 1 + floor_log
    low, width, thr = (t.astype(np.int64) for t in zeta_tables(codec.k))
    h = floor_log // codec.k
    short = (x - low[h]) < thr[h]
    return h + 1 + width[h] - short
