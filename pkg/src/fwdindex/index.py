"""Compressed forward index: codec-tagged component blob, values, and scans.

File layout (little-endian)::

    magic "DVF1" | version u16 | codec u8 | value format u8 | zeta_k u8 | frac_bits u8
    dim u32 | n u64
    offsets (n+1) x u64 | nnzs n x u32 | blob length u64 | blob
    value offsets (n+1) x u64 | value blob (value_offsets[n] bytes)

followed by a CRC32 trailer (see :mod:`fwdindex.formats`).
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from . import bitstream, bytecodecs, dotvbyte
from ._jit import jit, load_value
from .bisection import Permutation, apply_permutation
from .core import (
    SparseDataset,
    SparseVector,
    ValueFormat,
    ValueKind,
    check_dim,
    dequantize,
    from_gaps,
    quantize,
)
from .errors import BadMagicError, CorruptionError, FormatError, ValidationError, VersionMismatchError
from .formats import _read_file, _write_file, add_checksum, check_trailer

INDEX_MAGIC = b"DVF1"
INDEX_VERSION = 1
_HEADER = struct.Struct("<4sHBBBBIQ")

#: zero bytes kept after the component blob so kernels may read whole windows
READ_PAD = 16


class Codec(IntEnum):
    RAW = 0
    VBYTE = 1
    GAMMA = 2
    DELTA = 3
    ZETA = 4
    SVB = 5
    DOTVBYTE = 6

    @classmethod
    def parse(cls, name: "str | Codec") -> "Codec":
        if isinstance(name, Codec):
            return name
        try:
            return _CODEC_NAMES[name.lower()]
        except KeyError:
            raise ValidationError(f"unknown codec {name!r}; choose from {sorted(_CODEC_NAMES)}") from None

    @property
    def label(self) -> str:
        return {Codec.SVB: "svb", Codec.DOTVBYTE: "dotvbyte"}.get(self, self.name.lower())

    @property
    def is_bitcode(self) -> bool:
        return self in (Codec.GAMMA, Codec.DELTA, Codec.ZETA)


_CODEC_NAMES = {c.label: c for c in Codec} | {"streamvbyte": Codec.SVB, "uncompressed": Codec.RAW}


class DenseQuery:
    """A query expanded to a length-``dim`` float32 array."""

    __slots__ = ("buffer",)

    def __init__(self, buffer):
        self.buffer = np.ascontiguousarray(buffer, dtype=np.float32)

    @classmethod
    def from_sparse(cls, vec: SparseVector, dim: int, perm: Permutation | None = None) -> "DenseQuery":
        buf = np.zeros(dim, dtype=np.float32)
        comps = vec.components
        if comps.size and comps[-1] >= dim:
            raise ValidationError(f"query component {comps[-1]} >= dim {dim}")
        if perm is not None:
            if perm.dim != dim:
                raise ValidationError(f"permutation over {perm.dim} IDs, index dim {dim}")
            comps = perm.forward[comps]
        buf[comps] = vec.values
        return cls(buf)

    @property
    def dim(self) -> int:
        return self.buffer.shape[0]


# ---------------------------------------------------------------------------
# the index
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SizeBreakdown:
    control_bits: int
    data_bits: int
    tail_bits: int
    pad_bits: int

    @property
    def total_bits(self) -> int:
        return self.control_bits + self.data_bits + self.tail_bits + self.pad_bits


@dataclass(frozen=True, eq=False)
class CompressedForwardIndex:
    codec: Codec
    value_format: ValueFormat
    dim: int
    offsets: np.ndarray
    nnzs: np.ndarray
    blob: np.ndarray
    value_offsets: np.ndarray
    values_blob: np.ndarray
    zeta_k: int = 2
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "codec", Codec(self.codec))
        set_(self, "offsets", np.ascontiguousarray(self.offsets, dtype=np.uint64))
        set_(self, "nnzs", np.ascontiguousarray(self.nnzs, dtype=np.uint32))
        set_(self, "blob", np.ascontiguousarray(self.blob, dtype=np.uint8))
        set_(self, "value_offsets", np.ascontiguousarray(self.value_offsets, dtype=np.uint64))
        set_(self, "values_blob", np.ascontiguousarray(self.values_blob, dtype=np.uint8))
        n = self.nnzs.shape[0]
        if self.offsets.shape[0] != n + 1 or self.value_offsets.shape[0] != n + 1:
            raise FormatError("offset tables must have n+1 entries")
        if self.offsets[0] != 0 or np.any(np.diff(self.offsets.astype(np.int64)) < 0):
            raise FormatError("component offsets must start at 0 and be non-decreasing")
        if int(self.offsets[-1]) != self.blob.shape[0]:
            raise FormatError(f"offsets end at {int(self.offsets[-1])}, blob has {self.blob.shape[0]} bytes")
        expect = np.zeros(n + 1, dtype=np.uint64)
        np.cumsum(self.nnzs.astype(np.uint64) * np.uint64(self.value_format.itemsize), out=expect[1:])
        if not np.array_equal(expect, self.value_offsets) or int(expect[-1]) != self.values_blob.shape[0]:
            raise FormatError("value offsets do not match nnzs and the value format")
        if self.codec == Codec.RAW and not np.array_equal(
            self.offsets, 2 * np.concatenate([[0], np.cumsum(self.nnzs, dtype=np.uint64)])
        ):
            raise FormatError("raw offsets must be 2 bytes per component")
        if self.zeta_k < 1:
            raise FormatError(f"zeta_k must be >= 1, got {self.zeta_k}")

    # -- basic properties -------------------------------------------------

    def __len__(self) -> int:
        return self.nnzs.shape[0]

    @property
    def n(self) -> int:
        return len(self)

    @property
    def total_nnz(self) -> int:
        return int(self.nnzs.sum(dtype=np.int64))

    @property
    def component_bytes(self) -> int:
        return int(self.blob.shape[0])

    @property
    def bits_per_component(self) -> float:
        total = self.total_nnz
        return 8.0 * self.component_bytes / total if total else 0.0

    @property
    def bit_codec(self) -> bitstream.BitCodec:
        kind = {Codec.GAMMA: bitstream.BitCodecKind.GAMMA, Codec.DELTA: bitstream.BitCodecKind.DELTA,
                Codec.ZETA: bitstream.BitCodecKind.ZETA}[self.codec]
        return bitstream.BitCodec(kind, self.zeta_k)

    @property
    def codec_label(self) -> str:
        return f"zeta(k={self.zeta_k})" if self.codec == Codec.ZETA else self.codec.label

    def _cached(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    @property
    def padded_blob(self) -> np.ndarray:
        return self._cached("padded", lambda: np.concatenate([self.blob, np.zeros(READ_PAD, np.uint8)]))

    @property
    def values(self) -> np.ndarray:
        """Stored value codes as a typed flat array."""
        return self._cached("values", lambda: self.values_blob.view(self.value_format.dtype).copy())

    @property
    def value_starts(self) -> np.ndarray:
        return self._cached(
            "vstarts", lambda: self.value_offsets // np.uint64(self.value_format.itemsize)
        )

    # -- decoding -----------------------------------------------------------

    def decode_all(self, path: str = "vector") -> np.ndarray:
        """Flat component IDs of every document, via the bulk kernels."""
        c = self.codec
        if c == Codec.RAW:
            comps = self.blob.view("<u2").astype(np.int64)
            _check_flat(comps, self.nnzs, self.dim)
            return comps
        if c == Codec.VBYTE:
            return bytecodecs.vbyte_decode_all(self.blob, self.offsets, self.nnzs, self.dim)
        if c.is_bitcode:
            return bitstream.decode_all(self.padded_blob, self.offsets, self.nnzs, self.dim, self.bit_codec)
        if c == Codec.SVB:
            return bytecodecs.svb_decode_all(self.padded_blob, self.offsets, self.nnzs, self.dim, path=path)
        return dotvbyte.dvb_decode_all(self.padded_blob, self.offsets, self.nnzs, self.dim, path=path)

    def validate(self) -> None:
        """Decode everything once; raises CorruptionError on any bad document."""
        self.decode_all()
        if self.value_format.kind != ValueKind.FIXED_U8:
            vals = dequantize(self.values, self.value_format)
            if vals.size and (not np.all(np.isfinite(vals)) or vals.min() < 0):
                raise CorruptionError("stored values must be finite and non-negative")

    def payload(self, i: int) -> bytes:
        return self.blob[int(self.offsets[i]) : int(self.offsets[i + 1])].tobytes()

    def doc_values(self, i: int) -> np.ndarray:
        s = int(self.value_starts[i])
        return self.values[s : s + int(self.nnzs[i])]

    def doc_components(self, i: int, path: str = "vector") -> np.ndarray:
        """Component IDs of document ``i`` through the per-document codec API."""
        buf, nnz, c = self.payload(i), int(self.nnzs[i]), self.codec
        if c == Codec.RAW:
            comps = np.frombuffer(buf, dtype="<u2").astype(np.int64)
            _check_flat(comps, np.array([nnz]), self.dim)
            return comps
        if c == Codec.VBYTE:
            gaps = bytecodecs.vbyte_decode_doc(buf, nnz)
        elif c.is_bitcode:
            gaps = bitstream.bitcodec_decode_doc(bitstream.BitBuffer(buf, 8 * len(buf)), nnz, self.bit_codec)
        elif c == Codec.SVB:
            nc = -(-nnz // 4)
            gaps = bytecodecs.svb_decode_doc(
                bytecodecs.StreamVByteBlock(buf[:nc], buf[nc:]), nnz, path=path
            )
        else:
            return dotvbyte.dvb_decode_doc(dotvbyte.DotVByteDoc.from_bytes(buf, nnz), path=path, dim=self.dim)
        return from_gaps(gaps, self.dim)

    def decode_doc(self, i: int) -> SparseVector:
        return SparseVector(self.doc_components(i), dequantize(self.doc_values(i), self.value_format))

    def to_dataset(self) -> SparseDataset:
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(self.nnzs, out=indptr[1:])
        return SparseDataset(self.dim, indptr, self.decode_all(),
                             dequantize(self.values, self.value_format).reshape(-1), validate=False)

    # -- scoring ------------------------------------------------------------

    def scores(self, q: DenseQuery, path: str = "vector", out: np.ndarray | None = None) -> np.ndarray:
        """Inner product of ``q`` with every document (float32)."""
        qb = q.buffer if isinstance(q, DenseQuery) else np.ascontiguousarray(q, dtype=np.float32)
        if qb.shape[0] != self.dim:
            raise ValidationError(f"query has dim {qb.shape[0]}, index has {self.dim}")
        if out is None:
            out = np.empty(self.n, dtype=np.float32)
        vals, lut, vstarts = self.values, self.value_format.lookup_table(), self.value_starts
        c = self.codec
        if c == Codec.RAW:
            comps = self._cached("raw", lambda: self.blob.view("<u2").copy())
            ip = self._cached("raw_ip", lambda: self.offsets // np.uint64(2))
            _raw_scores(comps, ip, vals, lut, qb, out)
        elif c == Codec.VBYTE:
            bytecodecs.vbyte_scores_all(self.blob, self.offsets, self.nnzs, vals, lut, vstarts, qb, out)
        elif c.is_bitcode:
            bitstream.scores_all(self.padded_blob, self.offsets, self.nnzs, self.bit_codec,
                                 vals, lut, vstarts, qb, out)
        elif c == Codec.SVB:
            bytecodecs.svb_scores_all(self.padded_blob, self.offsets, self.nnzs, vals, lut, vstarts, qb, out)
        else:
            dotvbyte.dvb_scores_all(self.padded_blob, self.offsets, self.nnzs, vals, lut, vstarts, qb, out,
                                    path=path)
        return out

    def dot(self, i: int, q: DenseQuery, path: str = "vector") -> float:
        """Inner product with document ``i`` through the per-document kernels."""
        qb = q.buffer if isinstance(q, DenseQuery) else np.asarray(q, dtype=np.float32)
        nnz = int(self.nnzs[i])
        if self.codec == Codec.DOTVBYTE:
            doc = dotvbyte.DotVByteDoc.from_bytes(self.payload(i), nnz)
            return dotvbyte.dvb_dot(doc, self.doc_values(i), self.value_format, qb, path=path)
        if self.codec == Codec.SVB:
            buf = self.payload(i)
            nc = -(-nnz // 4)
            block = bytecodecs.StreamVByteBlock(buf[:nc], buf[nc:])
            return bytecodecs.svb_dot_buffered(block, nnz, self.doc_values(i), self.value_format, qb)
        comps = self.doc_components(i)
        acc = np.float32(0)
        for v, w in zip(dequantize(self.doc_values(i), self.value_format).reshape(-1), qb[comps]):
            acc = np.float32(acc + np.float32(v * w))
        return float(acc)

    # -- accounting ---------------------------------------------------------

    def size_breakdown(self) -> SizeBreakdown:
        nnzs = self.nnzs.astype(np.int64)
        total_bits = 8 * self.component_bytes
        c = self.codec
        if c == Codec.RAW:
            return SizeBreakdown(0, total_bits, 0, 0)
        if c == Codec.VBYTE:
            return SizeBreakdown(self.component_bytes, 7 * self.component_bytes, 0, 0)
        if c == Codec.SVB:
            ctrl = 8 * int((-(-nnzs // 4)).sum())
            return SizeBreakdown(ctrl, total_bits - ctrl, 0, 0)
        if c == Codec.DOTVBYTE:
            ctrl = 8 * int((nnzs // 8).sum())
            tail = 16 * int((nnzs % 8).sum())
            return SizeBreakdown(ctrl, total_bits - ctrl - tail, tail, 0)
        comps = self.decode_all()
        gaps = _gaps_of_flat(comps, nnzs)
        starts = np.concatenate([[0], np.cumsum(nnzs)[:-1]])[nnzs > 0]
        gaps[starts] += 1
        data = int(bitstream.code_lengths(gaps, self.bit_codec).sum())
        return SizeBreakdown(0, data, 0, total_bits - data)

    # -- serialisation ------------------------------------------------------

    def to_bytes(self, *, checksum: bool = True) -> bytes:
        fmt = self.value_format
        head = _HEADER.pack(INDEX_MAGIC, INDEX_VERSION, int(self.codec), int(fmt.kind), self.zeta_k,
                            fmt.frac_bits, self.dim, self.n)
        parts = [
            head,
            self.offsets.astype("<u8").tobytes(),
            self.nnzs.astype("<u4").tobytes(),
            struct.pack("<Q", self.component_bytes),
            self.blob.tobytes(),
            self.value_offsets.astype("<u8").tobytes(),
            self.values_blob.tobytes(),
        ]
        payload = b"".join(parts)
        return add_checksum(payload) if checksum else payload

    @classmethod
    def from_bytes(cls, buf: bytes, *, validate: bool = True) -> "CompressedForwardIndex":
        if len(buf) < _HEADER.size:
            raise FormatError("index: file shorter than header")
        magic, version, codec, vkind, zeta_k, frac_bits, dim, n = _HEADER.unpack_from(buf, 0)
        if magic != INDEX_MAGIC:
            raise BadMagicError(f"index: bad magic {magic!r}, expected {INDEX_MAGIC!r}")
        if version != INDEX_VERSION:
            raise VersionMismatchError(f"index: format version {version}, reader supports {INDEX_VERSION}")
        try:
            codec = Codec(codec)
            fmt = ValueFormat(ValueKind(vkind), frac_bits)
        except ValueError as exc:
            raise FormatError(f"index: {exc}") from None
        pos = _HEADER.size

        def take(count, dtype):
            nonlocal pos
            size = count * np.dtype(dtype).itemsize
            if count < 0 or pos + size > len(buf):
                raise FormatError("index: truncated")
            arr = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
            pos += size
            return arr

        if n > len(buf):
            raise FormatError(f"index: document count {n} exceeds file size")
        offsets = take(n + 1, "<u8")
        nnzs = take(n, "<u4")
        (blob_len,) = take(1, "<u8")
        blob = take(int(blob_len), "u1")
        value_offsets = take(n + 1, "<u8")
        values_blob = take(int(value_offsets[-1]), "u1")
        check_trailer(buf, pos, "index")
        idx = cls(codec, fmt, dim, offsets, nnzs, blob, value_offsets, values_blob, zeta_k)
        if validate:
            idx.validate()
        return idx

    def save(self, path) -> None:
        _write_file(path, self.to_bytes())

    @classmethod
    def load(cls, path, *, validate: bool = True) -> "CompressedForwardIndex":
        return cls.from_bytes(_read_file(path), validate=validate)


def _gaps_of_flat(comps: np.ndarray, nnzs: np.ndarray) -> np.ndarray:
    gaps = np.diff(comps, prepend=0)
    starts = np.concatenate([[0], np.cumsum(nnzs)[:-1]])[nnzs > 0]
    gaps[starts] = comps[starts]
    return gaps


def _check_flat(comps: np.ndarray, nnzs: np.ndarray, dim: int) -> None:
    if comps.size == 0:
        return
    if comps.max() >= dim:
        raise CorruptionError(f"component {comps.max()} >= dim {dim}")
    gaps = _gaps_of_flat(comps, nnzs.astype(np.int64))
    firsts = np.zeros(comps.size, dtype=bool)
    firsts[np.concatenate([[0], np.cumsum(nnzs.astype(np.int64))[:-1]])[nnzs > 0]] = True
    if np.any(gaps[~firsts] <= 0):
        raise CorruptionError("components not strictly increasing")


@jit
def _raw_scores(comps, indptr, vals, lut, q, out):
    for d in range(indptr.shape[0] - 1):
        acc = np.float32(0)
        for j in range(indptr[d], indptr[d + 1]):
            acc += load_value(vals, lut, j) * q[comps[j]]
        out[d] = acc


# ---------------------------------------------------------------------------
# building and scanning
# ---------------------------------------------------------------------------


def build_index(ds: SparseDataset, codec="dotvbyte", fmt: ValueFormat | None = None,
                perm: Permutation | None = None, *, zeta_k: int = 2) -> CompressedForwardIndex:
    """Encode ``ds`` (optionally renamed through ``perm``) with ``codec``."""
    codec = Codec.parse(codec)
    fmt = fmt or ValueFormat.f32()
    check_dim(ds.dim)
    if perm is not None:
        ds = apply_permutation(ds, perm)
    comps, indptr = ds.components, ds.indptr
    if codec == Codec.RAW:
        blob = comps.astype("<u2").view(np.uint8)
        offsets = (2 * indptr).astype(np.uint64)
    elif codec == Codec.VBYTE:
        blob, offsets = bytecodecs.vbyte_encode_all(comps, indptr)
    elif codec.is_bitcode:
        kind = bitstream.BitCodecKind[codec.name]
        blob, offsets = bitstream.encode_all(comps, indptr, bitstream.BitCodec(kind, zeta_k))
    elif codec == Codec.SVB:
        blob, offsets = bytecodecs.svb_encode_all(comps, indptr)
    else:
        blob, offsets = dotvbyte.dvb_encode_all(comps, indptr)
    codes = np.asarray(quantize(ds.values, fmt)).astype(fmt.dtype, copy=False).reshape(-1)
    value_offsets = (indptr * fmt.itemsize).astype(np.uint64)
    return CompressedForwardIndex(codec, fmt, ds.dim, offsets, ds.nnzs, blob, value_offsets,
                                  codes.view(np.uint8), zeta_k)


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` best scores, by score descending then index ascending."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    n = scores.shape[0]
    k = min(k, n)
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    if k < n:
        kth = np.partition(scores, n - k)[n - k]
        cand = np.flatnonzero(scores >= kth)
    else:
        cand = np.arange(n)
    order = np.lexsort((cand, -scores[cand].astype(np.float64)))
    return cand[order[:k]]


class TopK(NamedTuple):
    ids: np.ndarray
    scores: np.ndarray
    elapsed: float

    def pairs(self) -> list[tuple[int, float]]:
        return [(int(i), float(s)) for i, s in zip(self.ids, self.scores)]


def full_scan_topk(index: CompressedForwardIndex, q: DenseQuery, k: int = 10, *,
                   path: str = "vector") -> TopK:
    """Score every document and return the best ``k`` with the wall time spent."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    t0 = time.perf_counter()
    scores = index.scores(q, path=path)
    ids = top_k(scores, k)
    elapsed = time.perf_counter() - t0
    return TopK(ids, scores[ids], elapsed)
