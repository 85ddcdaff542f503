"""Binary file formats for datasets and permutations, plus a JSONL converter.

All integers are little-endian. Every writer appends a CRC32 of the
preceding bytes as a 4-byte trailer; readers verify it when present and also
accept trailer-less files laid out exactly as described below.

Dataset (``SPF1``)::

    magic "SPF1" | version u16 = 1 | dim u32 | count u64
    per document: nnz u32 | nnz x u32 components | nnz x f32 values

Permutation (``PRM1``)::

    magic "PRM1" | d u32 | d x u32 forward mapping (old ID -> new ID)
"""

from __future__ import annotations

import json
import os
import struct
import zlib

import numpy as np

from .core import SparseDataset
from .errors import BadMagicError, ChecksumError, FormatError, VersionMismatchError

DATASET_MAGIC = b"SPF1"
DATASET_VERSION = 1
PERM_MAGIC = b"PRM1"

_DS_HEADER = struct.Struct("<4sHIQ")


def add_checksum(payload: bytes) -> bytes:
    return payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def check_trailer(buf: bytes, end: int, what: str) -> None:
    """Accept ``buf`` if it ends at ``end`` or carries a valid CRC32 right after."""
    extra = len(buf) - end
    if extra == 0:
        return
    if extra != 4:
        raise FormatError(f"{what}: {extra} unexpected trailing bytes")
    (stored,) = struct.unpack_from("<I", buf, end)
    if stored != zlib.crc32(buf[:end]) & 0xFFFFFFFF:
        raise ChecksumError(f"{what}: checksum mismatch")


def _read_file(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _write_file(path, data: bytes) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


def dataset_to_bytes(ds: SparseDataset, *, checksum: bool = True) -> bytes:
    n = len(ds)
    nnzs = ds.nnzs
    # word layout: doc i starts at i + 2*indptr[i]; nnz, components, then values
    words = np.empty(n + 2 * ds.total_nnz, dtype="<u4")
    starts = np.arange(n, dtype=np.int64) + 2 * ds.indptr[:-1]
    words[starts] = nnzs
    doc_of = np.repeat(np.arange(n), nnzs)
    rank = np.arange(ds.total_nnz) - ds.indptr[:-1][doc_of]
    comp_pos = starts[doc_of] + 1 + rank
    words[comp_pos] = ds.components
    words[comp_pos + nnzs[doc_of]] = ds.values.astype("<f4").view("<u4")
    payload = _DS_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, ds.dim, n) + words.tobytes()
    return add_checksum(payload) if checksum else payload


def dataset_from_bytes(buf: bytes, *, validate: bool = True) -> SparseDataset:
    if len(buf) < _DS_HEADER.size:
        raise FormatError("dataset: file shorter than header")
    magic, version, dim, n = _DS_HEADER.unpack_from(buf, 0)
    if magic != DATASET_MAGIC:
        raise BadMagicError(f"dataset: bad magic {magic!r}, expected {DATASET_MAGIC!r}")
    if version != DATASET_VERSION:
        raise VersionMismatchError(
            f"dataset: format version {version}, this reader supports {DATASET_VERSION}"
        )
    body = len(buf) - _DS_HEADER.size
    if n > body // 4:
        raise FormatError(f"dataset: count {n} cannot fit in {body} bytes")
    nwords = body // 4
    words = np.frombuffer(buf, dtype="<u4", count=nwords, offset=_DS_HEADER.size)
    nnzs = np.empty(n, dtype=np.int64)
    pos = 0
    for i in range(n):
        if pos >= nwords:
            raise FormatError(f"dataset: truncated before document {i}")
        k = int(words[pos])
        if pos + 1 + 2 * k > nwords:
            raise FormatError(f"dataset: document {i} (nnz={k}) runs past end of file")
        nnzs[i] = k
        pos += 1 + 2 * k
    check_trailer(buf, _DS_HEADER.size + 4 * pos, "dataset")

    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(nnzs, out=indptr[1:])
    total = int(indptr[-1])
    starts = np.arange(n, dtype=np.int64) + 2 * indptr[:-1]
    doc_of = np.repeat(np.arange(n), nnzs)
    rank = np.arange(total) - indptr[:-1][doc_of]
    comp_pos = starts[doc_of] + 1 + rank
    comps = words[comp_pos].astype(np.int64)
    vals = words[comp_pos + nnzs[doc_of]].view("<f4").astype(np.float32)
    return SparseDataset(dim, indptr, comps, vals, validate=validate)


def save_dataset(ds: SparseDataset, path, *, checksum: bool = True) -> None:
    _write_file(path, dataset_to_bytes(ds, checksum=checksum))


def load_dataset(path, *, validate: bool = True) -> SparseDataset:
    return dataset_from_bytes(_read_file(path), validate=validate)


def read_jsonl(path, dim: int) -> SparseDataset:
    """Read one JSON object per line with ``coords`` and ``values`` arrays.

    Pairs are sorted by coordinate; duplicates are rejected by validation.
    """
    indptr = [0]
    comps: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                c = np.asarray(obj["coords"], dtype=np.int64)
                v = np.asarray(obj["values"], dtype=np.float32)
            except (KeyError, ValueError, TypeError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if c.shape != v.shape:
                raise FormatError(f"{path}:{lineno}: coords/values length mismatch")
            order = np.argsort(c, kind="stable")
            comps.append(c[order])
            vals.append(v[order])
            indptr.append(indptr[-1] + c.size)
    if comps:
        return SparseDataset(dim, indptr, np.concatenate(comps), np.concatenate(vals))
    return SparseDataset.empty(dim)


def convert_jsonl(src, dst, dim: int) -> SparseDataset:
    ds = read_jsonl(src, dim)
    save_dataset(ds, dst)
    return ds


# ---------------------------------------------------------------------------
# permutations
# ---------------------------------------------------------------------------


def permutation_to_bytes(forward: np.ndarray, *, checksum: bool = True) -> bytes:
    fwd = np.asarray(forward, dtype="<u4")
    payload = PERM_MAGIC + struct.pack("<I", fwd.shape[0]) + fwd.tobytes()
    return add_checksum(payload) if checksum else payload


def permutation_from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < 8:
        raise FormatError("permutation: file shorter than header")
    if buf[:4] != PERM_MAGIC:
        raise BadMagicError(f"permutation: bad magic {buf[:4]!r}, expected {PERM_MAGIC!r}")
    (d,) = struct.unpack_from("<I", buf, 4)
    end = 8 + 4 * d
    if len(buf) < end:
        raise FormatError(f"permutation: truncated, need {end} bytes, have {len(buf)}")
    check_trailer(buf, end, "permutation")
    return np.frombuffer(buf, dtype="<u4", count=d, offset=8).astype(np.int64)
