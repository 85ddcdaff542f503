import json
import struct

import numpy as np
import pytest
from hypothesis import given

from conftest import datasets
from fwdindex import Permutation, SparseDataset, SparseVector, load_dataset, save_dataset, synth
from fwdindex.errors import (
    BadMagicError,
    ChecksumError,
    ComponentRangeError,
    FormatError,
    NonAscendingError,
    VersionMismatchError,
)
from fwdindex.formats import (
    add_checksum,
    convert_jsonl,
    dataset_from_bytes,
    dataset_to_bytes,
    permutation_from_bytes,
    permutation_to_bytes,
)


def _raw(dim, docs):
    """Hand-built dataset bytes without a checksum trailer."""
    out = b"SPF1" + struct.pack("<HIQ", 1, dim, len(docs))
    for comps, vals in docs:
        out += struct.pack("<I", len(comps))
        out += struct.pack(f"<{len(comps)}I", *comps)
        out += struct.pack(f"<{len(vals)}f", *vals)
    return out


def test_layout_matches_hand_encoding():
    ds = SparseDataset.from_vectors(30522, [SparseVector([5], [2.5])])
    assert dataset_to_bytes(ds, checksum=False) == _raw(30522, [([5], [2.5])])
    buf = dataset_to_bytes(ds)
    assert buf == add_checksum(_raw(30522, [([5], [2.5])]))


def test_empty_round_trip(tmp_path):
    ds = SparseDataset.empty(30522)
    save_dataset(ds, tmp_path / "e.spf")
    back = load_dataset(tmp_path / "e.spf")
    assert back == ds and back.dim == 30522


def test_one_doc_bit_exact(tmp_path):
    ds = SparseDataset.from_vectors(30522, [SparseVector([5], [2.5])])
    save_dataset(ds, tmp_path / "one.spf")
    back = load_dataset(tmp_path / "one.spf")
    assert back == ds
    assert back.values.view(np.uint32)[0] == np.float32(2.5).view(np.uint32)


def test_synthetic_10k_bytes_identical(tmp_path):
    ds = synth.generate(synth.preset("splade-like", docs=10_000))
    p = tmp_path / "d.spf"
    save_dataset(ds, p)
    first = p.read_bytes()
    again = dataset_to_bytes(load_dataset(p))
    assert again == first


def test_trailerless_files_accepted():
    raw = _raw(10, [([1, 3], [1.0, 2.0]), ([], [])])
    ds = dataset_from_bytes(raw)
    assert ds.nnzs.tolist() == [2, 0]


@given(datasets())
def test_round_trip_property(ds):
    buf = dataset_to_bytes(ds)
    back = dataset_from_bytes(buf)
    assert back == ds
    assert dataset_to_bytes(back) == buf


def test_distinct_errors():
    good = _raw(10, [([1, 3], [1.0, 2.0])])
    with pytest.raises(BadMagicError):
        dataset_from_bytes(b"XXXX" + good[4:])
    with pytest.raises(VersionMismatchError):
        dataset_from_bytes(good[:4] + struct.pack("<H", 2) + good[6:])
    with pytest.raises(NonAscendingError):
        dataset_from_bytes(_raw(10, [([3, 1], [1.0, 2.0])]))
    with pytest.raises(ComponentRangeError):
        dataset_from_bytes(_raw(10, [([1, 10], [1.0, 2.0])]))
    with pytest.raises(FormatError):
        dataset_from_bytes(good[:-3])
    with pytest.raises(FormatError):
        dataset_from_bytes(good[:10])
    with pytest.raises(ChecksumError):
        buf = bytearray(add_checksum(good))
        buf[-1] ^= 0x55
        dataset_from_bytes(bytes(buf))


def test_every_single_byte_flip_is_rejected():
    ds = SparseDataset.from_vectors(50, [SparseVector([1, 7, 30], [0.5, 1.0, 2.0]), SparseVector([4], [3.0])])
    buf = dataset_to_bytes(ds)
    for i in range(len(buf)):
        bad = bytearray(buf)
        bad[i] ^= 0x01
        with pytest.raises(FormatError):
            dataset_from_bytes(bytes(bad))


def test_permutation_bytes():
    fwd = np.array([2, 0, 1])
    buf = permutation_to_bytes(fwd)
    assert buf[:8] == b"PRM1" + struct.pack("<I", 3)
    assert permutation_from_bytes(buf).tolist() == [2, 0, 1]
    with pytest.raises(BadMagicError):
        permutation_from_bytes(b"NOPE" + buf[4:])
    with pytest.raises(FormatError):
        permutation_from_bytes(buf[:10])
    bad = bytearray(buf)
    bad[9] ^= 1
    with pytest.raises(ChecksumError):
        permutation_from_bytes(bytes(bad))


def test_permutation_file_round_trip(tmp_path):
    p = Permutation(np.random.default_rng(1).permutation(1000))
    p.save(tmp_path / "p.prm")
    assert Permutation.load(tmp_path / "p.prm") == p
    assert (tmp_path / "p.prm").read_bytes() == permutation_to_bytes(p.forward)


def test_jsonl_conversion(tmp_path):
    src = tmp_path / "v.jsonl"
    src.write_text("\n".join([json.dumps({"coords": [9, 2], "values": [1.0, 0.5]}), "",
                              json.dumps({"coords": [], "values": []})]) + "\n")
    ds = convert_jsonl(src, tmp_path / "v.spf", 10)
    assert ds[0] == SparseVector([2, 9], [0.5, 1.0])
    assert load_dataset(tmp_path / "v.spf") == ds
    src.write_text('{"coords": [1, 1], "values": [1, 1]}\n')
    with pytest.raises(NonAscendingError):
        convert_jsonl(src, tmp_path / "x.spf", 10)
    src.write_text('{"coords": [1]}\n')
    with pytest.raises(FormatError, match=":1:"):
        convert_jsonl(src, tmp_path / "x.spf", 10)
