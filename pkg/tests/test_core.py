import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import ascending_ids, sparse_vectors
from fwdindex import (
    SparseDataset,
    SparseVector,
    ValueFormat,
    ValueKind,
    build_uncompressed,
    dequantize,
    from_gaps,
    quantize,
    to_gaps,
)
from fwdindex.core import choose_frac_bits
from fwdindex.errors import (
    ComponentRangeError,
    CorruptionError,
    NonAscendingError,
    QuantizationError,
    UnsupportedDimensionError,
    ValidationError,
)


# -- gaps -------------------------------------------------------------------


def test_gaps_known_values():
    assert to_gaps([3, 7, 10]).tolist() == [3, 4, 3]
    assert to_gaps([0]).tolist() == [0]
    assert from_gaps([3, 4, 3]).tolist() == [3, 7, 10]
    assert from_gaps([0]).tolist() == [0]


def test_gaps_of_consecutive_run():
    ids = np.arange(119)
    g = to_gaps(ids)
    assert g[0] == 0 and np.all(g[1:] == 1)
    assert np.array_equal(from_gaps(g), ids)


def test_gaps_random_387():
    rng = np.random.default_rng(0)
    ids = np.sort(rng.choice(30522, 387, replace=False))
    assert np.array_equal(from_gaps(to_gaps(ids)), ids)


def test_to_gaps_rejects_repeats_and_names_index():
    with pytest.raises(NonAscendingError, match="index 2"):
        to_gaps([1, 4, 4, 9])
    with pytest.raises(NonAscendingError):
        to_gaps([5, 3])
    with pytest.raises(ComponentRangeError):
        to_gaps([-1, 3])


def test_from_gaps_checks_dim():
    with pytest.raises(CorruptionError):
        from_gaps([5, 5], dim=10)
    assert from_gaps([5, 4], dim=10).tolist() == [5, 9]
    with pytest.raises(CorruptionError):
        from_gaps([1, 0])


@given(ascending_ids())
def test_gap_round_trip(ids):
    g = to_gaps(ids)
    if ids.size:
        assert g[0] >= 0 and (g[1:] >= 1).all()
    assert np.array_equal(from_gaps(g, 1 << 16), ids)


# -- value formats ----------------------------------------------------------


@pytest.mark.parametrize("fmt", [ValueFormat.f32(), ValueFormat.f16(), ValueFormat.fixed_u8(4)])
def test_zero_is_preserved(fmt):
    code = quantize(0.0, fmt)
    assert float(code) == 0
    assert float(dequantize(code, fmt)) == 0.0


def test_fixed_point_known_value():
    fmt = ValueFormat.fixed_u8(4)
    assert int(quantize(1.5, fmt)) == 24
    assert float(dequantize(24, fmt)) == 1.5


def test_f16_one_is_exact():
    fmt = ValueFormat.f16()
    assert float(dequantize(quantize(1.0, fmt), fmt)) == 1.0
    assert int(quantize(1.0, fmt)) == 0x3C00


def test_f32_lossless():
    v = np.array([0.1, 3.3, 1e-30, 7e20], dtype=np.float32)
    fmt = ValueFormat.f32()
    assert np.array_equal(dequantize(quantize(v, fmt), fmt), v)


def test_fixed_point_overflow_reports_value_and_frac_bits():
    with pytest.raises(QuantizationError, match=r"9\.0.*frac_bits=5.*frac_bits <= 4"):
        quantize(np.array([1.0, 9.0]), ValueFormat.fixed_u8(5))
    with pytest.raises(QuantizationError):
        choose_frac_bits(300.0)


def test_choose_frac_bits():
    assert choose_frac_bits(0.0) == 8
    assert choose_frac_bits(0.99) == 8
    assert choose_frac_bits(1.5) == 7
    assert choose_frac_bits(15.9) == 4
    assert choose_frac_bits(255.0) == 0
    assert ValueFormat.fit(ValueKind.FIXED_U8, [0.5, 2.0]).frac_bits == 6


def test_negative_and_nan_values_rejected():
    with pytest.raises(ValidationError):
        quantize(-1.0, ValueFormat.f16())
    with pytest.raises(ValidationError):
        quantize(np.nan, ValueFormat.f32())
    with pytest.raises(QuantizationError):
        quantize(1e6, ValueFormat.f16())


@given(st.lists(st.floats(0, 200, allow_nan=False), min_size=1, max_size=50))
def test_fixed_point_error_within_half_step(vals):
    v = np.array(vals)
    fmt = ValueFormat.fit(ValueKind.FIXED_U8, v)
    err = np.abs(dequantize(quantize(v, fmt), fmt).astype(np.float64) - v)
    assert np.all(err <= 2.0 ** (-fmt.frac_bits - 1) + 1e-6 * v)
    assert np.all(err <= fmt.error_bound(v) + 1e-6 * v)


@given(st.lists(st.floats(0, 60000, allow_nan=False), min_size=1, max_size=50))
def test_f16_error_within_bound(vals):
    v = np.array(vals)
    fmt = ValueFormat.f16()
    err = np.abs(dequantize(quantize(v, fmt), fmt).astype(np.float64) - v)
    assert np.all(err <= fmt.error_bound(v))


def test_value_format_validation():
    with pytest.raises(ValidationError):
        ValueFormat.fixed_u8(9)
    assert ValueFormat(ValueKind.F16, 3).frac_bits == 0
    assert str(ValueFormat.fixed_u8(3)) == "fixedu8(frac_bits=3)"


# -- vectors and datasets ---------------------------------------------------


def test_sparse_vector_invariants():
    with pytest.raises(ValidationError, match="length mismatch"):
        SparseVector([1, 2], [1.0])
    with pytest.raises(NonAscendingError):
        SparseVector([2, 2], [1.0, 1.0])
    with pytest.raises(ValidationError):
        SparseVector([1], [np.inf])
    with pytest.raises(ValidationError):
        SparseVector([1], [-0.5])
    with pytest.raises(ValidationError):
        SparseVector([1.5], [1.0])


def test_dataset_validation_names_document():
    with pytest.raises(ComponentRangeError, match="document 1"):
        SparseDataset(10, [0, 1, 2], [3, 10], [1.0, 1.0])
    with pytest.raises(NonAscendingError, match="document 0"):
        SparseDataset(10, [0, 2], [3, 3], [1.0, 1.0])
    with pytest.raises(ValidationError):
        SparseDataset(10, [0, 3], [1, 2], [1.0, 1.0])
    with pytest.raises(ValidationError):
        SparseDataset(0, [0], [], [])
    # a document may start below the previous one's last component
    ds = SparseDataset(10, [0, 2, 4], [5, 9, 1, 2], [1, 1, 1, 1])
    assert ds[1].components.tolist() == [1, 2]


def test_dataset_access():
    ds = SparseDataset.from_vectors(20, [SparseVector([1, 4], [1, 2]), SparseVector([], []),
                                         SparseVector([19], [0.5])])
    assert len(ds) == 3 and ds.total_nnz == 3
    assert ds.nnzs.tolist() == [2, 0, 1]
    assert ds[-1] == SparseVector([19], [0.5])
    with pytest.raises(IndexError):
        ds[3]
    assert ds.subset([2, 0]) == SparseDataset.from_vectors(20, [ds[2], ds[0]])
    assert len(SparseDataset.empty(5)) == 0


def test_sparse_vector_dot():
    a = SparseVector([2, 5, 9], [1.0, 2.0, 4.0])
    b = SparseVector([2, 5], [3.0, 0.5])
    assert a.dot(b) == 4.0


# -- uncompressed index -----------------------------------------------------


def test_uncompressed_empty():
    fi = build_uncompressed(SparseDataset.empty(30522))
    assert fi.offsets.tolist() == [0]
    assert fi.components.size == 0 and fi.values.size == 0
    assert len(fi) == 0


@given(st.lists(sparse_vectors(dim=30522), min_size=1, max_size=8))
def test_uncompressed_is_16_bits_and_exact(docs):
    ds = SparseDataset.from_vectors(30522, docs)
    fi = build_uncompressed(ds)
    assert fi.component_bits == 16 * ds.total_nnz
    if ds.total_nnz:
        assert fi.bits_per_component == 16.0
    assert fi.components.dtype == np.uint16
    for i, d in enumerate(docs):
        assert fi.doc(i) == d


def test_uncompressed_dimension_cap():
    build_uncompressed(SparseDataset.empty(1 << 16))
    with pytest.raises(UnsupportedDimensionError):
        build_uncompressed(SparseDataset.empty((1 << 16) + 1))
