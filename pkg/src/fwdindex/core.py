"""Sparse vectors, the uncompressed forward index, gaps and value formats."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    ComponentRangeError,
    CorruptionError,
    NonAscendingError,
    QuantizationError,
    UnsupportedDimensionError,
    ValidationError,
)

#: Components are stored as 16-bit integers, so no ID may reach 2**16.
MAX_DIM = 1 << 16

_F16_MAX = float(np.finfo(np.float16).max)


# ---------------------------------------------------------------------------
# sparse vectors and datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SparseVector:
    """Nonzero coordinates of one vector: ascending component IDs and values."""

    components: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components)
        v = np.asarray(self.values, dtype=np.float32)
        if c.ndim != 1 or v.ndim != 1:
            raise ValidationError("components and values must be 1-d")
        if c.shape != v.shape:
            raise ValidationError(
                f"length mismatch: {c.shape[0]} components vs {v.shape[0]} values"
            )
        if c.size and not np.issubdtype(c.dtype, np.integer):
            raise ValidationError(f"components must be integers, got {c.dtype}")
        c = c.astype(np.int64, copy=False)
        if c.size and c[0] < 0:
            raise ComponentRangeError(f"negative component {c[0]}")
        bad = np.flatnonzero(np.diff(c) <= 0)
        if bad.size:
            i = int(bad[0]) + 1
            raise NonAscendingError(
                f"components not strictly increasing at index {i}: {c[i - 1]} then {c[i]}"
            )
        _check_values(v)
        object.__setattr__(self, "components", c)
        object.__setattr__(self, "values", v)

    @property
    def nnz(self) -> int:
        return int(self.components.shape[0])

    def __len__(self) -> int:
        return self.nnz

    def __eq__(self, other):
        if not isinstance(other, SparseVector):
            return NotImplemented
        return np.array_equal(self.components, other.components) and np.array_equal(
            self.values, other.values
        )

    def __repr__(self):
        return f"SparseVector(nnz={self.nnz})"

    def dot(self, other: "SparseVector") -> float:
        """Exact inner product in float64."""
        common, ia, ib = np.intersect1d(
            self.components, other.components, assume_unique=True, return_indices=True
        )
        return float(
            np.dot(self.values[ia].astype(np.float64), other.values[ib].astype(np.float64))
        )


def _check_values(v: np.ndarray) -> None:
    if v.size == 0:
        return
    if not np.all(np.isfinite(v)):
        i = int(np.flatnonzero(~np.isfinite(v))[0])
        raise ValidationError(f"non-finite value at index {i}")
    if np.any(v < 0):
        i = int(np.flatnonzero(v < 0)[0])
        raise ValidationError(f"negative value {v[i]} at index {i}")


class SparseDataset:
    """An ordered collection of sparse vectors over a fixed dimension.

    Storage is CSR-like: ``indptr`` (n+1), ``components`` and ``values``. The
    document ID of a vector is its position.
    """

    def __init__(self, dim, indptr, components, values, *, validate=True):
        self.dim = int(dim)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.components = np.ascontiguousarray(components, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float32)
        if validate:
            self.validate()

    @classmethod
    def from_vectors(cls, dim: int, vectors: Iterable[SparseVector]) -> "SparseDataset":
        vectors = list(vectors)
        indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([v.nnz for v in vectors])
        if vectors:
            comps = np.concatenate([v.components for v in vectors])
            vals = np.concatenate([v.values for v in vectors])
        else:
            comps = np.zeros(0, np.int64)
            vals = np.zeros(0, np.float32)
        return cls(dim, indptr, comps, vals)

    @classmethod
    def empty(cls, dim: int) -> "SparseDataset":
        return cls(dim, [0], [], [])

    def validate(self) -> None:
        """Check every vector invariant; raise on the first violation."""
        if self.dim <= 0:
            raise ValidationError(f"dimension must be positive, got {self.dim}")
        ip = self.indptr
        if ip.ndim != 1 or ip.size == 0 or ip[0] != 0:
            raise ValidationError("indptr must start at 0")
        if np.any(np.diff(ip) < 0):
            raise ValidationError("indptr must be non-decreasing")
        if ip[-1] != self.components.size or self.components.size != self.values.size:
            raise ValidationError("indptr does not match array lengths")
        c = self.components
        if c.size:
            if c.min() < 0 or c.max() >= self.dim:
                j = int(np.flatnonzero((c < 0) | (c >= self.dim))[0])
                doc = int(np.searchsorted(ip, j, side="right") - 1)
                raise ComponentRangeError(
                    f"document {doc}: component {c[j]} outside [0, {self.dim})"
                )
            step_ok = np.diff(c) > 0
            # positions where a new document starts are exempt
            starts = ip[1:-1]
            starts = starts[(starts > 0) & (starts < c.size)]
            step_ok[starts - 1] = True
            if not step_ok.all():
                j = int(np.flatnonzero(~step_ok)[0]) + 1
                doc = int(np.searchsorted(ip, j, side="right") - 1)
                raise NonAscendingError(
                    f"document {doc}: components not strictly increasing at "
                    f"position {j - ip[doc]} ({c[j - 1]} then {c[j]})"
                )
        _check_values(self.values)

    def __len__(self) -> int:
        return self.indptr.shape[0] - 1

    def __getitem__(self, i: int) -> SparseVector:
        n = len(self)
        if i < 0:
            i += n
        if not 0 <= i < n:
            raise IndexError(i)
        s, e = self.indptr[i], self.indptr[i + 1]
        return SparseVector(self.components[s:e], self.values[s:e])

    def __iter__(self) -> Iterator[SparseVector]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, SparseDataset):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.components, other.components)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"SparseDataset(n={len(self)}, dim={self.dim}, nnz={self.total_nnz})"

    @property
    def nnzs(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def total_nnz(self) -> int:
        return int(self.indptr[-1])

    def subset(self, ids: Sequence[int]) -> "SparseDataset":
        return SparseDataset.from_vectors(self.dim, (self[int(i)] for i in ids))


# ---------------------------------------------------------------------------
# gaps
# ---------------------------------------------------------------------------


def to_gaps(components) -> np.ndarray:
    """Gap transform: first entry absolute, then successive differences (all >= 1)."""
    c = np.asarray(components, dtype=np.int64)
    if c.size == 0:
        return c.copy()
    if c[0] < 0:
        raise ComponentRangeError(f"negative component {c[0]} at index 0")
    gaps = np.empty_like(c)
    gaps[0] = c[0]
    np.subtract(c[1:], c[:-1], out=gaps[1:])
    bad = np.flatnonzero(gaps[1:] <= 0)
    if bad.size:
        i = int(bad[0]) + 1
        raise NonAscendingError(
            f"components not strictly increasing at index {i}: {c[i - 1]} then {c[i]}"
        )
    return gaps


def from_gaps(gaps, dim: int | None = None) -> np.ndarray:
    """Inverse of :func:`to_gaps`; ``dim`` bounds the reconstructed IDs."""
    g = np.asarray(gaps, dtype=np.int64)
    if g.size == 0:
        return g.copy()
    if g[0] < 0 or (g.size > 1 and g[1:].min() < 1):
        raise CorruptionError("gap stream has a non-positive gap")
    c = np.cumsum(g)
    if dim is not None and c[-1] >= dim:
        j = int(np.flatnonzero(c >= dim)[0])
        raise CorruptionError(f"reconstructed component {c[j]} at index {j} >= dim {dim}")
    return c


# ---------------------------------------------------------------------------
# value formats
# ---------------------------------------------------------------------------


class ValueKind(IntEnum):
    F32 = 0
    F16 = 1
    FIXED_U8 = 2


@dataclass(frozen=True)
class ValueFormat:
    """How document values are stored. ``frac_bits`` only matters for FIXED_U8."""

    kind: ValueKind = ValueKind.F32
    frac_bits: int = 0
    _lut: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", ValueKind(self.kind))
        if not 0 <= self.frac_bits <= 8:
            raise ValidationError(f"frac_bits must be in [0, 8], got {self.frac_bits}")
        if self.kind != ValueKind.FIXED_U8 and self.frac_bits:
            object.__setattr__(self, "frac_bits", 0)

    @classmethod
    def f32(cls):
        return cls(ValueKind.F32)

    @classmethod
    def f16(cls):
        return cls(ValueKind.F16)

    @classmethod
    def fixed_u8(cls, frac_bits: int):
        return cls(ValueKind.FIXED_U8, frac_bits)

    @classmethod
    def fit(cls, kind, values) -> "ValueFormat":
        """Build a format for ``values``; picks frac_bits for FIXED_U8."""
        kind = ValueKind(kind)
        if kind != ValueKind.FIXED_U8:
            return cls(kind)
        v = np.asarray(values)
        return cls.fixed_u8(choose_frac_bits(float(v.max()) if v.size else 0.0))

    @property
    def dtype(self) -> np.dtype:
        return np.dtype({ValueKind.F32: "<f4", ValueKind.F16: "<u2", ValueKind.FIXED_U8: "u1"}[self.kind])

    @property
    def itemsize(self) -> int:
        return self.dtype.itemsize

    @property
    def scale(self) -> float:
        return 2.0 ** -self.frac_bits

    def lookup_table(self) -> np.ndarray:
        """code -> float32 table used by the scan kernels (empty for F32)."""
        if self._lut is None:
            if self.kind == ValueKind.F16:
                lut = np.arange(1 << 16, dtype=np.uint16).view(np.float16).astype(np.float32)
            elif self.kind == ValueKind.FIXED_U8:
                lut = (np.arange(256, dtype=np.float64) * self.scale).astype(np.float32)
            else:
                lut = np.zeros(1, np.float32)
            object.__setattr__(self, "_lut", lut)
        return self._lut

    def error_bound(self, values) -> np.ndarray:
        """Per-value upper bound on |dequantize(quantize(v)) - v|."""
        v = np.abs(np.asarray(values, dtype=np.float64))
        if self.kind == ValueKind.F32:
            return v * 2.0**-24
        if self.kind == ValueKind.F16:
            # half-ULP relative for normals, absolute half of the subnormal step
            return np.maximum(v * 2.0**-11, 2.0**-25)
        return np.full(v.shape, 2.0 ** (-self.frac_bits - 1))

    def __str__(self):
        if self.kind == ValueKind.FIXED_U8:
            return f"fixedu8(frac_bits={self.frac_bits})"
        return self.kind.name.lower()


def choose_frac_bits(max_value: float) -> int:
    """Largest fractional bit count that stores ``max_value`` without clamping."""
    if max_value < 0 or not np.isfinite(max_value):
        raise QuantizationError(f"cannot quantize value {max_value}")
    for f in range(8, -1, -1):
        if max_value * (1 << f) < 255.5:
            return f
    raise QuantizationError(
        f"value {max_value} does not fit an unsigned 8-bit fixed-point code "
        f"(needs max < 255.5 with frac_bits=0)"
    )


def quantize(v, fmt: ValueFormat):
    """Map value(s) to stored codes in ``fmt``. Accepts scalars or arrays."""
    arr = np.asarray(v, dtype=np.float64)
    _check_values(arr.reshape(-1))
    if fmt.kind == ValueKind.F32:
        out = arr.astype(np.float32)
    elif fmt.kind == ValueKind.F16:
        if arr.size and arr.max() > _F16_MAX:
            raise QuantizationError(f"value {arr.max()} overflows float16")
        out = arr.astype(np.float16).view(np.uint16)
    else:
        limit = 2.0 ** (8 - fmt.frac_bits)
        if arr.size and arr.max() >= limit:
            worst = float(arr.max())
            need = None
            try:
                need = choose_frac_bits(worst)
            except QuantizationError:
                pass
            hint = f"frac_bits <= {need}" if need is not None else "a wider format"
            raise QuantizationError(
                f"value {worst} >= {limit} overflows fixedu8 with frac_bits={fmt.frac_bits}; "
                f"requires {hint}"
            )
        out = np.clip(np.rint(arr * (1 << fmt.frac_bits)), 0, 255).astype(np.uint8)
    return out[()] if out.ndim == 0 else out


def dequantize(code, fmt: ValueFormat):
    """Inverse of :func:`quantize`, returning float32."""
    c = np.asarray(code)
    if fmt.kind == ValueKind.F32:
        out = c.astype(np.float32)
    elif fmt.kind == ValueKind.F16:
        out = c.astype(np.uint16).view(np.float16).astype(np.float32)
    else:
        out = (c.astype(np.float32) * np.float32(fmt.scale)).astype(np.float32)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# uncompressed forward index
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ForwardIndex:
    """Contiguous components (uint16), values (stored codes) and offsets."""

    dim: int
    components: np.ndarray
    values: np.ndarray
    offsets: np.ndarray
    value_format: ValueFormat

    def __len__(self):
        return self.offsets.shape[0] - 1

    @property
    def total_nnz(self) -> int:
        return int(self.offsets[-1])

    @property
    def component_bits(self) -> int:
        return self.components.dtype.itemsize * 8 * self.components.shape[0]

    @property
    def bits_per_component(self) -> float:
        return self.component_bits / self.total_nnz if self.total_nnz else 0.0

    def doc(self, i: int) -> SparseVector:
        s, e = self.offsets[i], self.offsets[i + 1]
        return SparseVector(
            self.components[s:e].astype(np.int64), dequantize(self.values[s:e], self.value_format)
        )


def check_dim(dim: int) -> None:
    if dim > MAX_DIM:
        raise UnsupportedDimensionError(
            f"dimension {dim} exceeds {MAX_DIM}; components must fit in 16 bits"
        )


def build_uncompressed(ds: SparseDataset, fmt: ValueFormat | None = None) -> ForwardIndex:
    fmt = fmt or ValueFormat.f32()
    check_dim(ds.dim)
    return ForwardIndex(
        dim=ds.dim,
        components=ds.components.astype(np.uint16),
        values=quantize(ds.values, fmt).astype(fmt.dtype, copy=False).reshape(-1),
        offsets=ds.indptr.copy(),
        value_format=fmt,
    )
