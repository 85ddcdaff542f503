"""Size and scan-time reports, top-k run files and the verification suite.

Reports are plain dataclasses that serialise to one JSON object (carrying a
``schema_version``) and render as a fixed-width table.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .bisection import BisectionConfig, BisectionTrace, Permutation, apply_permutation, rgb_reorder
from .bytecodecs import svb_encode_stream
from .core import SparseDataset, ValueFormat, ValueKind, dequantize, to_gaps
from .errors import FwdIndexError, ValidationError
from .index import Codec, CompressedForwardIndex, DenseQuery, build_index, top_k

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _render(rows: list[dict], columns: Sequence[tuple[str, str, str]]) -> str:
    """Fixed-width table. ``columns`` are (key, header, format spec)."""
    cells = [[h for _, h, _ in columns]]
    for r in rows:
        cells.append([format(r[k], f) if r[k] is not None else "-" for k, _, f in columns])
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = ["  ".join(c.rjust(w) if j else c.ljust(w) for j, (c, w) in enumerate(zip(row, widths)))
             for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# sizes
# ---------------------------------------------------------------------------


@dataclass
class SizeReport:
    codec: str
    reordered: bool
    bits_per_component: float
    control_bits: int
    data_bits: int
    tail_bits: int
    pad_bits: int
    values_bytes: int
    total_index_bytes: int
    value_format: str
    docs: int
    total_nnz: int
    zeta_k: int | None = None
    #: StreamVByte only: bits/component when control bytes are shared across documents
    stream_mode_bits_per_component: float | None = None

    @property
    def component_bits(self) -> int:
        return self.control_bits + self.data_bits + self.tail_bits + self.pad_bits

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "size", **asdict(self)}


def size_report(index: CompressedForwardIndex, *, reordered: bool = False) -> SizeReport:
    b = index.size_breakdown()
    stream = None
    if index.codec == Codec.SVB and index.total_nnz:
        # shared controls: one control byte per four values of the whole index
        data_bytes = b.data_bits // 8
        stream = 8.0 * (data_bytes + -(-index.total_nnz // 4)) / index.total_nnz
    return SizeReport(
        codec=index.codec_label,
        reordered=reordered,
        bits_per_component=index.bits_per_component,
        control_bits=b.control_bits,
        data_bits=b.data_bits,
        tail_bits=b.tail_bits,
        pad_bits=b.pad_bits,
        values_bytes=int(index.values_blob.shape[0]),
        total_index_bytes=len(index.to_bytes()),
        value_format=str(index.value_format),
        docs=index.n,
        total_nnz=index.total_nnz,
        zeta_k=index.zeta_k if index.codec == Codec.ZETA else None,
        stream_mode_bits_per_component=stream,
    )


def svb_stream_bits_per_component(ds: SparseDataset) -> float:
    """Bits/component of StreamVByte with controls shared across documents."""
    gaps = [to_gaps(ds.components[a:b]) for a, b in zip(ds.indptr[:-1], ds.indptr[1:])]
    stream = svb_encode_stream(gaps)
    return 8.0 * stream.nbytes / max(ds.total_nnz, 1)


_SIZE_COLUMNS = [
    ("codec", "codec", ""),
    ("reordered", "rgb", ""),
    ("bits_per_component", "bits/comp", ".3f"),
    ("control_bits", "control", "d"),
    ("data_bits", "data", "d"),
    ("tail_bits", "tail", "d"),
    ("pad_bits", "pad", "d"),
    ("values_bytes", "values B", "d"),
    ("total_index_bytes", "index B", "d"),
]


def render_sizes(reports: Iterable[SizeReport]) -> str:
    rows = []
    for r in reports:
        d = asdict(r)
        d["reordered"] = "yes" if r.reordered else "no"
        rows.append(d)
    text = _render(rows, _SIZE_COLUMNS)
    notes = [f"{r.codec}: {r.stream_mode_bits_per_component:.3f} bits/comp with shared controls"
             for r in reports if r.stream_mode_bits_per_component is not None]
    return "\n".join([text, *notes])


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------


@dataclass
class ScanReport:
    codec: str
    value_format: str
    reordered: bool
    path: str
    queries: int
    k: int
    runs: int
    warmup: int
    #: per-query scan time: median over the measured runs of that query (seconds)
    mean_s: float
    median_s: float
    p95_s: float
    #: mean over queries of the fastest measured run
    best_mean_s: float
    #: mean over queries of (slowest - fastest run) / median
    run_spread: float
    total_s: float
    densify_mean_s: float
    docs: int
    checksum: str
    parallel: bool = False
    per_query_s: list[float] = field(default_factory=list, repr=False)

    def to_dict(self, *, with_samples: bool = False) -> dict:
        d = {"schema_version": SCHEMA_VERSION, "kind": "scan", **asdict(self)}
        if not with_samples:
            d.pop("per_query_s")
        return d


def topk_checksum(id_lists: Iterable[np.ndarray]) -> str:
    h = hashlib.sha256()
    for ids in id_lists:
        h.update(np.asarray(ids, dtype="<i8").tobytes())
        h.update(b"|")
    return h.hexdigest()[:16]


def densify(queries: SparseDataset, dim: int, perm: Permutation | None = None) -> tuple[list[DenseQuery], float]:
    """Dense queries and the mean time spent building one."""
    out, spent = [], 0.0
    for v in queries:
        t0 = time.perf_counter()
        out.append(DenseQuery.from_sparse(v, dim, perm))
        spent += time.perf_counter() - t0
    return out, spent / max(len(out), 1)


def scan_compare(indexes: dict[str, CompressedForwardIndex], queries: SparseDataset, *, k: int = 10,
                 runs: int = 3, warmup: int = 1, perm: Permutation | None = None,
                 reordered: bool | None = None, path: str = "vector", threads: int = 1,
                 clock: Callable[[], float] = time.perf_counter) -> dict[str, ScanReport]:
    """Time full scans of several indexes over the same queries.

    For every query the indexes are measured back to back, so slow drift of
    the machine affects them alike. The per-query figure covers scoring every
    document and selecting the top ``k``; densifying the query is timed
    separately. Each scan is single-threaded; ``threads > 1`` measures
    distinct queries concurrently and marks the reports as parallel.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if runs < 1 or warmup < 0 or threads < 1:
        raise ValidationError("runs and threads must be >= 1 and warmup >= 0")
    if not indexes:
        raise ValidationError("no index to scan")
    dims = {ix.dim for ix in indexes.values()}
    if len(dims) != 1:
        raise ValidationError(f"indexes disagree on dim: {sorted(dims)}")
    dense, densify_s = densify(queries, dims.pop(), perm)
    if not dense:
        raise ValidationError("no queries")
    names = list(indexes)
    samples = {name: np.empty((len(dense), runs)) for name in names}
    ids = {name: [None] * len(dense) for name in names}
    local = threading.local()

    def measure(qi: int) -> None:
        bufs = getattr(local, "bufs", None)
        if bufs is None:
            bufs = local.bufs = {name: np.empty(ix.n, dtype=np.float32) for name, ix in indexes.items()}
        q = dense[qi]
        for name in names:
            ix, out = indexes[name], bufs[name]
            for _ in range(warmup):
                top_k(ix.scores(q, path=path, out=out), k)
            for r in range(runs):
                t0 = clock()
                best = top_k(ix.scores(q, path=path, out=out), k)
                samples[name][qi, r] = clock() - t0
            ids[name][qi] = best

    t_start = clock()
    if threads == 1:
        for qi in range(len(dense)):
            measure(qi)
    else:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(measure, range(len(dense))))
    total = clock() - t_start
    reports = {}
    for name, ix in indexes.items():
        s = samples[name]
        per_q = np.median(s, axis=1)
        spread = (s.max(axis=1) - s.min(axis=1)) / np.maximum(per_q, 1e-12)
        reports[name] = ScanReport(
            codec=ix.codec_label,
            value_format=str(ix.value_format),
            reordered=perm is not None if reordered is None else reordered,
            path=path,
            queries=len(dense),
            k=k,
            runs=runs,
            warmup=warmup,
            mean_s=float(per_q.mean()),
            median_s=float(np.median(per_q)),
            p95_s=float(np.percentile(per_q, 95)),
            best_mean_s=float(s.min(axis=1).mean()),
            run_spread=float(spread.mean()),
            total_s=total,
            densify_mean_s=densify_s,
            docs=ix.n,
            checksum=topk_checksum(ids[name]),
            parallel=threads > 1,
            per_query_s=[float(x) for x in per_q],
        )
    return reports


def scan_benchmark(index: CompressedForwardIndex, queries: SparseDataset, **kwargs) -> ScanReport:
    return scan_compare({"index": index}, queries, **kwargs)["index"]


_SCAN_COLUMNS = [
    ("codec", "codec", ""),
    ("value_format", "values", ""),
    ("queries", "queries", "d"),
    ("mean_ms", "mean ms", ".3f"),
    ("median_ms", "median ms", ".3f"),
    ("p95_ms", "p95 ms", ".3f"),
    ("best_ms", "best ms", ".3f"),
    ("run_spread", "spread", ".2f"),
    ("densify_us", "densify us", ".1f"),
    ("checksum", "top-k checksum", ""),
]


def render_scans(reports: Iterable[ScanReport]) -> str:
    rows = []
    for r in reports:
        d = asdict(r)
        d.update(mean_ms=1e3 * r.mean_s, median_ms=1e3 * r.median_s, p95_ms=1e3 * r.p95_s,
                 best_ms=1e3 * r.best_mean_s, densify_us=1e6 * r.densify_mean_s)
        rows.append(d)
    return _render(rows, _SCAN_COLUMNS)


# ---------------------------------------------------------------------------
# top-k run files
# ---------------------------------------------------------------------------


@dataclass
class RunFile:
    """Ranked results: rows of (query id, doc id, rank, score), rank from 1."""

    k: int
    rows: list[tuple[int, int, int, float]]
    meta: dict = field(default_factory=dict)

    def per_query(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for qid, did, _, _ in sorted(self.rows, key=lambda r: (r[0], r[2])):
            out.setdefault(qid, []).append(did)
        return out

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "run", "k": self.k, "meta": self.meta,
                "rows": [list(r) for r in self.rows]}

    @classmethod
    def from_dict(cls, d: dict) -> "RunFile":
        if d.get("kind") != "run":
            raise ValidationError("not a run file")
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValidationError(f"run file schema {d.get('schema_version')}, expected {SCHEMA_VERSION}")
        rows = [(int(q), int(doc), int(r), float(s)) for q, doc, r, s in d["rows"]]
        return cls(int(d["k"]), rows, d.get("meta", {}))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RunFile":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def topk_run(index: CompressedForwardIndex, queries: SparseDataset, k: int = 10, *,
             perm: Permutation | None = None, path: str = "vector") -> RunFile:
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    rows = []
    out = np.empty(index.n, dtype=np.float32)
    for qid, v in enumerate(queries):
        q = DenseQuery.from_sparse(v, index.dim, perm)
        scores = index.scores(q, path=path, out=out)
        for rank, doc in enumerate(top_k(scores, k), start=1):
            rows.append((qid, int(doc), rank, float(scores[doc])))
    meta = {"codec": index.codec_label, "value_format": str(index.value_format), "docs": index.n,
            "reordered": perm is not None}
    return RunFile(k, rows, meta)


def oracle_scores(ds: SparseDataset, query_vec) -> np.ndarray:
    """Exact float64 inner product of one sparse query with every document."""
    q = np.zeros(ds.dim, dtype=np.float64)
    q[query_vec.components] = query_vec.values
    prod = ds.values.astype(np.float64) * q[ds.components]
    out = np.zeros(len(ds), dtype=np.float64)
    nz = ds.nnzs > 0
    if prod.size:
        out[nz] = np.add.reduceat(prod, ds.indptr[:-1][nz])
    return out


@dataclass
class RunComparison:
    queries: int
    identical: int
    tie_resolved: int
    mismatched: list[int]

    @property
    def agree(self) -> bool:
        return not self.mismatched


def compare_runs(a: RunFile, b: RunFile, ds: SparseDataset, queries: SparseDataset, *,
                 rtol: float = 1e-5, atol: float = 1e-6) -> RunComparison:
    """Do two runs agree once ties are judged on exact f64 scores?

    Per query both lists are re-sorted by their exact scores; they agree when
    the scores at every rank match within ``atol + rtol * |score|``, i.e. any
    difference in membership or order only swaps documents that tie.
    ``ds`` must be the dataset both indexes were built from, in original IDs.
    """
    if a.k != b.k:
        raise ValidationError(f"runs use different k ({a.k} vs {b.k})")
    pa, pb = a.per_query(), b.per_query()
    qids = sorted(set(pa) | set(pb))
    identical = tied = 0
    bad = []
    for qid in qids:
        la, lb = pa.get(qid, []), pb.get(qid, [])
        if la == lb:
            identical += 1
            continue
        if len(la) != len(lb) or qid >= len(queries):
            bad.append(qid)
            continue
        exact = oracle_scores(ds, queries[qid])
        sa = np.sort(exact[la])[::-1]
        sb = np.sort(exact[lb])[::-1]
        if np.all(np.abs(sa - sb) <= atol + rtol * np.abs(sa)):
            tied += 1
        else:
            bad.append(qid)
    return RunComparison(len(qids), identical, tied, bad)


# ---------------------------------------------------------------------------
# verification suite
# ---------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class VerifyReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def add(self, name: str, ok: bool, detail: str = "") -> bool:
        self.checks.append(Check(name, bool(ok), detail))
        log.info("%s %s %s", "PASS" if ok else "FAIL", name, detail)
        return ok

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "verify", "ok": self.ok,
                "checks": [asdict(c) for c in self.checks]}

    def render(self) -> str:
        return "\n".join(f"{'PASS' if c.ok else 'FAIL'}  {c.name}" + (f"  ({c.detail})" if c.detail else "")
                         for c in self.checks)


ALL_CODECS = ("raw", "vbyte", "gamma", "delta", "zeta", "svb", "dotvbyte")


def dot_tolerance(fmt: ValueFormat, doc_values, query_values, exact: float) -> float:
    """Allowed |kernel - exact| for one inner product.

    Quantized formats get the analytic bound sum(|q_j| * err(v_j)); every
    format gets 1e-4 relative on top for float32 accumulation.
    """
    slack = 1e-4 * max(abs(exact), float(np.sum(np.abs(np.asarray(doc_values, np.float64)
                                                        * np.asarray(query_values, np.float64)))))
    if fmt.kind == ValueKind.F32:
        return slack
    bound = float(np.sum(np.abs(np.asarray(query_values, np.float64)) * fmt.error_bound(doc_values)))
    return bound + slack + 1e-12


def oracle_dot_check(index: CompressedForwardIndex, ds: SparseDataset, queries: SparseDataset,
                     pairs: int, rng: np.random.Generator, *, path: str = "vector") -> tuple[int, float]:
    """Compare kernel dots against exact f64 dots on random (doc, query) pairs.

    Returns (failures, worst error / tolerance). ``ds`` is the dataset the
    index was built from, in the same component IDs.
    """
    fails, worst = 0, 0.0
    if len(ds) == 0 or len(queries) == 0:
        return 0, 0.0
    docs = rng.integers(len(ds), size=pairs)
    qids = rng.integers(len(queries), size=pairs)
    order = np.argsort(qids, kind="stable")
    out = np.empty(index.n, dtype=np.float32)
    last = -1
    for p in order:
        qi, d = int(qids[p]), int(docs[p])
        qv = queries[qi]
        if qi != last:
            dq = DenseQuery.from_sparse(qv, index.dim)
            scores = index.scores(dq, path=path, out=out)
            last = qi
        doc = ds[d]
        qd = np.zeros(ds.dim, np.float64)
        qd[qv.components] = qv.values
        exact = float(np.dot(doc.values.astype(np.float64), qd[doc.components]))
        tol = dot_tolerance(index.value_format, doc.values, qd[doc.components], exact)
        err = abs(float(scores[d]) - exact)
        worst = max(worst, err / tol if tol > 0 else (0.0 if err == 0 else math.inf))
        if err > tol:
            fails += 1
    return fails, worst


def verify_dataset(ds: SparseDataset, *, codecs: Sequence[str] = ALL_CODECS,
                   queries: SparseDataset | None = None, pairs: int = 1000, rgb_docs: int = 2000,
                   zeta_k: int = 2, seed: int = 0) -> VerifyReport:
    """Round trips on every codec, vector/scalar agreement, f64 oracle dots and
    bisection cost monotonicity, all on ``ds``."""
    rep = VerifyReport()
    rng = np.random.default_rng(seed)
    try:
        ds.validate()
    except FwdIndexError as exc:
        rep.add("dataset invariants", False, str(exc))
        return rep
    rep.add("dataset invariants", True, f"{len(ds)} docs, {ds.total_nnz} nonzeros, dim {ds.dim}")
    if queries is None:
        # documents double as queries; their supports overlap other documents
        take = rng.choice(len(ds), size=min(len(ds), 100), replace=False) if len(ds) else []
        queries = ds.subset(np.sort(take))
    formats = [ValueFormat.f32(), ValueFormat.f16()]
    if ds.values.size:
        try:
            formats.append(ValueFormat.fit(ValueKind.FIXED_U8, ds.values))
        except FwdIndexError:
            pass
    sample = rng.choice(len(ds), size=min(len(ds), 200), replace=False) if len(ds) else np.zeros(0, int)
    for name in codecs:
        codec = Codec.parse(name)
        label = f"zeta(k={zeta_k})" if codec == Codec.ZETA else codec.label
        try:
            idx = build_index(ds, codec, ValueFormat.f32(), zeta_k=zeta_k)
            ok = np.array_equal(idx.decode_all(), ds.components) and np.array_equal(
                dequantize(idx.values, idx.value_format), ds.values)
            per_doc = all(np.array_equal(idx.doc_components(int(i)), ds[int(i)].components) for i in sample)
            rep.add(f"{label}: round trip", ok and per_doc,
                    f"{idx.bits_per_component:.3f} bits/component")
            blob = idx.to_bytes()
            again = CompressedForwardIndex.from_bytes(blob)
            rep.add(f"{label}: file round trip", again.to_bytes() == blob)
            if codec in (Codec.SVB, Codec.DOTVBYTE):
                same = np.array_equal(idx.decode_all("vector"), idx.decode_all("scalar"))
                rep.add(f"{label}: vector == scalar decode", same)
            if codec == Codec.DOTVBYTE and len(queries):
                worst = 0.0
                for v in queries:
                    q = DenseQuery.from_sparse(v, ds.dim)
                    a = idx.scores(q, path="vector").astype(np.float64)
                    b = idx.scores(q, path="scalar").astype(np.float64)
                    worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-30),
                                                    initial=0.0)))
                rep.add(f"{label}: vector vs scalar dots", worst <= 1e-6, f"max rel diff {worst:.2e}")
            for fmt in formats:
                fidx = idx if fmt.kind == ValueKind.F32 else build_index(ds, codec, fmt, zeta_k=zeta_k)
                fails, worst = oracle_dot_check(fidx, ds, queries, pairs, rng)
                rep.add(f"{label}: oracle dots {fmt}", fails == 0,
                        f"{fails}/{pairs} over tolerance, worst {worst:.3f} of tolerance")
        except FwdIndexError as exc:
            rep.add(f"{label}: encode/decode", False, f"{type(exc).__name__}: {exc}")
    if len(ds) and ds.total_nnz:
        sub = ds.subset(np.sort(rng.choice(len(ds), size=min(len(ds), rgb_docs), replace=False)))
        trace = BisectionTrace()
        perm = rgb_reorder(sub, BisectionConfig(), trace)
        rep.add("rgb: cost monotone per level", trace.monotone(), f"{len(trace.levels)} partitions")
        back = apply_permutation(apply_permutation(sub, perm), perm.inverse())
        rep.add("rgb: permutation round trip", back == sub)
        moved = build_index(sub, "dotvbyte", perm=perm)
        same = True
        for v in queries.subset(range(min(len(queries), 10))):
            exact = oracle_scores(sub, v)
            got = moved.scores(DenseQuery.from_sparse(v, ds.dim, perm)).astype(np.float64)
            same &= bool(np.allclose(got, exact, rtol=1e-4, atol=1e-6))
        rep.add("rgb: dots invariant under joint permutation", same)
    return rep
