import itertools
import json

import numpy as np
import pytest

from fwdindex import SparseDataset, SparseVector, ValueFormat, bench, build_index, rgb_reorder
from fwdindex.errors import ValidationError
from fwdindex.index import CompressedForwardIndex


@pytest.fixture(scope="module")
def small(splade_small, splade_queries):
    return splade_small.subset(range(400)), splade_queries.subset(range(8))


def test_size_report_sums(small):
    ds, _ = small
    for codec in bench.ALL_CODECS:
        r = bench.size_report(build_index(ds, codec))
        assert r.component_bits == int(round(r.bits_per_component * r.total_nnz))
        d = r.to_dict()
        assert d["schema_version"] == bench.SCHEMA_VERSION and d["kind"] == "size"
        json.loads(json.dumps(d))
        assert (r.zeta_k is not None) == (codec == "zeta")
        assert (r.stream_mode_bits_per_component is not None) == (codec == "svb")


def test_raw_report_is_sixteen(small):
    assert bench.size_report(build_index(small[0], "raw")).bits_per_component == 16.0


def test_stream_mode_figure_matches_encoder(small):
    ds, _ = small
    r = bench.size_report(build_index(ds, "svb"))
    assert r.stream_mode_bits_per_component == pytest.approx(bench.svb_stream_bits_per_component(ds))
    assert r.stream_mode_bits_per_component <= r.bits_per_component


def test_render_sizes(small):
    reports = [bench.size_report(build_index(small[0], c)) for c in ("raw", "svb")]
    text = bench.render_sizes(reports)
    assert "bits/comp" in text and "16.000" in text and "shared controls" in text


def test_scan_report_with_fake_clock(small):
    ds, qs = small
    ticks = itertools.count()
    clock = lambda: float(next(ticks))  # noqa: E731 - every timed call lasts exactly one tick
    reps = bench.scan_compare({"a": build_index(ds, "raw"), "b": build_index(ds, "dotvbyte")}, qs,
                              runs=3, warmup=1, clock=clock)
    for r in reps.values():
        assert r.mean_s == r.median_s == r.p95_s == r.best_mean_s == 1.0
        assert r.run_spread == 0.0
        assert r.queries == len(qs) and r.runs == 3 and r.warmup == 1
    assert reps["a"].checksum == reps["b"].checksum


def test_scan_report_real_timing(small):
    ds, qs = small
    idx = build_index(ds, "dotvbyte", ValueFormat.f16())
    r1 = bench.scan_benchmark(idx, qs, runs=2)
    r2 = bench.scan_benchmark(idx, qs, runs=1, warmup=0)
    assert r1.mean_s > 0 and r1.total_s > 0 and r1.densify_mean_s > 0
    assert r1.p95_s >= r1.median_s > 0
    assert r1.checksum == r2.checksum
    assert not r1.parallel
    d = r1.to_dict()
    assert "per_query_s" not in d and len(r1.to_dict(with_samples=True)["per_query_s"]) == len(qs)
    assert "top-k checksum" in bench.render_scans([r1])


def test_parallel_scan_matches(small):
    ds, qs = small
    idx = build_index(ds, "dotvbyte")
    seq = bench.scan_benchmark(idx, qs)
    par = bench.scan_benchmark(idx, qs, threads=3)
    assert par.parallel and par.checksum == seq.checksum


def test_scan_argument_checks(small):
    ds, qs = small
    idx = build_index(ds, "raw")
    with pytest.raises(ValidationError):
        bench.scan_benchmark(idx, qs, k=0)
    with pytest.raises(ValidationError):
        bench.scan_benchmark(idx, qs, runs=0)
    with pytest.raises(ValidationError):
        bench.scan_benchmark(idx, SparseDataset.empty(ds.dim))
    with pytest.raises(ValidationError):
        bench.scan_compare({}, qs)


def test_checksum_is_order_sensitive():
    a = bench.topk_checksum([np.array([1, 2]), np.array([3])])
    assert a == bench.topk_checksum([np.array([1, 2]), np.array([3])])
    assert a != bench.topk_checksum([np.array([2, 1]), np.array([3])])
    assert a != bench.topk_checksum([np.array([1]), np.array([2, 3])])


def test_run_file_round_trip(tmp_path, small):
    ds, qs = small
    run = bench.topk_run(build_index(ds, "dotvbyte"), qs, 5)
    assert len(run.rows) == 5 * len(qs)
    assert [r[2] for r in run.rows[:5]] == [1, 2, 3, 4, 5]
    run.save(tmp_path / "r.json")
    back = bench.RunFile.load(tmp_path / "r.json")
    assert back.rows == run.rows and back.k == 5
    with pytest.raises(ValidationError):
        bench.RunFile.from_dict({"kind": "size"})
    with pytest.raises(ValidationError):
        bench.topk_run(build_index(ds, "raw"), qs, 0)


def test_oracle_scores():
    ds = SparseDataset.from_vectors(10, [SparseVector([2, 5], [1.0, 2.0]), SparseVector([], []),
                                         SparseVector([5], [4.0])])
    q = SparseVector([2, 5], [3.0, 0.5])
    assert bench.oracle_scores(ds, q).tolist() == [4.0, 0.0, 2.0]


def test_compare_runs_adjudicates_ties():
    # docs 0 and 1 tie exactly; doc 2 is strictly worse
    ds = SparseDataset.from_vectors(4, [SparseVector([0], [1.0]), SparseVector([1], [1.0]),
                                        SparseVector([2], [0.5])])
    qs = SparseDataset.from_vectors(4, [SparseVector([0, 1, 2], [1.0, 1.0, 1.0])])
    a = bench.RunFile(1, [(0, 0, 1, 1.0)])
    b = bench.RunFile(1, [(0, 1, 1, 1.0)])
    c = bench.RunFile(1, [(0, 2, 1, 0.5)])
    res = bench.compare_runs(a, b, ds, qs)
    assert res.agree and res.tie_resolved == 1
    res = bench.compare_runs(a, c, ds, qs)
    assert not res.agree and res.mismatched == [0]
    assert bench.compare_runs(a, a, ds, qs).identical == 1
    with pytest.raises(ValidationError):
        bench.compare_runs(a, bench.RunFile(2, []), ds, qs)


def test_raw_and_dotvbyte_runs_agree(small):
    ds, qs = small
    ra = bench.topk_run(build_index(ds, "raw"), qs, 10)
    rb = bench.topk_run(build_index(ds, "dotvbyte"), qs, 10)
    assert bench.compare_runs(ra, rb, ds, qs).agree


def test_reordered_run_agrees(small):
    ds, qs = small
    perm = rgb_reorder(ds)
    ra = bench.topk_run(build_index(ds, "raw"), qs, 10)
    rb = bench.topk_run(build_index(ds, "dotvbyte", perm=perm), qs, 10, perm=perm)
    assert bench.compare_runs(ra, rb, ds, qs).agree


def test_dot_tolerance():
    f32, u8 = ValueFormat.f32(), ValueFormat.fixed_u8(4)
    assert bench.dot_tolerance(f32, [1.0], [2.0], 2.0) == pytest.approx(2e-4)
    assert bench.dot_tolerance(u8, [1.0], [2.0], 2.0) >= 2.0 * 2**-5


def test_verify_dataset_passes(small):
    ds, qs = small
    rep = bench.verify_dataset(ds, queries=qs, pairs=100, rgb_docs=200)
    assert rep.ok, rep.render()
    names = [c.name for c in rep.checks]
    assert "dotvbyte: vector vs scalar dots" in names and "rgb: cost monotone per level" in names
    assert rep.to_dict()["ok"] is True


def test_verify_dataset_reports_broken_codec(small, monkeypatch):
    ds, qs = small
    real = CompressedForwardIndex.decode_all

    def broken(self, path="vector"):
        out = real(self, path)
        if self.codec.label == "delta":
            out = out.copy()
            out[0] += 1
        return out

    monkeypatch.setattr(CompressedForwardIndex, "decode_all", broken)
    rep = bench.verify_dataset(ds, codecs=["raw", "delta"], queries=qs, pairs=20, rgb_docs=100)
    assert not rep.ok
    assert [c.name for c in rep.checks if not c.ok] == ["delta: round trip"]
    assert "FAIL  delta: round trip" in rep.render()


def test_verify_dataset_invalid_input():
    ds = SparseDataset(10, [0, 2], [3, 3], [1.0, 1.0], validate=False)
    rep = bench.verify_dataset(ds)
    assert not rep.ok and rep.checks[0].name == "dataset invariants"
