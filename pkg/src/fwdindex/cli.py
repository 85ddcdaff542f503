"""Command-line harness: ``fwdindex <command> ...``.

Exit codes: 0 success, 1 usage error, 2 invalid input (bad flags values,
unreadable or malformed files), 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench, synth
from .bisection import BisectionConfig, BisectionTrace, Permutation, rgb_reorder
from .core import ValueFormat, ValueKind
from .errors import FwdIndexError
from .formats import PERM_MAGIC, convert_jsonl, dataset_to_bytes, load_dataset, permutation_to_bytes, save_dataset
from .index import INDEX_MAGIC, Codec, CompressedForwardIndex, build_index

log = logging.getLogger("fwdindex")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2, 3

CODECS = ("raw", "vbyte", "gamma", "delta", "zeta", "svb", "dotvbyte")
VALUE_KINDS = {"f32": ValueKind.F32, "f16": ValueKind.F16, "fixedu8": ValueKind.FIXED_U8}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _emit_json(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _load_perm(path: str | None) -> Permutation | None:
    return Permutation.load(path) if path else None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen(a) -> int:
    overrides = {k: v for k, v in (("docs", a.docs), ("dim", a.dim), ("nnz_mean", a.nnz_mean),
                                   ("seed", a.seed), ("nnz_dist", a.nnz_dist), ("id_dist", a.id_dist),
                                   ("zipf_s", a.zipf_s)) if v is not None}
    if a.preset == "custom":
        if a.docs is None:
            raise UsageError("gen --preset custom needs --docs")
        spec = synth.GenSpec(**overrides)
    else:
        spec = synth.preset(a.preset, queries=a.queries, **overrides)
    ds = synth.generate(spec)
    save_dataset(ds, a.output)
    log.info("wrote %d vectors (mean nnz %.1f) to %s", len(ds), ds.nnzs.mean() if len(ds) else 0, a.output)
    print(json.dumps({"output": a.output, "spec": spec.as_dict(), "vectors": len(ds),
                      "mean_nnz": float(ds.nnzs.mean()) if len(ds) else 0.0}))
    return EXIT_OK


def cmd_convert(a) -> int:
    ds = convert_jsonl(a.input, a.output, a.dim)
    print(json.dumps({"output": a.output, "vectors": len(ds), "dim": ds.dim}))
    return EXIT_OK


def cmd_reorder(a) -> int:
    ds = load_dataset(a.input)
    trace = BisectionTrace()
    cfg = BisectionConfig(max_iters_per_level=a.iters, min_partition_size=a.min_part, seed=a.seed)
    perm = rgb_reorder(ds, cfg, trace)
    if not trace.monotone():
        print("bisection cost increased during a level", file=sys.stderr)
        return EXIT_VERIFY
    perm.save(a.output)
    print(json.dumps({"output": a.output, "dim": perm.dim, "partitions": len(trace.levels)}))
    return EXIT_OK


def _value_format(kind: str, ds) -> ValueFormat:
    return ValueFormat.fit(VALUE_KINDS[kind], ds.values)


def cmd_build(a) -> int:
    ds = load_dataset(a.input)
    perm = _load_perm(a.permutation)
    idx = build_index(ds, a.codec, _value_format(a.values, ds), perm, zeta_k=a.zeta_k)
    idx.save(a.output)
    print(json.dumps({"output": a.output, "codec": idx.codec_label, "values": str(idx.value_format),
                      "bits_per_component": idx.bits_per_component}))
    return EXIT_OK


def cmd_stats(a) -> int:
    reports = []
    if a.data:
        ds = load_dataset(a.data)
        perm = _load_perm(a.permutation)
        fmt = _value_format(a.values, ds)
        for p in ([None, perm] if perm is not None else [None]):
            for c in (a.codecs.split(",") if a.codecs else CODECS):
                idx = build_index(ds, c, fmt, p, zeta_k=a.zeta_k)
                reports.append(bench.size_report(idx, reordered=p is not None))
    for path in a.input or []:
        reports.append(bench.size_report(CompressedForwardIndex.load(path), reordered=a.reordered))
    if not reports:
        raise UsageError("stats needs -i INDEX or --data DATA")
    if a.json:
        if len(reports) == 1:
            _emit_json(reports[0].to_dict(), a.output)
        else:
            _emit_json({"schema_version": bench.SCHEMA_VERSION, "kind": "sizes",
                        "reports": [r.to_dict() for r in reports]}, a.output)
    else:
        print(bench.render_sizes(reports))
        if a.output:
            _emit_json({"schema_version": bench.SCHEMA_VERSION, "kind": "sizes",
                        "reports": [r.to_dict() for r in reports]}, a.output)
    return EXIT_OK


def cmd_scan(a) -> int:
    indexes = {}
    for i, path in enumerate(a.input):
        indexes[f"{i}:{path}"] = CompressedForwardIndex.load(path)
    queries = load_dataset(a.queries)
    if a.limit:
        queries = queries.subset(range(min(a.limit, len(queries))))
    perm = _load_perm(a.permutation)
    reports = bench.scan_compare(indexes, queries, k=a.k, runs=a.runs, warmup=a.warmup, perm=perm,
                                 path=a.path, threads=a.threads)
    print(bench.render_scans(reports.values()))
    if a.output:
        rows = [r.to_dict(with_samples=a.samples) for r in reports.values()]
        _emit_json(rows[0] if len(rows) == 1 else
                   {"schema_version": bench.SCHEMA_VERSION, "kind": "scans", "reports": rows}, a.output)
    return EXIT_OK


def cmd_topk(a) -> int:
    idx = CompressedForwardIndex.load(a.input)
    queries = load_dataset(a.queries)
    run = bench.topk_run(idx, queries, a.k, perm=_load_perm(a.permutation), path=a.path)
    if a.output:
        run.save(a.output)
    else:
        _emit_json(run.to_dict(), None)
    return EXIT_OK


def cmd_compare(a) -> int:
    ra, rb = bench.RunFile.load(a.runs[0]), bench.RunFile.load(a.runs[1])
    res = bench.compare_runs(ra, rb, load_dataset(a.data), load_dataset(a.queries))
    print(json.dumps({"queries": res.queries, "identical": res.identical,
                      "tie_resolved": res.tie_resolved, "mismatched": res.mismatched}))
    return EXIT_OK if res.agree else EXIT_VERIFY


def _verify_file(path: str, a) -> bench.VerifyReport:
    """Dispatch on the file's magic: datasets get the full suite, indexes and
    permutations get load, decode and byte round-trip checks."""
    head = Path(path).read_bytes()[:4]
    if head == INDEX_MAGIC:
        rep = bench.VerifyReport()
        try:
            idx = CompressedForwardIndex.load(path)
            idx.validate()
            rep.add("index: loads and decodes", True, f"{idx.codec_label}, {idx.n} docs")
            rep.add("index: byte round trip", idx.to_bytes() == Path(path).read_bytes())
        except FwdIndexError as exc:
            rep.add("index: loads and decodes", False, f"{type(exc).__name__}: {exc}")
        return rep
    if head == PERM_MAGIC:
        rep = bench.VerifyReport()
        try:
            perm = Permutation.load(path)
            rep.add("permutation: loads as a bijection", True, f"{perm.dim} IDs")
            rep.add("permutation: byte round trip",
                    permutation_to_bytes(perm.forward) == Path(path).read_bytes())
        except FwdIndexError as exc:
            rep.add("permutation: loads as a bijection", False, f"{type(exc).__name__}: {exc}")
        return rep
    rep = bench.VerifyReport()
    try:
        ds = load_dataset(path)
    except FwdIndexError as exc:
        rep.add("dataset: loads", False, f"{type(exc).__name__}: {exc}")
        return rep
    rep.add("dataset: byte round trip", dataset_to_bytes(ds) == Path(path).read_bytes())
    queries = load_dataset(a.queries) if a.queries else None
    codecs = a.codecs.split(",") if a.codecs else CODECS
    for c in codecs:
        Codec.parse(c)
    inner = bench.verify_dataset(ds, codecs=codecs, queries=queries, pairs=a.pairs, rgb_docs=a.rgb_docs,
                                 zeta_k=a.zeta_k, seed=a.seed)
    rep.checks.extend(inner.checks)
    return rep


def cmd_verify(a) -> int:
    if not Path(a.input).is_file():
        raise FileNotFoundError(a.input)
    rep = _verify_file(a.input, a)
    if a.json:
        _emit_json(rep.to_dict(), None)
    else:
        print(rep.render())
        print("verify: OK" if rep.ok else "verify: FAILED")
    return EXIT_OK if rep.ok else EXIT_VERIFY


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fwdindex", description="Compressed forward indexes for sparse vectors.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--preset", choices=["splade-like", "lilsr-like", "custom"], default="splade-like")
    g.add_argument("--docs", type=int)
    g.add_argument("--dim", type=_positive)
    g.add_argument("--nnz-mean", type=float)
    g.add_argument("--nnz-dist", choices=[d.value for d in synth.NnzDist])
    g.add_argument("--id-dist", choices=[d.value for d in synth.IdDist])
    g.add_argument("--zipf-s", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--queries", action="store_true", help="use the preset's query statistics")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("convert", help="convert JSONL sparse vectors to a dataset file")
    c.add_argument("-i", "--input", required=True)
    c.add_argument("--dim", type=_positive, required=True)
    c.add_argument("-o", "--output", required=True)
    c.set_defaults(func=cmd_convert)

    r = sub.add_parser("reorder", help="compute a component permutation by graph bisection")
    r.add_argument("-i", "--input", required=True)
    r.add_argument("--iters", type=_positive, default=20)
    r.add_argument("--min-part", type=_positive, default=32)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("-o", "--output", required=True)
    r.set_defaults(func=cmd_reorder)

    b = sub.add_parser("build", help="encode a dataset into an index file")
    b.add_argument("-i", "--input", required=True)
    b.add_argument("--codec", choices=CODECS, default="dotvbyte")
    b.add_argument("--values", choices=list(VALUE_KINDS), default="f32")
    b.add_argument("--zeta-k", type=_positive, default=2)
    b.add_argument("--permutation")
    b.add_argument("-o", "--output", required=True)
    b.set_defaults(func=cmd_build)

    s = sub.add_parser("stats", help="bits-per-component report")
    s.add_argument("-i", "--input", nargs="+", help="index files")
    s.add_argument("--data", help="dataset: build every codec in memory and report them all")
    s.add_argument("--codecs", help="comma-separated codecs for --data")
    s.add_argument("--values", choices=list(VALUE_KINDS), default="f32")
    s.add_argument("--zeta-k", type=_positive, default=2)
    s.add_argument("--permutation", help="with --data, also report every codec after reordering")
    s.add_argument("--reordered", action="store_true", help="mark -i indexes as reordered")
    s.add_argument("--json", action="store_true")
    s.add_argument("-o", "--output", help="also write the JSON report here")
    s.set_defaults(func=cmd_stats)

    sc = sub.add_parser("scan", help="time full scans; several -i files are measured interleaved")
    sc.add_argument("-i", "--input", nargs="+", required=True)
    sc.add_argument("-q", "--queries", required=True)
    sc.add_argument("--k", type=_positive, default=10)
    sc.add_argument("--runs", type=_positive, default=3)
    sc.add_argument("--warmup", type=int, default=1)
    sc.add_argument("--limit", type=_positive, help="use only the first N queries")
    sc.add_argument("--permutation", help="map queries through the permutation the index was built with")
    sc.add_argument("--path", choices=["vector", "scalar"], default="vector")
    sc.add_argument("--threads", type=_positive, default=1,
                    help="measure distinct queries concurrently (report is marked parallel)")
    sc.add_argument("--samples", action="store_true", help="include per-query times in the JSON")
    sc.add_argument("-o", "--output")
    sc.set_defaults(func=cmd_scan)

    t = sub.add_parser("topk", help="write a top-k run file")
    t.add_argument("-i", "--input", required=True)
    t.add_argument("-q", "--queries", required=True)
    t.add_argument("--k", type=_positive, default=10)
    t.add_argument("--permutation")
    t.add_argument("--path", choices=["vector", "scalar"], default="vector")
    t.add_argument("-o", "--output")
    t.set_defaults(func=cmd_topk)

    cm = sub.add_parser("compare", help="check two run files agree up to exact-score ties")
    cm.add_argument("runs", nargs=2)
    cm.add_argument("--data", required=True, help="dataset the indexes were built from")
    cm.add_argument("-q", "--queries", required=True)
    cm.set_defaults(func=cmd_compare)

    v = sub.add_parser("verify", help="verification suite on a dataset (or integrity of an index/permutation)")
    v.add_argument("-i", "--input", required=True)
    v.add_argument("--codecs", help=f"comma-separated subset of {','.join(CODECS)}")
    v.add_argument("-q", "--queries")
    v.add_argument("--pairs", type=_positive, default=1000)
    v.add_argument("--rgb-docs", type=_positive, default=2000)
    v.add_argument("--zeta-k", type=_positive, default=2)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--json", action="store_true")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"fwdindex {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FwdIndexError, OSError) as exc:
        print(f"fwdindex {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
