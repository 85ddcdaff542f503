"""Size and scan-time comparison of every codec on a synthetic collection.

    python demos/compare_codecs.py --docs 20000 --queries 20
"""

import argparse

from fwdindex import bench, build_index, rgb_reorder, synth
from fwdindex.bench import ALL_CODECS

p = argparse.ArgumentParser()
p.add_argument("--preset", default="splade-like", choices=sorted(synth.PRESETS))
p.add_argument("--docs", type=int, default=20_000)
p.add_argument("--queries", type=int, default=20)
p.add_argument("--runs", type=int, default=3)
args = p.parse_args()

docs = synth.generate(synth.preset(args.preset, docs=args.docs))
queries = synth.generate(synth.preset(args.preset, queries=True, docs=args.queries, seed=7))
print(f"{len(docs)} documents, mean nnz {docs.nnzs.mean():.1f}; {len(queries)} queries\n")

perm = rgb_reorder(docs)
plain = {c: build_index(docs, c) for c in ALL_CODECS}
reordered = {c: build_index(docs, c, perm=perm) for c in ALL_CODECS}
reports = [bench.size_report(i) for i in plain.values()]
reports += [bench.size_report(i, reordered=True) for i in reordered.values()]
print(bench.render_sizes(reports), "\n")

# all codecs are timed query by query in turn, so drift hits them equally
scans = bench.scan_compare(plain, queries, runs=args.runs)
print(bench.render_scans(scans.values()))
base = scans["raw"].best_mean_s
for c, r in scans.items():
    print(f"{c:>9}: {r.best_mean_s / base:5.2f}x uncompressed")
