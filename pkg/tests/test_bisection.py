import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import datasets
from fwdindex import (
    BisectionConfig,
    BisectionTrace,
    Permutation,
    SparseDataset,
    SparseVector,
    apply_permutation,
    bisection_cost,
    build_graph,
    build_index,
    rgb_reorder,
    synth,
)
from fwdindex.bisection import BipartiteGraph, move_gains
from fwdindex.errors import ValidationError


def test_graph_example():
    ds = SparseDataset.from_vectors(10, [SparseVector([1, 5], [1, 1]), SparseVector([5, 9], [1, 1])])
    g = build_graph(ds)
    assert g.num_data == 3 and g.num_queries == 2
    assert g.data_ids.tolist() == [1, 5, 9]
    assert g.degrees()[g.data_ids.tolist().index(5)] == 2
    assert g.neighbours(1).tolist() == [1, 2]


def test_empty_graph():
    g = build_graph(SparseDataset.empty(10))
    assert g.num_data == 0 and g.num_queries == 0


@given(datasets(dim=500))
def test_graph_edge_count(ds):
    g = build_graph(ds)
    assert g.adjacency.size == ds.total_nnz
    assert g.num_queries == len(ds)
    assert np.array_equal(g.data_ids[g.adjacency], ds.components)


def test_cost_examples():
    assert bisection_cost([0, 1], BipartiteGraph(2, np.array([0, 0]), np.zeros(0, np.int64), np.arange(2))) == 0.0
    # four neighbours, all on side 1 (second half) of size 4
    side = np.array([1, 1, 1, 1, 0, 0, 0, 0])
    g = BipartiteGraph(8, np.array([0, 4]), np.arange(4), np.arange(8))
    assert bisection_cost(side, g) == pytest.approx(4 * math.log2(4 / 5))
    assert bisection_cost(side, g) == pytest.approx(-1.2877, abs=1e-4)
    with pytest.raises(ValidationError):
        bisection_cost([0, 2, 1, 1, 0, 0, 0, 0], g)


def test_swap_changes_cost_by_sum_of_gains():
    rng = np.random.default_rng(0)
    for trial in range(200):
        nq, nv = int(rng.integers(2, 12)), 2 * int(rng.integers(2, 10))
        adj = [np.sort(rng.choice(nv, int(rng.integers(0, nv // 2 + 1)), replace=False)) for _ in range(nq)]
        indptr = np.concatenate([[0], np.cumsum([a.size for a in adj])])
        g = BipartiteGraph(nv, indptr, np.concatenate(adj).astype(np.int64), np.arange(nv))
        side = np.zeros(nv, np.int64)
        side[rng.permutation(nv)[: nv // 2]] = 1
        gains = move_gains(side, g)
        u = int(rng.choice(np.flatnonzero(side == 0)))
        v = int(rng.choice(np.flatnonzero(side == 1)))
        shared = any(u in a and v in a for a in adj)
        swapped = side.copy()
        swapped[u], swapped[v] = 1, 0
        delta = bisection_cost(side, g) - bisection_cost(swapped, g)
        if not shared:
            assert delta == pytest.approx(gains[u] + gains[v], abs=1e-9)


def test_monotone_cost_on_every_level():
    ds = synth.generate(synth.preset("splade-like", docs=800))
    trace = BisectionTrace()
    rgb_reorder(ds, BisectionConfig(), trace)
    assert trace.levels and trace.monotone()
    assert any(len(c) > 1 for _, c in trace.levels)


def test_two_clusters_become_contiguous():
    rng = np.random.default_rng(1)
    d = 400
    docs = []
    for i in range(200):
        parity = i % 2
        ids = np.sort(rng.choice(d // 2, 12, replace=False)) * 2 + parity
        docs.append(SparseVector(ids, np.ones(12)))
    ds = SparseDataset.from_vectors(d, docs)
    perm = rgb_reorder(ds, BisectionConfig(min_partition_size=8))
    g = build_graph(ds)
    even = perm.forward[g.data_ids[g.data_ids % 2 == 0]]
    odd = perm.forward[g.data_ids[g.data_ids % 2 == 1]]
    assert even.max() < odd.min() or odd.max() < even.min()
    before = build_index(ds, "gamma").bits_per_component
    after = build_index(ds, "gamma", perm=perm).bits_per_component
    assert after < before

    def log_gap_cost(data):
        total = 0.0
        for v in data:
            gaps = np.diff(v.components, prepend=-1)
            total += float(np.log2(gaps).sum())
        return total

    assert log_gap_cost(apply_permutation(ds, perm)) < log_gap_cost(ds)


def test_single_document_never_gets_worse():
    ds = SparseDataset.from_vectors(30522, [SparseVector([5, 900, 3000, 17000, 30000], np.ones(5))])
    perm = rgb_reorder(ds)
    assert build_index(ds, "gamma", perm=perm).bits_per_component <= build_index(ds, "gamma").bits_per_component


def test_unseen_ids_keep_order_at_the_end():
    ds = SparseDataset.from_vectors(20, [SparseVector([3, 7, 12], np.ones(3)), SparseVector([7, 15], np.ones(2))])
    perm = rgb_reorder(ds)
    seen = [3, 7, 12, 15]
    assert sorted(perm.forward[seen].tolist()) == [0, 1, 2, 3]
    unseen = [i for i in range(20) if i not in seen]
    assert perm.forward[unseen].tolist() == list(range(4, 20))


def test_permutation_is_deterministic():
    ds = synth.generate(synth.preset("splade-like", docs=300))
    assert rgb_reorder(ds) == rgb_reorder(ds)
    shuffled = rgb_reorder(ds, BisectionConfig(shuffle=True, seed=3))
    assert np.bincount(shuffled.forward).max() == 1


def test_reorder_rejects_empty():
    with pytest.raises(ValidationError):
        rgb_reorder(SparseDataset.empty(10))


def test_config_validation():
    with pytest.raises(ValidationError):
        BisectionConfig(max_iters_per_level=0)
    with pytest.raises(ValidationError):
        BisectionConfig(min_partition_size=0)
    with pytest.raises(ValidationError):
        BisectionConfig(max_depth=0)


def test_apply_permutation_examples():
    ds = SparseDataset.from_vectors(2, [SparseVector([0, 1], [1.0, 2.0])])
    rev = Permutation(np.array([1, 0]))
    assert apply_permutation(ds, rev)[0] == SparseVector([0, 1], [2.0, 1.0])
    assert apply_permutation(ds, Permutation.identity(2)) == ds
    with pytest.raises(ValidationError):
        apply_permutation(ds, Permutation.identity(3))


@given(datasets(dim=300), st.integers(0, 2**32 - 1))
def test_joint_permutation_preserves_dots(ds, seed):
    rng = np.random.default_rng(seed)
    perm = Permutation(rng.permutation(ds.dim))
    moved = apply_permutation(ds, perm)
    assert apply_permutation(moved, perm.inverse()) == ds
    q = SparseVector(np.sort(rng.choice(ds.dim, 20, replace=False)), rng.random(20))
    qm = apply_permutation(SparseDataset.from_vectors(ds.dim, [q]), perm)[0]
    for a, b in zip(ds, moved):
        assert a.dot(q) == pytest.approx(b.dot(qm), rel=1e-12, abs=0)


def test_two_cluster_generator_gamma_gain():
    ds = synth.generate(synth.GenSpec(docs=2000, dim=4000, nnz_mean=30, id_dist="two_cluster", seed=3))
    perm = rgb_reorder(ds)
    assert build_index(ds, "gamma", perm=perm).bits_per_component < build_index(ds, "gamma").bits_per_component
