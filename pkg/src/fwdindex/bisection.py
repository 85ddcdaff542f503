"""Recursive graph bisection over component IDs.

Documents are query vertices and the distinct component IDs are data
vertices. Each level splits the current data vertices into two halves of
equal size and swaps vertices between them to lower the expected cost of
gap-coding every document's components, estimated as

    sum over documents v of  d1 * log2(n1 / (d1 + 1)) + d2 * log2(n2 / (d2 + 1))

where ``d1, d2`` are v's neighbours in each half and ``n1, n2`` the half sizes.
Each round computes move gains, pairs the best candidates of both halves and
swaps the pairs whose combined gain is positive. Gains ignore interactions
between swapped vertices, so a round that would raise the real cost is
retried with half as many swaps; the per-level cost never increases.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import SparseDataset
from .errors import FwdIndexError, ValidationError
from .formats import permutation_from_bytes, permutation_to_bytes, _read_file, _write_file

log = logging.getLogger(__name__)


class BisectionError(FwdIndexError):
    pass


# ---------------------------------------------------------------------------
# permutations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Permutation:
    """Bijection on component IDs; ``forward[old] == new``."""

    forward: np.ndarray

    def __post_init__(self):
        fwd = np.ascontiguousarray(self.forward, dtype=np.int64)
        d = fwd.shape[0]
        if fwd.ndim != 1 or (d and (fwd.min() < 0 or fwd.max() >= d)):
            raise ValidationError("permutation entries must lie in [0, d)")
        if np.bincount(fwd, minlength=d).max(initial=1) != 1:
            raise ValidationError("permutation is not a bijection")
        object.__setattr__(self, "forward", fwd)

    @classmethod
    def identity(cls, dim: int) -> "Permutation":
        return cls(np.arange(dim, dtype=np.int64))

    @property
    def dim(self) -> int:
        return int(self.forward.shape[0])

    def inverse(self) -> "Permutation":
        inv = np.empty_like(self.forward)
        inv[self.forward] = np.arange(self.dim)
        return Permutation(inv)

    def __eq__(self, other):
        if not isinstance(other, Permutation):
            return NotImplemented
        return np.array_equal(self.forward, other.forward)

    def save(self, path) -> None:
        _write_file(path, permutation_to_bytes(self.forward))

    @classmethod
    def load(cls, path) -> "Permutation":
        return cls(permutation_from_bytes(_read_file(path)))


def apply_permutation(ds: SparseDataset, perm: Permutation) -> SparseDataset:
    """Rename components through ``perm`` and re-sort each document."""
    if perm.dim != ds.dim:
        raise ValidationError(f"permutation over {perm.dim} IDs applied to dim {ds.dim}")
    newc = perm.forward[ds.components]
    doc_of = np.repeat(np.arange(len(ds)), ds.nnzs)
    order = np.lexsort((newc, doc_of))
    return SparseDataset(ds.dim, ds.indptr.copy(), newc[order], ds.values[order], validate=False)


# ---------------------------------------------------------------------------
# graph and cost model
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Documents (query vertices) against distinct component IDs (data vertices).

    ``adjacency`` is CSR over documents holding dense data-vertex indices;
    ``data_ids[i]`` is the original component ID of data vertex ``i``.
    """

    num_data: int
    indptr: np.ndarray
    adjacency: np.ndarray
    data_ids: np.ndarray

    @property
    def num_queries(self) -> int:
        return self.indptr.shape[0] - 1

    def neighbours(self, q: int) -> np.ndarray:
        return self.adjacency[self.indptr[q] : self.indptr[q + 1]]

    def degrees(self) -> np.ndarray:
        return np.bincount(self.adjacency, minlength=self.num_data)


def build_graph(ds: SparseDataset) -> BipartiteGraph:
    data_ids, local = np.unique(ds.components, return_inverse=True)
    return BipartiteGraph(len(data_ids), ds.indptr.copy(), local.astype(np.int64), data_ids)


def _log_term(deg: np.ndarray, n) -> np.ndarray:
    """deg * log2(n / (deg + 1)), with 0 where deg == 0."""
    deg = np.asarray(deg, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = deg * (np.log2(n) - np.log2(deg + 1.0))
    return np.where(deg > 0, t, 0.0)


def _edge_cost(edge_q, edge_side, nq, n1, n2) -> float:
    d1 = np.bincount(edge_q[edge_side == 0], minlength=nq)
    d2 = np.bincount(edge_q[edge_side == 1], minlength=nq)
    return float(_log_term(d1, n1).sum() + _log_term(d2, n2).sum())


def bisection_cost(side, graph: BipartiteGraph) -> float:
    """Log-gap cost of splitting data vertices by ``side`` (0 = first half, 1 = second)."""
    side = np.asarray(side, dtype=np.int64)
    if side.shape[0] != graph.num_data or (side.size and not np.isin(side, (0, 1)).all()):
        raise ValidationError("side must assign every data vertex to 0 or 1")
    n2 = int(side.sum())
    n1 = graph.num_data - n2
    edge_q = np.repeat(np.arange(graph.num_queries), np.diff(graph.indptr))
    return _edge_cost(edge_q, side[graph.adjacency], graph.num_queries, n1, n2)


def _gains(edge_q, edge_v, side, nq, nv, n1, n2) -> np.ndarray:
    es = side[edge_v]
    d1 = np.bincount(edge_q[es == 0], minlength=nq)
    d2 = np.bincount(edge_q[es == 1], minlength=nq)
    before = _log_term(d1, n1) + _log_term(d2, n2)
    after_from1 = _log_term(d1 - 1, n1) + _log_term(d2 + 1, n2)
    after_from2 = _log_term(d1 + 1, n1) + _log_term(d2 - 1, n2)
    delta = before[edge_q] - np.where(es == 0, after_from1[edge_q], after_from2[edge_q])
    return np.bincount(edge_v, weights=delta, minlength=nv)


def move_gains(side, graph: BipartiteGraph) -> np.ndarray:
    """Cost reduction from moving each data vertex alone to the other half,
    with half sizes held fixed (as they are under a swap)."""
    side = np.asarray(side, dtype=np.int64)
    n2 = int(side.sum())
    edge_q = np.repeat(np.arange(graph.num_queries), np.diff(graph.indptr))
    return _gains(edge_q, graph.adjacency, side, graph.num_queries, graph.num_data,
                  graph.num_data - n2, n2)


# ---------------------------------------------------------------------------
# recursive bisection
# ---------------------------------------------------------------------------


@dataclass
class BisectionConfig:
    max_iters_per_level: int = 20
    min_partition_size: int = 32
    max_depth: int | None = None
    seed: int = 0
    shuffle: bool = False

    def __post_init__(self):
        if self.max_iters_per_level < 1 or self.min_partition_size < 1:
            raise ValidationError("bisection iterations and partition size must be positive")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValidationError("max_depth must be positive")


@dataclass
class BisectionTrace:
    """Cost after each round, one list per bisected partition."""

    levels: list[tuple[int, list[float]]] = field(default_factory=list)

    def monotone(self, rtol: float = 1e-12) -> bool:
        for _, costs in self.levels:
            for a, b in zip(costs, costs[1:]):
                if b > a + rtol * max(1.0, abs(a)):
                    return False
        return True


class _Bisector:
    def __init__(self, graph: BipartiteGraph, cfg: BisectionConfig, trace: BisectionTrace):
        self.cfg = cfg
        self.trace = trace
        self.rng = np.random.default_rng(cfg.seed)
        # data vertex -> documents
        order = np.argsort(graph.adjacency, kind="stable")
        self.t_adj = np.repeat(np.arange(graph.num_queries), np.diff(graph.indptr))[order]
        self.t_deg = np.bincount(graph.adjacency, minlength=graph.num_data)
        self.t_ptr = np.zeros(graph.num_data + 1, dtype=np.int64)
        np.cumsum(self.t_deg, out=self.t_ptr[1:])
        self.max_depth = cfg.max_depth or max(1, math.ceil(math.log2(max(graph.num_data, 2))))

    def run(self, vertices: np.ndarray) -> np.ndarray:
        # explicit stack keeps left-to-right leaf order without recursion limits
        out = []
        stack = [(vertices, 0)]
        while stack:
            verts, depth = stack.pop()
            if verts.size <= self.cfg.min_partition_size or depth >= self.max_depth:
                out.append(np.sort(verts))
                continue
            left, right = self.split(verts, depth)
            stack.append((right, depth + 1))
            stack.append((left, depth + 1))
        return np.concatenate(out) if out else vertices

    def _edges(self, verts):
        counts = self.t_deg[verts]
        starts = self.t_ptr[verts]
        total = int(counts.sum())
        rank = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        edge_q_global = self.t_adj[np.repeat(starts, counts) + rank]
        edge_v = np.repeat(np.arange(verts.size), counts)
        qs, edge_q = np.unique(edge_q_global, return_inverse=True)
        return edge_q, edge_v, qs.size

    def initial_side(self, verts, deg):
        n = verts.size
        if self.cfg.shuffle:
            order = self.rng.permutation(n)
        else:
            order = np.lexsort((verts, -deg))
        side = np.empty(n, dtype=np.int64)
        side[order] = np.arange(n) % 2
        return side

    def split(self, verts, depth):
        edge_q, edge_v, nq = self._edges(verts)
        nv = verts.size
        deg = np.bincount(edge_v, minlength=nv)
        side = self.initial_side(verts, deg)
        n2 = int(side.sum())
        n1 = nv - n2
        cost = _edge_cost(edge_q, side[edge_v], nq, n1, n2)
        costs = [cost]
        ids = np.arange(nv)
        for _ in range(self.cfg.max_iters_per_level):
            g = _gains(edge_q, edge_v, side, nq, nv, n1, n2)
            left = ids[side == 0]
            right = ids[side == 1]
            left = left[np.lexsort((left, -g[left]))]
            right = right[np.lexsort((right, -g[right]))]
            m = min(left.size, right.size)
            pair_gain = g[left[:m]] + g[right[:m]]
            npairs = int(np.argmin(pair_gain > 0)) if (pair_gain <= 0).any() else m
            new_cost = cost
            while npairs > 0:
                trial = side.copy()
                trial[left[:npairs]] = 1
                trial[right[:npairs]] = 0
                new_cost = _edge_cost(edge_q, trial[edge_v], nq, n1, n2)
                if new_cost < cost:
                    side = trial
                    break
                npairs //= 2
            if npairs == 0:
                break
            if new_cost > cost:
                raise BisectionError(f"cost increased from {cost} to {new_cost}")
            cost = new_cost
            costs.append(cost)
        self.trace.levels.append((depth, costs))
        return verts[side == 0], verts[side == 1]


def rgb_reorder(ds: SparseDataset, cfg: BisectionConfig | None = None,
                trace: BisectionTrace | None = None) -> Permutation:
    """Permutation that places components co-occurring in documents close together."""
    cfg = cfg or BisectionConfig()
    trace = trace if trace is not None else BisectionTrace()
    if len(ds) == 0:
        raise ValidationError("cannot reorder an empty dataset")
    graph = build_graph(ds)
    order = _Bisector(graph, cfg, trace).run(np.arange(graph.num_data))
    observed = graph.data_ids[order]
    seen = np.zeros(ds.dim, dtype=bool)
    seen[graph.data_ids] = True
    new_order = np.concatenate([observed, np.flatnonzero(~seen)])
    forward = np.empty(ds.dim, dtype=np.int64)
    forward[new_order] = np.arange(ds.dim)
    log.debug("bisection: %d partitions refined", len(trace.levels))
    return Permutation(forward)
