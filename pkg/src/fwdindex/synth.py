"""Synthetic sparse datasets with learned-sparse-retrieval-like statistics.

Component IDs follow a Zipf law over a random rank-to-ID assignment, so
frequent components are scattered across the ID space the way vocabulary
terms are. Values are log-normal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .core import SparseDataset
from .errors import ValidationError


class NnzDist(str, Enum):
    CONSTANT = "constant"
    POISSON = "poisson"
    LOGNORMAL = "lognormal"


class IdDist(str, Enum):
    UNIFORM = "uniform"
    ZIPF = "zipf"
    TWO_CLUSTER = "two_cluster"


@dataclass(frozen=True)
class GenSpec:
    docs: int
    dim: int = 30522
    nnz_mean: float = 119.0
    nnz_dist: NnzDist = NnzDist.LOGNORMAL
    nnz_sigma: float = 0.3
    id_dist: IdDist = IdDist.ZIPF
    zipf_s: float = 1.0
    value_mu: float = -0.7
    value_sigma: float = 0.7
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "nnz_dist", NnzDist(self.nnz_dist))
        object.__setattr__(self, "id_dist", IdDist(self.id_dist))
        if self.docs < 0:
            raise ValidationError("docs must be non-negative")
        if self.dim <= 0 or self.nnz_mean <= 0 or self.nnz_sigma <= 0 or self.value_sigma <= 0:
            raise ValidationError("dim, nnz_mean and the sigmas must be positive")
        limit = self.dim // 2 if self.id_dist == IdDist.TWO_CLUSTER else self.dim
        if self.nnz_mean >= limit:
            raise ValidationError(f"nnz_mean {self.nnz_mean} must be below {limit}")
        if self.zipf_s <= 0:
            raise ValidationError("zipf exponent must be positive")

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["nnz_dist"] = self.nnz_dist.value
        d["id_dist"] = self.id_dist.value
        return d


#: Document and query presets; nonzero means follow the MS MARCO statistics
#: of SPLADE (119 per document, 43 per query) and LiLsr (387 and 6).
PRESETS = {
    "splade-like": GenSpec(docs=10_000, nnz_mean=119.0),
    "lilsr-like": GenSpec(docs=10_000, nnz_mean=387.0),
}
QUERY_NNZ = {"splade-like": 43.0, "lilsr-like": 6.0}
QUERY_COUNT = 100


def preset(name: str, *, queries: bool = False, **overrides) -> GenSpec:
    try:
        spec = PRESETS[name]
    except KeyError:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    if queries:
        spec = replace(spec, nnz_mean=QUERY_NNZ[name], docs=QUERY_COUNT)
    return replace(spec, **overrides)


def _nnz_counts(spec: GenSpec, rng: np.random.Generator, limit: int) -> np.ndarray:
    n = spec.docs
    if spec.nnz_dist == NnzDist.CONSTANT:
        k = np.full(n, round(spec.nnz_mean))
    elif spec.nnz_dist == NnzDist.POISSON:
        k = rng.poisson(spec.nnz_mean, n)
    else:
        mu = math.log(spec.nnz_mean) - spec.nnz_sigma**2 / 2
        k = np.rint(rng.lognormal(mu, spec.nnz_sigma, n))
    return np.clip(k, 1, limit).astype(np.int64)


def _successive(rng, k: int, cdf: np.ndarray) -> np.ndarray:
    """k distinct ranks drawn one after another with probability ``cdf``,
    by drawing with replacement and keeping first occurrences."""
    got = np.zeros(0, dtype=np.int64)
    while True:
        draws = np.searchsorted(cdf, rng.random(2 * k + 16) * cdf[-1], side="right")
        pool = np.concatenate([got, np.minimum(draws, cdf.size - 1)])
        _, first = np.unique(pool, return_index=True)
        got = pool[np.sort(first)]
        if got.size >= k:
            return got[:k]


def generate(spec: GenSpec) -> SparseDataset:
    rng = np.random.default_rng(spec.seed)
    d = spec.dim
    two = spec.id_dist == IdDist.TWO_CLUSTER
    counts = _nnz_counts(spec, rng, (d // 2) if two else d)
    if spec.id_dist == IdDist.ZIPF:
        ranks = np.arange(1, d + 1, dtype=np.float64)
        cdf = np.cumsum(ranks**-spec.zipf_s)
        rank_to_id = rng.permutation(d)
    docs = []
    for k in counts:
        k = int(k)
        if spec.id_dist == IdDist.ZIPF:
            if k > d // 4:
                ids = rng.choice(d, k, replace=False, p=np.diff(cdf, prepend=0.0) / cdf[-1])
            else:
                ids = _successive(rng, k, cdf)
            ids = rank_to_id[ids]
        elif two:
            cluster = int(rng.integers(2))
            size = (d - cluster + 1) // 2
            ids = rng.choice(size, k, replace=False) * 2 + cluster
        else:
            ids = rng.choice(d, k, replace=False)
        docs.append(np.sort(ids))
    indptr = np.zeros(spec.docs + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    comps = np.concatenate(docs) if docs else np.zeros(0, np.int64)
    vals = rng.lognormal(spec.value_mu, spec.value_sigma, comps.size).astype(np.float32)
    return SparseDataset(d, indptr, comps, vals, validate=False)
