import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from fwdindex import SparseDataset, SparseVector

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DIM = 1 << 16


@st.composite
def ascending_ids(draw, max_size=300, dim=DIM):
    """Strictly increasing IDs in [0, dim), mixing tiny and huge gaps."""
    n = draw(st.integers(0, max_size))
    ids = draw(st.lists(st.integers(0, dim - 1), min_size=n, max_size=n, unique=True))
    return np.array(sorted(ids), dtype=np.int64)


@st.composite
def gap_streams(draw, max_size=200, dim=DIM):
    return _gaps(draw(ascending_ids(max_size, dim)))


def _gaps(ids):
    if ids.size == 0:
        return ids
    return np.concatenate([ids[:1], np.diff(ids)])


@st.composite
def sparse_vectors(draw, max_size=60, dim=DIM):
    ids = draw(ascending_ids(max_size, dim))
    vals = draw(st.lists(st.floats(0, 100, allow_nan=False, width=32), min_size=ids.size, max_size=ids.size))
    return SparseVector(ids, np.array(vals, dtype=np.float32))


@st.composite
def datasets(draw, max_docs=12, max_nnz=40, dim=DIM):
    docs = draw(st.lists(sparse_vectors(max_nnz, dim), max_size=max_docs))
    return SparseDataset.from_vectors(dim, docs)


def adversarial_docs(dim=DIM):
    """Edge-case documents: group-boundary sizes, maximal gap, last ID."""
    rng = np.random.default_rng(5)
    out = []
    for nnz in (0, 1, 7, 8, 9, 15, 16):
        out.append(np.sort(rng.choice(dim - 1, nnz, replace=False)))
    out.append(np.array([0, 65535]))
    out.append(np.array([65535]))
    out.append(np.array([0]))
    out.append(np.array([dim - 1]))
    out.append(np.arange(dim - 17, dim))
    out.append(np.array([1, 2, 3, 4, 5, 6, 7, 300 + 8, 65535]))
    out.append(np.concatenate([np.arange(8) * 256, [65535]]))
    # the fixed 65535 cases only fit when dim exceeds it
    return [np.asarray(c, dtype=np.int64) for c in out if len(c) == 0 or max(c) < dim]


def adversarial_dataset(dim=DIM):
    docs = [SparseVector(c, np.linspace(0.1, 3.0, c.size, dtype=np.float32)) for c in adversarial_docs(dim)]
    return SparseDataset.from_vectors(dim, docs)


@pytest.fixture(scope="session")
def splade_small():
    from fwdindex import synth
    return synth.generate(synth.preset("splade-like", docs=1500))


@pytest.fixture(scope="session")
def splade_queries():
    from fwdindex import synth
    return synth.generate(synth.preset("splade-like", queries=True, docs=30, seed=99))


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, name, ok, detail)`` prints it,
    keeps it for the end-of-run summary and asserts ``ok``."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(n, name, ok, detail=""):
        line = f"criterion {n} {'PASS' if ok else 'FAIL'}: {name}" + (f" ({detail})" if detail else "")
        print(line)
        lines.append(line)
        assert ok, line

    return record


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
