import numpy as np
import pytest

from nodeclf.graph import build_csr


def random_symmetric_graph(rng, n, avg_degree=3.0, ensure_connected=True):
    """Random symmetric graph; a ring keeps every node non-isolated."""
    edges = [(i, (i + 1) % n) for i in range(n)] if ensure_connected else []
    target = int(n * avg_degree / 2)
    while len(edges) < target:
        i, j = rng.integers(0, n, size=2)
        if i != j:
            edges.append((int(i), int(j)))
    return build_csr(edges, n, symmetrize=True, dedup=True)


def dense_from_adjacency(adj):
    """Independent densification: plain python loop over CSR rows."""
    n = adj.num_nodes
    out = np.zeros((n, n))
    rp, ci = adj.structure.row_ptr, adj.structure.col_idx
    for i in range(n):
        for k in range(rp[i], rp[i + 1]):
            out[i, ci[k]] = adj.values[k]
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
