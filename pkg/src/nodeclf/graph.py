"""CSR graph storage and symmetric adjacency normalization.

Everything that propagates over edges runs through this module: a compressed
sparse row topology (``CsrGraph``), degree-based symmetric normalization with
or without added self-loops (``sym_norm_adj``), and sparse-times-dense
products (``spmm`` / ``propagate``).

Values are 64-bit floats throughout; graphs are immutable after construction
and safe to share across threads.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InputError


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class CsrGraph:
    """Sparse adjacency in CSR form, optionally with per-edge feature rows.

    ``row_ptr`` has length ``num_nodes + 1``; row ``i`` owns the arc slots
    ``row_ptr[i]:row_ptr[i+1]`` of ``col_idx``.  Within a row, column indices
    are strictly increasing (sorted, no duplicates).  Undirected graphs are
    stored as both directed arcs, with edge features duplicated per arc.
    """

    def __init__(
        self,
        num_nodes: int,
        row_ptr: np.ndarray,
        col_idx: np.ndarray,
        edge_values: np.ndarray | None = None,
        edge_feats: np.ndarray | None = None,
        validate: bool = True,
    ):
        self.num_nodes = int(num_nodes)
        self.row_ptr = _frozen(np.ascontiguousarray(row_ptr, dtype=np.int64))
        self.col_idx = _frozen(np.ascontiguousarray(col_idx, dtype=np.int64))
        self.edge_values = (
            None if edge_values is None
            else _frozen(np.ascontiguousarray(edge_values, dtype=np.float64))
        )
        self.edge_feats = (
            None if edge_feats is None
            else _frozen(np.ascontiguousarray(edge_feats, dtype=np.float64))
        )
        self._reverse_perm: np.ndarray | None = None
        if validate:
            self._validate()

    def _validate(self) -> None:
        n, rp, ci = self.num_nodes, self.row_ptr, self.col_idx
        if n < 1:
            raise InputError("graph needs at least one node")
        if rp.shape != (n + 1,):
            raise InputError(f"row_ptr must have length num_nodes+1, got {rp.shape}")
        if rp[0] != 0 or rp[-1] != ci.shape[0]:
            raise InputError("row_ptr must start at 0 and end at num_edges")
        if np.any(np.diff(rp) < 0):
            raise InputError("row_ptr must be non-decreasing")
        if ci.size and (ci.min() < 0 or ci.max() >= n):
            raise InputError("col_idx entry out of range")
        for i in range(n):
            row = ci[rp[i]:rp[i + 1]]
            if row.size > 1 and np.any(np.diff(row) <= 0):
                raise InputError(f"row {i} columns not strictly increasing")
        if self.edge_values is not None and self.edge_values.shape != (ci.shape[0],):
            raise InputError("edge_values length must equal num_edges")
        if self.edge_feats is not None:
            if self.edge_feats.ndim != 2 or self.edge_feats.shape[0] != ci.shape[0]:
                raise InputError("edge_feats row count must equal num_edges")

    @property
    def num_edges(self) -> int:
        return int(self.col_idx.shape[0])

    def degrees(self) -> np.ndarray:
        """Stored-arc count per row (out-degree; equals degree for symmetric graphs)."""
        return np.diff(self.row_ptr)

    def edge_rows(self) -> np.ndarray:
        """Row (destination) index of every stored arc, aligned with col_idx."""
        return np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees())

    def extract_edges(self) -> list[tuple[int, int]]:
        """All stored arcs as (row, col) pairs, in CSR order."""
        rows = self.edge_rows()
        return list(zip(rows.tolist(), self.col_idx.tolist()))

    def has_self_loop(self) -> bool:
        return bool(np.any(self.edge_rows() == self.col_idx))

    def reverse_edge_permutation(self) -> np.ndarray:
        """Permutation mapping each arc (i,j) to the index of its reverse (j,i).

        Only defined for symmetric topologies; raises InputError otherwise.
        The result is an involution and is cached.
        """
        if self._reverse_perm is None:
            rows = self.edge_rows()
            perm = np.lexsort((rows, self.col_idx))
            if (
                not np.array_equal(rows[perm], self.col_idx)
                or not np.array_equal(self.col_idx[perm], rows)
            ):
                raise InputError("graph topology is not symmetric")
            self._reverse_perm = _frozen(perm)
        return self._reverse_perm

    def is_symmetric(self) -> bool:
        try:
            self.reverse_edge_permutation()
            return True
        except InputError:
            return False

    def with_self_loops(self) -> "CsrGraph":
        """Copy of the graph with a self-loop on every node (exactly once).

        Pre-existing self-loops are kept as-is.  Added loops get zero edge
        features when features are present; per-edge values are dropped.
        """
        rows = self.edge_rows()
        missing = np.setdiff1d(
            np.arange(self.num_nodes, dtype=np.int64),
            rows[rows == self.col_idx],
        )
        new_rows = np.concatenate([rows, missing])
        new_cols = np.concatenate([self.col_idx, missing])
        feats = None
        if self.edge_feats is not None:
            pad = np.zeros((missing.size, self.edge_feats.shape[1]))
            feats = np.vstack([self.edge_feats, pad])
        order = np.lexsort((new_cols, new_rows))
        row_ptr = np.zeros(self.num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(new_rows, minlength=self.num_nodes), out=row_ptr[1:])
        return CsrGraph(
            self.num_nodes, row_ptr, new_cols[order],
            edge_feats=None if feats is None else feats[order],
        )


def build_csr(
    edges: Iterable[tuple[int, int]] | np.ndarray,
    num_nodes: int,
    *,
    symmetrize: bool = True,
    dedup: bool = True,
    add_self_loops: bool = False,
    edge_feats: np.ndarray | None = None,
) -> CsrGraph:
    """Assemble a CsrGraph from an edge list.

    With ``symmetrize`` every arc gets its reverse (features duplicated per
    arc); ``dedup`` collapses repeated (i,j) pairs keeping the first
    occurrence's features; ``add_self_loops`` guarantees one self-edge per
    node.  Duplicates surviving with ``dedup=False`` violate the CSR
    invariants and raise, with a dedicated message for the self-loop case.
    """
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                     dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InputError("edges must be (src, dst) pairs")
    if arr.size and (arr.min() < 0 or arr.max() >= num_nodes):
        raise InputError("edge endpoint out of range")

    feats = None
    if edge_feats is not None:
        feats = np.ascontiguousarray(edge_feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != arr.shape[0]:
            raise InputError("edge_feats rows must match edge count")

    rows, cols = arr[:, 0], arr[:, 1]
    if symmetrize:
        rows = np.concatenate([rows, arr[:, 1]])
        cols = np.concatenate([cols, arr[:, 0]])
        if feats is not None:
            feats = np.vstack([feats, feats])
    if add_self_loops:
        loops = np.arange(num_nodes, dtype=np.int64)
        rows = np.concatenate([rows, loops])
        cols = np.concatenate([cols, loops])
        if feats is not None:
            feats = np.vstack([feats, np.zeros((num_nodes, feats.shape[1]))])

    # stable sort keeps first occurrence first for dedup feature semantics
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    if feats is not None:
        feats = feats[order]

    if rows.size:
        dup = np.zeros(rows.shape[0], dtype=bool)
        dup[1:] = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
        if dup.any():
            if not dedup:
                if add_self_loops and np.any((rows[dup] == cols[dup])):
                    raise InputError(
                        "input already contains self-loops; adding self-loops "
                        "with dedup=False would duplicate them"
                    )
                raise InputError("duplicate edges present and dedup=False")
            keep = ~dup
            rows, cols = rows[keep], cols[keep]
            if feats is not None:
                feats = feats[keep]

    row_ptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=num_nodes), out=row_ptr[1:])
    return CsrGraph(num_nodes, row_ptr, cols, edge_feats=feats)


def degrees(g: CsrGraph) -> np.ndarray:
    """Degree vector d_i = row_ptr[i+1] - row_ptr[i]."""
    return g.degrees()


class NormalizedAdjacency:
    """A CSR topology with one scalar per stored edge.

    Produced by ``sym_norm_adj``; symmetric as a matrix when built from a
    symmetric graph, with all values finite and non-negative.
    """

    def __init__(self, structure: CsrGraph, values: np.ndarray):
        if values.shape != (structure.num_edges,):
            raise InputError("one value per stored edge required")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise InputError("normalized adjacency values must be finite and >= 0")
        self.structure = structure
        self.values = _frozen(np.ascontiguousarray(values, dtype=np.float64))

    @property
    def num_nodes(self) -> int:
        return self.structure.num_nodes

    def matmul(self, x: np.ndarray) -> np.ndarray:
        return propagate(self.structure, self.values, x)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.num_nodes, self.num_nodes))
        out[self.structure.edge_rows(), self.structure.col_idx] = self.values
        return out


def sym_norm_adj(g: CsrGraph, renormalize: bool = False) -> NormalizedAdjacency:
    """Symmetric normalization: value at (i,j) is 1/sqrt(d_i * d_j).

    With ``renormalize=True`` a self-loop is added to every node first and
    degrees are taken on the augmented graph, which bounds the spectrum and
    avoids the instabilities of stacking many plain propagation steps.
    Without it, rows of isolated nodes are left all-zero (no error).
    """
    if not g.is_symmetric():
        raise InputError("sym_norm_adj requires a symmetric graph")
    structure = g.with_self_loops() if renormalize else g
    deg = structure.degrees().astype(np.float64)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    values = inv_sqrt[structure.edge_rows()] * inv_sqrt[structure.col_idx]
    return NormalizedAdjacency(structure, values)


def propagate(structure: CsrGraph, values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Multiply a per-edge-weighted adjacency by a dense matrix.

    out[i] = sum over stored arcs (i,j) of value(i,j) * x[j].  Sequential
    per-row reduction: identical inputs give bit-identical outputs.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != structure.num_nodes:
        raise InputError(
            f"x must be ({structure.num_nodes}, F), got {x.shape}"
        )
    mat = sp.csr_matrix(
        (values, structure.col_idx, structure.row_ptr),
        shape=(structure.num_nodes, structure.num_nodes),
    )
    return mat @ x


def spmm(adj: NormalizedAdjacency, x: np.ndarray) -> np.ndarray:
    """Normalized-adjacency times dense features (the S @ X product)."""
    return adj.matmul(x)
