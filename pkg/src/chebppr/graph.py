"""Immutable undirected weighted graphs, snapshot deltas and vector helpers.

Node ids are dense integers ``0..N-1``. Vectors are plain ``numpy`` arrays of
length ``N``; isolated nodes have degree zero and, by convention, inverse
degree zero as well.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp

# weights whose magnitude drops below this fraction of the operands are treated
# as exact cancellations (removed edges)
_CANCEL_RTOL = 1e-12


class GraphError(ValueError):
    """Invalid graph construction or delta application."""


def _inverse(values: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values, dtype=float)
    nz = values > 0
    out[nz] = 1.0 / values[nz]
    return out


@dataclass(frozen=True, eq=False)
class Graph:
    """Symmetric sparse adjacency with cached degrees.

    ``adjacency`` is a canonical CSR matrix (sorted indices, no explicit
    zeros). Row ``u`` holds the neighbors of ``u`` and the edge weights.
    """

    num_nodes: int
    adjacency: sp.csr_matrix
    degrees: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def inv_degrees(self) -> np.ndarray:
        if "inv_degrees" not in self._cache:
            self._cache["inv_degrees"] = _inverse(self.degrees)
        return self._cache["inv_degrees"]

    @property
    def edge_counts(self) -> np.ndarray:
        """Number of incident edges per node (a self-loop counts once)."""
        if "edge_counts" not in self._cache:
            self._cache["edge_counts"] = np.diff(self.adjacency.indptr).astype(np.int64)
        return self._cache["edge_counts"]

    @property
    def num_edges(self) -> int:
        """Undirected edge count, self-loops included once."""
        loops = int(np.count_nonzero(self.adjacency.diagonal()))
        return (self.adjacency.nnz - loops) // 2 + loops

    @property
    def isolated(self) -> np.ndarray:
        return self.degrees == 0

    def neighbors(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.adjacency.indptr[u], self.adjacency.indptr[u + 1]
        return self.adjacency.indices[lo:hi], self.adjacency.data[lo:hi]

    def neighborhood(self, nodes: Iterable[int]) -> np.ndarray:
        """Sorted union of ``nodes`` and all their neighbors."""
        nodes = np.unique(np.asarray(list(nodes), dtype=np.int64))
        if nodes.size == 0:
            return nodes
        rows = self.adjacency[nodes]
        return np.union1d(nodes, rows.indices)

    def edges(self) -> list[tuple[int, int, float]]:
        """Edges as ``(u, v, w)`` with ``u <= v``."""
        upper = sp.triu(self.adjacency, format="coo")
        return [(int(u), int(v), float(w)) for u, v, w in zip(upper.row, upper.col, upper.data)]

    def to_dense(self) -> np.ndarray:
        return self.adjacency.toarray()

    def same_as(self, other: "Graph") -> bool:
        """Exact equality of node count, edge set and weights."""
        if self.num_nodes != other.num_nodes:
            return False
        diff = self.adjacency != other.adjacency
        return diff.nnz == 0

    def recompute_degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()


def _from_coo(rows, cols, vals, num_nodes: int) -> sp.csr_matrix:
    mat = sp.coo_matrix(
        (np.asarray(vals, dtype=float), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(num_nodes, num_nodes),
    ).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def _check_ids(u: int, v: int, num_nodes: int) -> None:
    if not (0 <= u < num_nodes and 0 <= v < num_nodes):
        raise GraphError(f"edge ({u}, {v}) has node id outside [0, {num_nodes})")


def build_graph(edges: Iterable[tuple[int, int, float]], num_nodes: int) -> Graph:
    """Build an undirected graph; repeated edges are merged by summing weights."""
    if num_nodes < 0:
        raise GraphError("num_nodes must be nonnegative")
    rows, cols, vals = [], [], []
    for u, v, w in edges:
        u, v, w = int(u), int(v), float(w)
        _check_ids(u, v, num_nodes)
        if w < 0:
            raise GraphError(f"edge ({u}, {v}) has negative weight {w}")
        if w == 0:
            continue
        rows.append(u)
        cols.append(v)
        vals.append(w)
        if u != v:
            rows.append(v)
            cols.append(u)
            vals.append(w)
    adj = _from_coo(rows, cols, vals, num_nodes)
    adj.eliminate_zeros()
    degrees = np.asarray(adj.sum(axis=1)).ravel()
    return Graph(num_nodes, adj, degrees)


@dataclass(frozen=True)
class GraphDelta:
    """Signed edge-weight changes between two snapshots."""

    changes: tuple[tuple[int, int, float], ...]
    touched: frozenset[int]

    @classmethod
    def from_changes(cls, changes: Iterable[tuple[int, int, float]]) -> "GraphDelta":
        """Aggregate per undirected pair; pairs whose changes cancel are dropped."""
        acc: dict[tuple[int, int], float] = {}
        for u, v, dw in changes:
            key = (min(int(u), int(v)), max(int(u), int(v)))
            acc[key] = acc.get(key, 0.0) + float(dw)
        items = tuple((u, v, dw) for (u, v), dw in sorted(acc.items()) if dw != 0.0)
        touched = frozenset(x for u, v, _ in items for x in (u, v))
        return cls(items, touched)

    def negated(self) -> "GraphDelta":
        return GraphDelta(tuple((u, v, -dw) for u, v, dw in self.changes), self.touched)

    def __len__(self) -> int:
        return len(self.changes)

    @property
    def added_weight(self) -> float:
        return sum(dw for _, _, dw in self.changes)


def apply_delta(g: Graph, delta: GraphDelta) -> Graph:
    """Return the evolved graph; ``g`` itself is left untouched."""
    if not delta.changes:
        return g
    merged: dict[tuple[int, int], float] = {}
    for u, v, dw in delta.changes:
        _check_ids(u, v, g.num_nodes)
        key = (min(u, v), max(u, v))
        merged[key] = merged.get(key, 0.0) + float(dw)

    rows, cols, vals = [], [], []
    for (u, v), dw in merged.items():
        old = float(g.adjacency[u, v])
        new_w = old + dw
        if abs(new_w) <= _CANCEL_RTOL * (old + abs(dw)):
            new_w = 0.0
        elif new_w < 0:
            raise GraphError(f"delta drives weight of edge ({u}, {v}) below zero ({new_w})")
        step = new_w - old
        rows.append(u)
        cols.append(v)
        vals.append(step)
        if u != v:
            rows.append(v)
            cols.append(u)
            vals.append(step)
    new = (g.adjacency + _from_coo(rows, cols, vals, g.num_nodes)).tocsr()
    new.eliminate_zeros()
    new.sort_indices()

    degrees = g.degrees.copy()
    touched = np.fromiter(sorted(delta.touched), dtype=np.int64)
    degrees[touched] = np.asarray(new[touched].sum(axis=1)).ravel()
    return Graph(g.num_nodes, new, degrees)


def transition_transpose_apply(g: Graph, x: np.ndarray) -> np.ndarray:
    """Compute ``P^T x = W D^{-1} x`` with zero inverse degree on isolated nodes."""
    x = np.asarray(x, dtype=float)
    if x.shape != (g.num_nodes,):
        raise GraphError(f"vector of shape {x.shape} does not match graph with {g.num_nodes} nodes")
    return g.adjacency @ (x * g.inv_degrees)


def transition_transpose_matrix(g: Graph) -> sp.csr_matrix:
    if "PT" not in g._cache:
        g._cache["PT"] = (g.adjacency @ sp.diags(g.inv_degrees)).tocsr()
    return g._cache["PT"]


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b||_2 / ||b||_2``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    nb = np.linalg.norm(b)
    if nb == 0:
        raise ValueError("reference vector is all zeros")
    return float(np.linalg.norm(a - b) / nb)


def support(x: np.ndarray, tau: float = 0.0) -> np.ndarray:
    """Indices with ``|x_u| > tau``."""
    return np.flatnonzero(np.abs(x) > tau)


def indicator(num_nodes: int, node: int) -> np.ndarray:
    y = np.zeros(num_nodes)
    y[node] = 1.0
    return y
