"""Symmetric-normalized bipartite adjacency and the propagation kernel.

Nodes are ordered users first, items after (item i sits at column
num_users + i).  The adjacency carries 1/sqrt(deg(u)*deg(i)) on each
train edge and nothing else: no self-loops, no user-user or item-item
entries.  Embedding views are laid out d x |N| (one column per node) so
repeated propagation composes without transposes in caller code.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import Dataset
from .errors import DataError


@dataclass(frozen=True)
class BipartiteGraph:
    """Training edges of the user-item graph, contiguous ids."""

    num_users: int
    num_items: int
    edges: list  # (user, item) pairs, train split only

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items


def graph_from_dataset(ds: Dataset) -> BipartiteGraph:
    """Build the message-passing graph from train edges only (no leakage)."""
    return BipartiteGraph(ds.num_users, ds.num_items, list(ds.train))


@dataclass(frozen=True)
class NormalizedAdjacency:
    """D^{-1/2} A D^{-1/2} over user+item nodes, CSR, float64.

    Immutable after construction; ``matrix.indptr`` / ``indices`` / ``data``
    expose the compressed-row layout with sorted column indices per row.
    """

    num_users: int
    num_items: int
    matrix: sp.csr_matrix

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items

    @property
    def row_offsets(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def values(self) -> np.ndarray:
        return self.matrix.data


def build_adjacency(g: BipartiteGraph) -> NormalizedAdjacency:
    """Assemble the normalized adjacency from a bipartite edge list.

    Degree-0 nodes are tolerated with a warning; their rows stay empty so
    their embeddings never propagate.
    """
    n = g.num_nodes
    if not g.edges:
        raise DataError("cannot build adjacency from an empty edge list")
    users = np.fromiter((e[0] for e in g.edges), dtype=np.int64, count=len(g.edges))
    items = np.fromiter((e[1] for e in g.edges), dtype=np.int64, count=len(g.edges))
    if users.min() < 0 or users.max() >= g.num_users or items.min() < 0 or items.max() >= g.num_items:
        raise DataError("edge references an id outside [0, num_users) x [0, num_items)")

    user_deg = np.bincount(users, minlength=g.num_users).astype(np.float64)
    item_deg = np.bincount(items, minlength=g.num_items).astype(np.float64)
    n_isolated = int((user_deg == 0).sum() + (item_deg == 0).sum())
    if n_isolated:
        warnings.warn(f"{n_isolated} isolated node(s): zero adjacency rows, embeddings never propagate")

    vals = 1.0 / np.sqrt(user_deg[users] * item_deg[items])
    rows = np.concatenate([users, g.num_users + items])
    cols = np.concatenate([g.num_users + items, users])
    mat = sp.csr_matrix((np.concatenate([vals, vals]), (rows, cols)), shape=(n, n), dtype=np.float64)
    mat.sort_indices()
    return NormalizedAdjacency(g.num_users, g.num_items, mat)


def propagate(adj: NormalizedAdjacency, view: np.ndarray) -> np.ndarray:
    """One round of neighbor aggregation: column n becomes the degree-
    normalized sum of its neighbors' columns.

    Equivalent to the dense product of the adjacency with the view
    (transposed layout).  Input and output are both d x |N|.
    """
    if view.ndim != 2 or view.shape[1] != adj.num_nodes:
        raise ValueError(f"view must be d x {adj.num_nodes}, got {view.shape}")
    return np.asarray((adj.matrix @ view.T).T, dtype=np.float64)


def dump_adjacency_tsv(adj: NormalizedAdjacency, path: str) -> None:
    """Debug dump as a coordinate list: row, col, value per line."""
    coo = adj.matrix.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r}\t{c}\t{v!r}\n")
