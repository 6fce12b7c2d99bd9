"""Spanning trees over the active-block graph and tree-cut partitions.

A partition state is a spanning tree plus a set of cut edges; removing the
cuts leaves k connected components, which are the clusters. Cluster labels
are canonical: components are numbered 1..k by their smallest contained
block index, so equal partitions always have equal label vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import minimum_spanning_tree as _csgraph_mst

from .grid import BlockGrid

__all__ = [
    "SpanningTree",
    "TreePartitionState",
    "prim_mst",
    "sample_rst",
    "sample_edge_weights",
    "induce_partition",
    "resample_tree_given_partition",
    "classify_tree_edges",
]


@dataclass(frozen=True)
class SpanningTree:
    """Tree over all active blocks; edges are (a, b) index pairs with a < b."""

    edges: np.ndarray  # (M-1, 2) int

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def neighbor_lists(self, n_nodes: int) -> list:
        """Per-node list of (neighbor, tree_edge_id)."""
        nbrs: list = [[] for _ in range(n_nodes)]
        for eid, (a, b) in enumerate(self.edges):
            nbrs[a].append((int(b), eid))
            nbrs[b].append((int(a), eid))
        return nbrs


@dataclass
class TreePartitionState:
    """Spanning tree + cut edges + the induced canonical labeling.

    cut_edges : sorted tuple of tree-edge ids (k-1 of them)
    labels    : (M,) int array with values 1..k
    """

    tree: SpanningTree
    cut_edges: tuple
    labels: np.ndarray
    k: int

    def copy(self) -> "TreePartitionState":
        return TreePartitionState(self.tree, self.cut_edges, self.labels.copy(), self.k)


def sample_edge_weights(grid: BlockGrid, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. Unif(0,1) weight per adjacency edge, indexed by edge id."""
    return rng.random(grid.n_edges)


def prim_mst(grid: BlockGrid, weights: np.ndarray) -> SpanningTree:
    """Minimum spanning tree of the active graph by lazy Prim, O(E log V).

    Ties are broken by edge id, so the result is unique and deterministic
    even under (measure-zero) weight collisions.
    """
    import heapq

    M = grid.n_blocks
    if M == 1:
        return SpanningTree(np.empty((0, 2), dtype=np.int64))
    w = np.asarray(weights, dtype=float)
    if w.shape != (grid.n_edges,):
        raise ValueError("weights must cover every adjacency edge")
    nbrs = grid.neighbor_lists()
    in_tree = np.zeros(M, dtype=bool)
    in_tree[0] = True
    heap = [(w[eid], eid, v) for v, eid in nbrs[0]]
    heapq.heapify(heap)
    edges = []
    while heap and len(edges) < M - 1:
        _, eid, v = heapq.heappop(heap)
        if in_tree[v]:
            continue
        in_tree[v] = True
        edges.append(eid)
        for u, eid2 in nbrs[v]:
            if not in_tree[u]:
                heapq.heappush(heap, (w[eid2], eid2, u))
    if len(edges) < M - 1:
        raise ValueError("active-block graph is disconnected")
    edges.sort()
    return SpanningTree(grid.adjacency[edges])


def _mst_scipy(grid: BlockGrid, weights: np.ndarray) -> SpanningTree:
    """Same MST via scipy's compiled solver (hot path for large grids)."""
    M = grid.n_blocks
    if M == 1:
        return SpanningTree(np.empty((0, 2), dtype=np.int64))
    a, b = grid.adjacency[:, 0], grid.adjacency[:, 1]
    # +1 keeps every stored entry nonzero (csr drops exact zeros) and cannot
    # change the MST: all spanning trees gain the same (M-1) offset
    mat = csr_matrix((np.asarray(weights, dtype=float) + 1.0, (a, b)), shape=(M, M))
    tree = _csgraph_mst(mat).tocoo()
    if tree.nnz < M - 1:
        raise ValueError("active-block graph is disconnected")
    ta = np.minimum(tree.row, tree.col)
    tb = np.maximum(tree.row, tree.col)
    order = np.lexsort((tb, ta))
    return SpanningTree(np.column_stack((ta[order], tb[order])).astype(np.int64))


def sample_rst(grid: BlockGrid, rng: np.random.Generator) -> SpanningTree:
    """Draw a random minimum spanning tree: uniform weights, then Prim.

    Every spanning tree of the graph has positive probability.
    """
    return prim_mst(grid, sample_edge_weights(grid, rng))


def _canonical_labels(tree: SpanningTree, cut_edges, n_nodes: int) -> np.ndarray:
    """Component labels 1..k, components ordered by smallest block index."""
    cut = set(int(e) for e in cut_edges)
    nbrs: list = [[] for _ in range(n_nodes)]
    for eid, (a, b) in enumerate(tree.edges):
        if eid in cut:
            continue
        nbrs[a].append(int(b))
        nbrs[b].append(int(a))
    labels = np.zeros(n_nodes, dtype=np.int64)
    next_label = 0
    for root in range(n_nodes):  # ascending roots => canonical numbering
        if labels[root]:
            continue
        next_label += 1
        stack = [root]
        labels[root] = next_label
        while stack:
            u = stack.pop()
            for v in nbrs[u]:
                if not labels[v]:
                    labels[v] = next_label
                    stack.append(v)
    return labels


def induce_partition(tree: SpanningTree, cut_edges, n_nodes: int | None = None) -> TreePartitionState:
    """Partition obtained by deleting ``cut_edges`` from the tree."""
    if n_nodes is None:
        n_nodes = tree.n_edges + 1
    cut = tuple(sorted(int(e) for e in cut_edges))
    if any(e < 0 or e >= tree.n_edges for e in cut) or len(set(cut)) != len(cut):
        raise ValueError("cut edges must be distinct tree-edge ids")
    labels = _canonical_labels(tree, cut, n_nodes)
    return TreePartitionState(tree=tree, cut_edges=cut, labels=labels, k=len(cut) + 1)


def _crossing_edges(edges: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return np.nonzero(labels[edges[:, 0]] != labels[edges[:, 1]])[0]


def resample_tree_given_partition(
    grid: BlockGrid,
    state: TreePartitionState,
    rng: np.random.Generator,
    engine: str = "scipy",
) -> TreePartitionState:
    """Redraw the spanning tree without disturbing the partition.

    Weights are drawn on *all* adjacency edges, Unif(0, 1/2) within clusters
    and Unif(1/2, 1) across; the MST of such weights always induces the
    current partition because every cluster is spanned by cheap edges before
    any crossing edge enters. The returned state has identical labels and k.
    """
    labels = state.labels
    within = labels[grid.adjacency[:, 0]] == labels[grid.adjacency[:, 1]]
    w = rng.random(grid.n_edges)
    w = np.where(within, 0.5 * w, 0.5 + 0.5 * w)
    tree = _mst_scipy(grid, w) if engine == "scipy" else prim_mst(grid, w)
    cut = tuple(int(e) for e in _crossing_edges(tree.edges, labels))
    return TreePartitionState(tree=tree, cut_edges=cut, labels=labels.copy(), k=state.k)


def classify_tree_edges(state: TreePartitionState):
    """(within_edges, between_edges) as tree-edge id arrays.

    Within edges are birth candidates; between edges (= the cut set) are
    death candidates. The two always partition the tree's edge ids.
    """
    between = np.array(sorted(state.cut_edges), dtype=np.int64)
    mask = np.ones(state.tree.n_edges, dtype=bool)
    mask[between] = False
    within = np.nonzero(mask)[0]
    return within, between
