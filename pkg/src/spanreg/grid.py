"""Block discretization of the unit square and dataset ingestion.

The domain [0,1]^2 is cut into K x K axis-aligned cells. Cells holding at
least one observation become *active blocks*; the mesh adjacency over active
blocks (4-neighborhood, shared full side) is the graph everything downstream
works on. Points sitting exactly on a grid line belong to the higher-index
cell (floor rule), clamped at the domain edge.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dataset",
    "BlockGrid",
    "GridConnectivityError",
    "DataError",
    "build_grid",
    "block_of_point",
    "load_dataset_csv",
]


class DataError(ValueError):
    """Malformed or out-of-domain input data."""


class GridConnectivityError(RuntimeError):
    """Active-block graph is disconnected.

    Carries ``component_sizes`` (largest first) so callers can report or
    decide to refit on the largest component.
    """

    def __init__(self, component_sizes):
        self.component_sizes = list(component_sizes)
        super().__init__(
            "active-block graph is disconnected: %d components with sizes %s "
            "(pass on_disconnected='largest' to fit the largest component)"
            % (len(self.component_sizes), self.component_sizes)
        )


@dataclass(frozen=True)
class Dataset:
    """Observed spatial regression data.

    locations : (n, 2) array of (s_h, s_v) in [0,1]^2
    x         : (n, d) covariate matrix (first column may be an intercept)
    y         : (n,) responses
    """

    locations: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float)
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if loc.ndim != 2 or loc.shape[1] != 2:
            raise DataError("locations must be an (n, 2) array")
        if x.ndim != 2 or y.ndim != 1:
            raise DataError("x must be (n, d) and y must be (n,)")
        n = loc.shape[0]
        if n == 0:
            raise DataError("empty dataset")
        if x.shape[0] != n or y.shape[0] != n:
            raise DataError("locations, x, y must have equal row counts")
        if x.shape[1] < 1:
            raise DataError("need at least one covariate column")
        for name, arr in (("locations", loc), ("x", x), ("y", y)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"non-finite entries in {name}")
        if loc.min() < 0.0 or loc.max() > 1.0:
            bad = np.where((loc < 0.0) | (loc > 1.0))[0][0]
            raise DataError(f"location {bad} outside [0,1]^2")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.locations.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


def _cell_index(locations: np.ndarray, K: int) -> np.ndarray:
    """Row-major cell id of each location under the floor rule, clamped."""
    cols = np.minimum((locations[:, 0] * K).astype(np.int64), K - 1)
    rows = np.minimum((locations[:, 1] * K).astype(np.int64), K - 1)
    return rows * K + cols


@dataclass(frozen=True)
class BlockGrid:
    """Active-block view of the K x K discretization.

    active_blocks : (M,) sorted row-major cell ids of nonempty cells
    block_of      : (n,) active-block index per observation (-1 = dropped,
                    only possible when built with on_disconnected='largest')
    adjacency     : (E, 2) active-block index pairs (a < b), each side-adjacent
                    unordered pair listed once
    n_components  : connected-component count of the active graph as built
    """

    K: int
    active_blocks: np.ndarray
    block_of: np.ndarray
    adjacency: np.ndarray
    n_components: int
    component_sizes: tuple = field(default=(0,))

    @property
    def n_blocks(self) -> int:
        return self.active_blocks.shape[0]

    @property
    def n_edges(self) -> int:
        return self.adjacency.shape[0]

    def centroids(self) -> np.ndarray:
        """(M, 2) cell-center coordinates of the active blocks."""
        cols = self.active_blocks % self.K
        rows = self.active_blocks // self.K
        return np.column_stack(((cols + 0.5) / self.K, (rows + 0.5) / self.K))

    def block_counts(self) -> np.ndarray:
        """(M,) observation count per active block (dropped rows excluded)."""
        kept = self.block_of[self.block_of >= 0]
        return np.bincount(kept, minlength=self.n_blocks)

    def neighbor_lists(self) -> list:
        """Per-block list of (neighbor, edge_id); built on demand."""
        nbrs: list = [[] for _ in range(self.n_blocks)]
        for eid, (a, b) in enumerate(self.adjacency):
            nbrs[a].append((int(b), eid))
            nbrs[b].append((int(a), eid))
        return nbrs


def _components(n_nodes: int, edges: np.ndarray) -> np.ndarray:
    """Union-find connected-component labels for nodes 0..n_nodes-1."""
    parent = np.arange(n_nodes)

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra
    return np.array([find(u) for u in range(n_nodes)])


def build_grid(dataset: Dataset, K: int, on_disconnected: str = "error") -> BlockGrid:
    """Discretize, drop empty cells, and build the active mesh graph.

    on_disconnected: 'error' raises GridConnectivityError with component
    sizes; 'largest' keeps only the largest component and marks observations
    outside it with block_of = -1.
    """
    if not isinstance(K, (int, np.integer)) or K < 1:
        raise ValueError("K must be a positive integer")
    cells = _cell_index(dataset.locations, int(K))
    active = np.unique(cells)
    active_index = {int(c): i for i, c in enumerate(active)}
    block_of = np.array([active_index[int(c)] for c in cells], dtype=np.int64)

    # side-adjacent active pairs: right and up neighbors only, so each
    # unordered pair appears once
    edges = []
    for i, c in enumerate(active):
        col, row = int(c) % K, int(c) // K
        if col + 1 < K and c + 1 in active_index:
            edges.append((i, active_index[c + 1]))
        if row + 1 < K and c + K in active_index:
            edges.append((i, active_index[c + K]))
    adjacency = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)

    comp = _components(len(active), adjacency)
    roots, counts = np.unique(comp, return_counts=True)
    n_comp = len(roots)
    sizes = tuple(sorted((int(c) for c in counts), reverse=True))

    if n_comp > 1:
        if on_disconnected == "error":
            raise GridConnectivityError(sizes)
        if on_disconnected != "largest":
            raise ValueError("on_disconnected must be 'error' or 'largest'")
        warnings.warn(
            f"active-block graph has {n_comp} components with sizes {sizes}; "
            "restricting to the largest",
            stacklevel=2,
        )
        keep_root = roots[np.argmax(counts)]
        keep_mask = comp == keep_root
        new_active = active[keep_mask]
        remap = -np.ones(len(active), dtype=np.int64)
        remap[keep_mask] = np.arange(keep_mask.sum())
        block_of = remap[block_of]
        keep_edges = adjacency[keep_mask[adjacency[:, 0]] & keep_mask[adjacency[:, 1]]]
        adjacency = remap[keep_edges] if keep_edges.size else keep_edges.reshape(-1, 2)
        active = new_active

    return BlockGrid(
        K=int(K),
        active_blocks=active,
        block_of=block_of,
        adjacency=np.ascontiguousarray(adjacency),
        n_components=n_comp,
        component_sizes=sizes,
    )


def block_of_point(grid: BlockGrid, s) -> int | None:
    """Active-block index of the cell containing s, or None if inactive."""
    s = np.asarray(s, dtype=float)
    if s.shape != (2,) or not np.all(np.isfinite(s)) or s.min() < 0.0 or s.max() > 1.0:
        raise ValueError(f"point {s!r} outside [0,1]^2")
    cell = int(_cell_index(s.reshape(1, 2), grid.K)[0])
    idx = np.searchsorted(grid.active_blocks, cell)
    if idx < grid.n_blocks and grid.active_blocks[idx] == cell:
        return int(idx)
    return None


def load_dataset_csv(path) -> Dataset:
    """Read `s_h,s_v,x1,...,xd,y` CSV with row-numbered validation errors."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 4 or header[0] != "s_h" or header[1] != "s_v" or header[-1] != "y":
            for col in ("s_h", "s_v", "y"):
                if col not in header:
                    raise DataError(f"{path}: missing column '{col}'")
            raise DataError(f"{path}: header must be s_h,s_v,x1,...,xd,y, got {header}")
        d = len(header) - 3
        expected_x = [f"x{i + 1}" for i in range(d)]
        if header[2:-1] != expected_x:
            missing = [c for c in expected_x if c not in header]
            if missing:
                raise DataError(f"{path}: missing column '{missing[0]}'")
            raise DataError(f"{path}: covariate columns must be {expected_x}")

        loc, xs, ys = [], [], []
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {rownum}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise DataError(f"{path}: row {rownum}: {exc}") from None
            if not all(np.isfinite(vals)):
                raise DataError(f"{path}: row {rownum}: non-finite value")
            if not (0.0 <= vals[0] <= 1.0 and 0.0 <= vals[1] <= 1.0):
                raise DataError(f"{path}: row {rownum}: location outside [0,1]^2")
            loc.append(vals[:2])
            xs.append(vals[2:-1])
            ys.append(vals[-1])
    if not loc:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(loc), np.array(xs), np.array(ys))
