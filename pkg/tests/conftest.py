"""Shared builders and independent oracles for the test suite."""

import numpy as np
import pytest

from spanreg.grid import BlockGrid, Dataset, build_grid
from spanreg.likelihood import ModelConfig
from spanreg.sampler import _Context, SamplerConfig, init_chain


def make_graph_grid(n_nodes: int, edges) -> BlockGrid:
    """A BlockGrid standing in for an arbitrary connected graph.

    Tree and sampler operations only consume n_blocks/adjacency/neighbor
    lists, so the geometric fields can be dummies.
    """
    adjacency = np.array(sorted((min(a, b), max(a, b)) for a, b in edges), dtype=np.int64)
    return BlockGrid(
        K=n_nodes,
        active_blocks=np.arange(n_nodes, dtype=np.int64),
        block_of=np.zeros(1, dtype=np.int64),
        adjacency=adjacency.reshape(-1, 2),
        n_components=1,
        component_sizes=(n_nodes,),
    )


def random_connected_graph(rng: np.random.Generator, n_nodes: int) -> BlockGrid:
    """Random spanning tree plus random extra edges."""
    order = rng.permutation(n_nodes)
    edges = set()
    for i in range(1, n_nodes):
        j = int(rng.integers(i))
        edges.add((min(order[i], order[j]), max(order[i], order[j])))
    extra = rng.integers(0, n_nodes + 1)
    for _ in range(int(extra)):
        a, b = rng.integers(n_nodes, size=2)
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return make_graph_grid(n_nodes, edges)


def kruskal_oracle(grid: BlockGrid, weights) -> set:
    """Independent MST via Kruskal with union-find; returns frozenset of edges."""
    order = sorted(range(grid.n_edges), key=lambda e: (weights[e], e))
    parent = list(range(grid.n_blocks))

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    chosen = []
    for e in order:
        a, b = grid.adjacency[e]
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[ra] = rb
            chosen.append((int(grid.adjacency[e, 0]), int(grid.adjacency[e, 1])))
    assert len(chosen) == grid.n_blocks - 1
    return frozenset(chosen)


def path_dataset(n_blocks: int, per_block: int, rng: np.random.Generator,
                 thetas=None, noise_sd: float = 1.0):
    """Data in the bottom row of a K=n_blocks grid: the active graph is a path."""
    if thetas is None:
        thetas = np.array([[0.0, 1.0], [1.0, 0.0], [2.0, -1.0]])
    n = n_blocks * per_block
    locs = []
    for b in range(n_blocks):
        for i in range(per_block):
            locs.append(((b + (i + 1) / (per_block + 1)) / n_blocks, 0.5 / n_blocks))
    locs = np.array(locs)
    x = np.column_stack((np.ones(n), rng.uniform(-1, 1, n)))
    region = np.minimum(np.arange(n) // per_block * 3 // n_blocks, 2) + 1
    y = np.einsum("ij,ij->i", x, thetas[region - 1]) + noise_sd * rng.standard_normal(n)
    ds = Dataset(locs, x, y)
    grid = build_grid(ds, n_blocks)
    assert grid.n_blocks == n_blocks and grid.n_edges == n_blocks - 1
    return ds, grid


def random_dataset(n: int, d: int, rng: np.random.Generator):
    """Random locations/covariates/responses on the unit square."""
    locs = rng.random((n, 2))
    x = np.column_stack((np.ones(n), rng.uniform(-1, 1, (n, d - 1)))) if d > 1 else np.ones((n, 1))
    y = rng.standard_normal(n) * 2.0
    return Dataset(locs, x, y)


def random_chain_state(rng: np.random.Generator, max_side: int = 6, k_max: int = 4):
    """A random (grid, context, state) triple for sampler-level tests."""
    for _ in range(100):
        K = int(rng.integers(2, max_side + 1))
        n = int(rng.integers(3 * K, 10 * K * K))
        ds = random_dataset(n, 2, rng)
        grid = build_grid(ds, K, on_disconnected="largest")
        if grid.n_blocks >= 2:
            break
    ctx = _Context(ds, grid, ModelConfig(sigma2=1.0, gamma=1.0, d=2))
    state = init_chain(ctx, rng)
    sc = SamplerConfig(log_lambda=-1.0, k_max=k_max, n_iters=0, burn_in=0, seed=0)
    return ds, grid, ctx, state, sc


@pytest.fixture
def rng():
    return np.random.default_rng(20260811)
