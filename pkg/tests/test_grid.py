import numpy as np
import pytest

from spanreg.grid import (
    DataError,
    Dataset,
    GridConnectivityError,
    block_of_point,
    build_grid,
    load_dataset_csv,
)


def _dataset(locs):
    locs = np.asarray(locs, dtype=float)
    n = locs.shape[0]
    return Dataset(locs, np.ones((n, 1)), np.zeros(n))


def test_full_5x5_mesh():
    # one location per cell: 25 active blocks, 2*5*4 = 40 adjacency edges
    locs = [((c + 0.5) / 5, (r + 0.5) / 5) for r in range(5) for c in range(5)]
    grid = build_grid(_dataset(locs), 5)
    assert grid.n_blocks == 25
    assert grid.n_edges == 40
    assert grid.n_components == 1


def test_floor_rule_cell():
    grid = build_grid(_dataset([(0.12, 0.34)]), 5)
    # column 0, row 1 -> row-major cell id 5
    assert grid.active_blocks.tolist() == [5]


def test_single_cell_degenerate():
    locs = [(0.41, 0.42), (0.43, 0.44), (0.45, 0.41)]
    grid = build_grid(_dataset(locs), 5)
    assert grid.n_blocks == 1
    assert grid.n_edges == 0


def test_boundary_clamping():
    grid = build_grid(_dataset([(1.0, 1.0)]), 4)
    assert grid.active_blocks.tolist() == [15]
    assert build_grid(_dataset([(0.0, 0.0)]), 4).active_blocks.tolist() == [0]
    # interior grid line goes to the higher-index cell
    assert build_grid(_dataset([(0.25, 0.0)]), 4).active_blocks.tolist() == [1]


def test_observation_partition_property(rng):
    for _ in range(20):
        n = int(rng.integers(1, 200))
        K = int(rng.integers(1, 12))
        ds = _dataset(rng.random((n, 2)))
        grid = build_grid(ds, K, on_disconnected="largest")
        counts = grid.block_counts()
        assert counts.min() >= 1
        kept = (grid.block_of >= 0).sum()
        assert counts.sum() == kept
        if grid.n_components == 1:
            assert kept == n


def test_determinism(rng):
    ds = _dataset(rng.random((50, 2)))
    g1 = build_grid(ds, 7, on_disconnected="largest")
    g2 = build_grid(ds, 7, on_disconnected="largest")
    assert np.array_equal(g1.active_blocks, g2.active_blocks)
    assert np.array_equal(g1.adjacency, g2.adjacency)
    assert np.array_equal(g1.block_of, g2.block_of)


def test_disconnected_error_and_largest():
    # two far-apart clumps, fine grid -> disconnected active graph
    locs = [(0.01, 0.01), (0.03, 0.02), (0.98, 0.97)]
    with pytest.raises(GridConnectivityError) as exc:
        build_grid(_dataset(locs), 20)
    assert exc.value.component_sizes[0] >= 1
    grid = build_grid(_dataset(locs), 20, on_disconnected="largest")
    assert grid.n_components > 1
    assert (grid.block_of == -1).sum() >= 1
    assert grid.block_counts().sum() == 3 - (grid.block_of == -1).sum()


def test_empty_dataset_rejected():
    with pytest.raises(DataError):
        Dataset(np.empty((0, 2)), np.empty((0, 1)), np.empty(0))


def test_out_of_domain_rejected():
    with pytest.raises(DataError):
        _dataset([(1.2, 0.5)])
    with pytest.raises(DataError):
        Dataset(np.array([[0.5, 0.5]]), np.array([[np.inf]]), np.zeros(1))


def test_block_of_point():
    locs = [(0.1, 0.1), (0.9, 0.9)]
    grid = build_grid(_dataset(locs), 2, on_disconnected="largest")
    assert block_of_point(grid, (0.25, 0.25)) == 0
    assert block_of_point(grid, (0.9, 0.1)) is None  # empty cell
    # boundary tie: 0.5 goes to the higher cell, which is inactive here
    assert block_of_point(grid, (0.5, 0.49)) is None
    with pytest.raises(ValueError):
        block_of_point(grid, (1.5, 0.0))


def test_csv_roundtrip(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("s_h,s_v,x1,x2,y\n0.1,0.2,1,0.5,2.5\n0.3,0.4,1,-0.5,1.0\n")
    ds = load_dataset_csv(path)
    assert ds.n == 2 and ds.d == 2
    assert ds.y.tolist() == [2.5, 1.0]


def test_csv_missing_column(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("s_h,s_v,x1\n0.1,0.2,1\n")
    with pytest.raises(DataError, match="missing column 'y'"):
        load_dataset_csv(path)


def test_csv_bad_row_numbered(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("s_h,s_v,x1,y\n0.1,0.2,1,2.5\n0.3,0.4,nan,1.0\n")
    with pytest.raises(DataError, match="row 3"):
        load_dataset_csv(path)
