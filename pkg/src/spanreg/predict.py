"""Prediction at new locations from posterior partition samples.

A new point inherits the coefficient of the cluster owning its block; points
falling in an inactive cell borrow the nearest active block (Euclidean
centroid distance, ties to the smaller block id), so prediction covers all
of the unit square.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BlockGrid, _cell_index

__all__ = [
    "PredictiveDistribution",
    "block_index_of_points",
    "theta_at",
    "predict_mean",
    "predict_means_matrix",
]


@dataclass(frozen=True)
class PredictiveDistribution:
    """Per-sample regression means at one point, plus summary stats."""

    means: np.ndarray  # (n_samples,)
    mean: float
    q05: float
    q95: float


def block_index_of_points(grid: BlockGrid, points: np.ndarray) -> np.ndarray:
    """Active-block index per point; inactive cells map to the nearest block.

    Nearest is by centroid distance; exact ties resolve to the smaller block
    id (argmin keeps the first of equal distances, and centroids are ordered
    by block id).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != 2:
        raise ValueError("points must be (n, 2)")
    if not np.all(np.isfinite(points)) or points.min() < 0.0 or points.max() > 1.0:
        raise ValueError("prediction points must lie in [0,1]^2")
    cells = _cell_index(points, grid.K)
    pos = np.searchsorted(grid.active_blocks, cells)
    pos = np.minimum(pos, grid.n_blocks - 1)
    active_hit = grid.active_blocks[pos] == cells
    out = np.where(active_hit, pos, -1)
    misses = np.nonzero(~active_hit)[0]
    if misses.size:
        cen = grid.centroids()
        chunk = max(1, int(2e6) // max(grid.n_blocks, 1))
        for lo in range(0, misses.size, chunk):
            rows = misses[lo:lo + chunk]
            d2 = ((points[rows, None, :] - cen[None, :, :]) ** 2).sum(axis=2)
            out[rows] = np.argmin(d2, axis=1)
    return out.astype(np.int64)


def theta_at(sample, grid: BlockGrid, s) -> np.ndarray:
    """Coefficient vector of the cluster containing (the block of) s."""
    idx = block_index_of_points(grid, np.asarray(s, dtype=float).reshape(1, 2))[0]
    label = int(sample.block_labels[idx])
    return sample.thetas[label - 1]


def predict_means_matrix(samples, grid: BlockGrid, locations, x) -> np.ndarray:
    """(n_samples, n_points) regression means x' theta(s) for every sample."""
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] != locations.shape[0]:
        raise ValueError("locations and covariates must align")
    idx = block_index_of_points(grid, locations)
    out = np.empty((len(samples), locations.shape[0]))
    for si, sample in enumerate(samples):
        if x.shape[1] != sample.thetas.shape[1]:
            raise ValueError("covariate dimension does not match the model")
        labels = sample.block_labels[idx]
        out[si] = np.einsum("ij,ij->i", x, sample.thetas[labels - 1])
    return out


def predict_mean(samples, grid: BlockGrid, location, covariate) -> PredictiveDistribution:
    """Posterior predictive ensemble of the regression mean at one point."""
    if len(samples) < 1:
        raise ValueError("need at least one posterior sample")
    means = predict_means_matrix(samples, grid, np.asarray(location, dtype=float).reshape(1, 2),
                                 np.asarray(covariate, dtype=float).reshape(1, -1))[:, 0]
    return PredictiveDistribution(
        means=means,
        mean=float(means.mean()),
        q05=float(np.quantile(means, 0.05)),
        q95=float(np.quantile(means, 0.95)),
    )
