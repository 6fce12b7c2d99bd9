"""Partition distances, error statistics, scoring rules, and consensus.

The partition distance between two labelings of the same units is

    eps = 2 - n^-1 [ sum_j max_l N_jl + sum_l max_j N_jl ]

with N the contingency table; it lives in [0, 2), is zero iff the
partitions coincide, and splits as eps = eps1 + eps2 with each one-sided
term in [0, 1]. Domain partitions are compared the same way after scoring
both on a uniform lattice of evaluation points (intersection areas by point
counting); exact block-count weighting is used when both sides live on the
same block grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .grid import BlockGrid, Dataset
from .likelihood import ModelConfig
from .predict import block_index_of_points, predict_means_matrix

__all__ = [
    "ReferencePartition",
    "epsilon_n",
    "epsilon_n_parts",
    "DomainEvaluator",
    "epsilon_domain",
    "matched_index",
    "log_power_denominator",
    "normalized_errors",
    "prediction_error_e3",
    "mae",
    "crps",
    "waic",
    "consensus_partition",
]


@dataclass(frozen=True)
class ReferencePartition:
    """Analytic domain partition queried by point membership.

    ``membership`` maps an (n, 2) array to labels in {1..k0}, 0 for points
    outside the reference domain.
    """

    k0: int
    membership: object


def _contingency(labels1, labels2, weights=None) -> np.ndarray:
    """Counts (or weight sums) over label pairs; rows/cols are labels 1..k."""
    l1 = np.asarray(labels1, dtype=np.int64)
    l2 = np.asarray(labels2, dtype=np.int64)
    if l1.shape != l2.shape:
        raise ValueError("partitions must label the same units")
    k1, k2 = int(l1.max()), int(l2.max())
    fused = (l1 - 1) * k2 + (l2 - 1)
    table = np.bincount(fused, weights=weights, minlength=k1 * k2)
    return table.reshape(k1, k2)


def _matched_weight(table: np.ndarray) -> float:
    return float(table.max(axis=1).sum() + table.max(axis=0).sum())


def epsilon_n_parts(labels1, labels2, weights=None):
    """(eps, eps1, eps2) for two labelings; weights default to unit counts."""
    table = _contingency(labels1, labels2, weights)
    total = table.sum()
    if total <= 0:
        raise ValueError("empty partitions")
    eps1 = float(1.0 - table.max(axis=1).sum() / total)
    eps2 = float(1.0 - table.max(axis=0).sum() / total)
    return eps1 + eps2, eps1, eps2


def epsilon_n(labels1, labels2) -> float:
    """Set-matching distance between two labelings of the same point set."""
    return epsilon_n_parts(labels1, labels2)[0]


class DomainEvaluator:
    """Scores posterior block partitions against an analytic reference.

    Evaluation points form a resolution x resolution lattice of cell centers
    over [0,1]^2; points outside the reference domain are dropped, and each
    remaining point takes the sample label of its (nearest active) block.
    """

    def __init__(self, grid: BlockGrid, ref: ReferencePartition, resolution: int = 500):
        if resolution < 1:
            raise ValueError("resolution must be >= 1")
        self.grid = grid
        self.ref = ref
        self.resolution = int(resolution)
        centers = (np.arange(resolution) + 0.5) / resolution
        gx, gy = np.meshgrid(centers, centers, indexing="ij")
        pts = np.column_stack((gx.ravel(), gy.ravel()))
        ref_labels = np.asarray(ref.membership(pts), dtype=np.int64)
        inside = ref_labels > 0
        self.ref_labels = ref_labels[inside]
        self.block_idx = block_index_of_points(grid, pts[inside])
        self.n_points = int(inside.sum())

    def contingency(self, block_labels: np.ndarray) -> np.ndarray:
        return _contingency(block_labels[self.block_idx], self.ref_labels)

    def epsilon_parts(self, block_labels: np.ndarray):
        table = self.contingency(block_labels)
        eps1 = 1.0 - table.max(axis=1).sum() / self.n_points
        eps2 = 1.0 - table.max(axis=0).sum() / self.n_points
        return eps1 + eps2, float(eps1), float(eps2)

    def matched(self, block_labels: np.ndarray) -> np.ndarray:
        """Best-matched reference label per cluster (ties to the smaller one)."""
        return np.argmax(self.contingency(block_labels), axis=1) + 1


def epsilon_domain(sample, grid: BlockGrid, ref: ReferencePartition,
                   resolution: int = 500) -> float:
    """Lattice approximation of the domain-partition distance to ``ref``."""
    return DomainEvaluator(grid, ref, resolution).epsilon_parts(sample.block_labels)[0]


def matched_index(sample, grid: BlockGrid, ref: ReferencePartition,
                  resolution: int = 500) -> dict:
    """Cluster label -> best-matched reference label."""
    m = DomainEvaluator(grid, ref, resolution).matched(sample.block_labels)
    return {j + 1: int(m[j]) for j in range(len(m))}


def log_power_denominator(n: int, alpha0: float, alpha_b: float) -> float:
    """(log n)^(alpha0 + (1+alpha_b)/2), evaluated in log space."""
    power = alpha0 + (1.0 + alpha_b) / 2.0
    return math.exp(power * math.log(math.log(n)))


def normalized_errors(sample, grid: BlockGrid, ref: ReferencePartition,
                      true_thetas, alpha0: float, alpha_b: float, n: int,
                      evaluator: DomainEvaluator | None = None):
    """(e1, e2): scaled partition distance and worst matched coefficient error."""
    ev = evaluator if evaluator is not None else DomainEvaluator(grid, ref)
    denom = log_power_denominator(n, alpha0, alpha_b)
    eps = ev.epsilon_parts(sample.block_labels)[0]
    matched = ev.matched(sample.block_labels)
    truth = np.asarray(true_thetas, dtype=float)
    err = np.linalg.norm(sample.thetas - truth[matched - 1], axis=1).max()
    scale = math.sqrt(n) / denom
    return scale * eps, scale * err


def prediction_error_e3(samples, grid: BlockGrid, test_locations, test_x,
                        true_means, alpha0: float, alpha_b: float, n: int) -> np.ndarray:
    """Per-sample scaled squared prediction error over a test set."""
    mu = predict_means_matrix(samples, grid, test_locations, test_x)
    mu0 = np.asarray(true_means, dtype=float)
    sq = ((mu - mu0[None, :]) ** 2).sum(axis=1)
    denom = log_power_denominator(n, alpha0, alpha_b)
    return math.sqrt(n) / (mu0.shape[0] * denom) * sq


def mae(pred_means: np.ndarray, true_means: np.ndarray) -> float:
    """n^-1 L1 norm of the posterior-mean prediction error vector."""
    pred_means = np.atleast_2d(np.asarray(pred_means, dtype=float))
    if pred_means.shape[0] < 1:
        raise ValueError("need at least one sample")
    err = pred_means.mean(axis=0) - np.asarray(true_means, dtype=float)
    return float(np.abs(err).sum() / err.shape[0])


def crps(ensemble: np.ndarray, y: float) -> float:
    """Ensemble CRPS: mean|m - y| - 1/2 mean|m - m'| (all pairs)."""
    m = np.asarray(ensemble, dtype=float)
    if m.size < 1:
        raise ValueError("need at least one ensemble member")
    term1 = np.abs(m - y).mean()
    term2 = 0.5 * np.abs(m[:, None] - m[None, :]).mean()
    return float(term1 - term2)


def crps_mean(pred_means: np.ndarray, y: np.ndarray) -> float:
    """Average CRPS over observation points (columns of the sample matrix)."""
    pred = np.asarray(pred_means, dtype=float)
    yv = np.asarray(y, dtype=float)
    term1 = np.abs(pred - yv[None, :]).mean(axis=0)
    s = np.sort(pred, axis=0)
    M = s.shape[0]
    # mean pairwise |m - m'| via order statistics: sum_i (2i+1-M) s_(i), in O(M log M)
    w = 2.0 * np.arange(M) + 1.0 - M
    term2 = (w[:, None] * s).sum(axis=0) / (M * M)
    return float((term1 - term2).mean())


def waic(samples, dataset: Dataset, grid: BlockGrid, model_config: ModelConfig) -> float:
    """-2 sum_i [ log mean_s p_is - var_s log p_is ] with Gaussian densities."""
    if len(samples) < 2:
        raise ValueError("WAIC needs at least two posterior samples")
    kept = grid.block_of >= 0
    y = dataset.y[kept]
    x = dataset.x[kept]
    obs_block = grid.block_of[kept]
    s2 = model_config.sigma2
    const = -0.5 * math.log(2.0 * math.pi * s2)
    logp = np.empty((len(samples), y.shape[0]))
    for si, sample in enumerate(samples):
        lab = sample.block_labels[obs_block]
        mu = np.einsum("ij,ij->i", x, sample.thetas[lab - 1])
        logp[si] = const - (y - mu) ** 2 / (2.0 * s2)
    lppd = logsumexp(logp, axis=0) - math.log(logp.shape[0])
    p_waic = logp.var(axis=0, ddof=1)
    return float(-2.0 * (lppd - p_waic).sum())


def consensus_partition(samples, grid: BlockGrid) -> int:
    """Index of the eps_n-medoid sample over observed-location labelings.

    Identical canonical label vectors are deduplicated and weighted by
    multiplicity, which leaves the medoid unchanged.
    """
    if len(samples) < 1:
        raise ValueError("need at least one sample")
    counts = grid.block_counts().astype(float)
    mats = np.stack([s.block_labels for s in samples])
    uniq, inverse, mult = np.unique(mats, axis=0, return_inverse=True, return_counts=True)
    U = uniq.shape[0]
    if U == 1:
        return 0
    kmax = int(uniq.max())
    fused_base = (uniq - 1) * kmax  # (U, M), precomputed left code
    size = kmax * kmax
    total = counts.sum()
    dist = np.zeros((U, U))
    for i in range(U):
        for j in range(i + 1, U):
            table = np.bincount(fused_base[i] + uniq[j] - 1, weights=counts,
                                minlength=size).reshape(kmax, kmax)
            e = 2.0 - (table.max(axis=1).sum() + table.max(axis=0).sum()) / total
            dist[i, j] = dist[j, i] = e
    mean_dist = dist @ (mult / len(samples))
    best = int(np.argmin(mean_dist))
    return int(np.nonzero(inverse == best)[0][0])
