"""Collapsed Gaussian likelihood under the g-prior, and the coefficient posterior.

With cluster coefficients integrated out, the data log-density given a
partition is, writing G_j = sum x x^T and v_j = sum x y over cluster j,

    log p = -(n/2) log(2 pi sigma^2) - y'y / (2 sigma^2)
            - (k d / 2) log(g n + 1)
            + [g n / (2 sigma^2 (g n + 1))] * sum_j v_j' G_j^+ v_j

with g = gamma. Everything here works off per-cluster sufficient statistics
(G_j, v_j, y'y, count), which add component-wise under cluster merges, so
split/merge moves only touch the affected clusters' quadratic terms.

The conditional posterior of a cluster coefficient is Gaussian with mean
(gn/(gn+1)) G_j^+ v_j and covariance (gn sigma^2/(gn+1)) G_j^+.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .grid import BlockGrid, Dataset

__all__ = [
    "ModelConfig",
    "ClusterStats",
    "block_stats",
    "cluster_stats",
    "quad_form",
    "integrated_log_likelihood",
    "log_likelihood_delta_split",
    "sample_theta_conditional",
    "theta_conditional_moments",
]

# eigenvalues below RANK_TOL * trace/d are treated as zero in the pseudoinverse
RANK_TOL = 1e-10


@dataclass(frozen=True)
class ModelConfig:
    """Fixed noise variance, prior scale, covariate dimension."""

    sigma2: float = 1.0
    gamma: float = 1.0
    d: int = 2

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass
class ClusterStats:
    """Sufficient statistics of one cluster; disjoint merges add component-wise."""

    gram: np.ndarray  # (d, d)
    xty: np.ndarray   # (d,)
    yty: float
    count: int

    @staticmethod
    def zero(d: int) -> "ClusterStats":
        return ClusterStats(np.zeros((d, d)), np.zeros(d), 0.0, 0)

    def __add__(self, other: "ClusterStats") -> "ClusterStats":
        return ClusterStats(self.gram + other.gram, self.xty + other.xty,
                            self.yty + other.yty, self.count + other.count)

    def __sub__(self, other: "ClusterStats") -> "ClusterStats":
        return ClusterStats(self.gram - other.gram, self.xty - other.xty,
                            self.yty - other.yty, self.count - other.count)


def block_stats(dataset: Dataset, grid: BlockGrid):
    """Per-active-block stats arrays: gram (M,d,d), xty (M,d), yty (M,), count (M,)."""
    M, d = grid.n_blocks, dataset.d
    kept = grid.block_of >= 0
    b = grid.block_of[kept]
    x = dataset.x[kept]
    y = dataset.y[kept]
    gram = np.zeros((M, d, d))
    outer = x[:, :, None] * x[:, None, :]
    np.add.at(gram, b, outer)
    xty = np.zeros((M, d))
    np.add.at(xty, b, x * y[:, None])
    yty = np.bincount(b, weights=y * y, minlength=M)
    count = np.bincount(b, minlength=M)
    return gram, xty, yty, count


def cluster_stats(dataset: Dataset, grid: BlockGrid, labels: np.ndarray, j: int) -> ClusterStats:
    """Stats over the observations whose block carries label j."""
    member = labels[grid.block_of] == j
    member &= grid.block_of >= 0
    x = dataset.x[member]
    y = dataset.y[member]
    return ClusterStats(x.T @ x, x.T @ y, float(y @ y), int(member.sum()))


def _pinv_quad_and_factors(gram: np.ndarray):
    """Eigendecomposition-based pseudoinverse pieces (eigvecs, inv eigvals)."""
    w, v = np.linalg.eigh(gram)
    cut = RANK_TOL * max(np.trace(gram) / gram.shape[0], 0.0)
    w_inv = np.where(w > cut, 1.0 / np.maximum(w, 1e-300), 0.0)
    return v, w_inv


def quad_form(stats: ClusterStats) -> float:
    """v' G^+ v for one cluster; Cholesky solve when G is full rank."""
    if stats.count == 0:
        return 0.0
    d = stats.gram.shape[0]
    if stats.count >= d:
        try:
            c = np.linalg.cholesky(stats.gram)
        except np.linalg.LinAlgError:
            c = None
        if c is not None:
            sol = solve_triangular(c, stats.xty, lower=True)
            return float(sol @ sol)
    v, w_inv = _pinv_quad_and_factors(stats.gram)
    proj = v.T @ stats.xty
    return float(proj @ (w_inv * proj))


def _coefs(config: ModelConfig, n: int):
    """(log(gn+1), gn/(2 sigma^2 (gn+1))) shared by all clusters."""
    gn = config.gamma * n
    return math.log1p(gn), gn / (2.0 * config.sigma2 * (gn + 1.0))


def integrated_log_likelihood(stats_per_cluster, config: ModelConfig, n: int,
                              total_yty: float) -> float:
    """Collapsed log p(y | partition) in pure log space."""
    if n < 1:
        raise ValueError("n must be >= 1")
    d = config.d
    log_gn1, qcoef = _coefs(config, n)
    out = -0.5 * n * math.log(2.0 * math.pi * config.sigma2)
    out -= total_yty / (2.0 * config.sigma2)
    for j, st in enumerate(stats_per_cluster):
        q = quad_form(st)
        term = -0.5 * d * log_gn1 + qcoef * q
        if not math.isfinite(term):
            raise FloatingPointError(f"non-finite likelihood term for cluster {j + 1}")
        out += term
    return out


def log_likelihood_delta_split(parent: ClusterStats, child_a: ClusterStats,
                               child_b: ClusterStats, config: ModelConfig, n: int) -> float:
    """log p(split) - log p(unsplit), touching only the affected cluster."""
    log_gn1, qcoef = _coefs(config, n)
    return (-0.5 * config.d * log_gn1
            + qcoef * (quad_form(child_a) + quad_form(child_b) - quad_form(parent)))


def theta_conditional_moments(stats: ClusterStats, config: ModelConfig, n: int):
    """Posterior mean and covariance factors of a cluster coefficient.

    Returns (mean, eigvecs, cov_eigvals) with cov = V diag(cov_eigvals) V'.
    """
    gn = config.gamma * n
    shrink = gn / (gn + 1.0)
    v, w_inv = _pinv_quad_and_factors(stats.gram)
    mean = shrink * (v @ (w_inv * (v.T @ stats.xty)))
    cov_eig = shrink * config.sigma2 * w_inv
    return mean, v, cov_eig


def sample_theta_conditional(stats: ClusterStats, config: ModelConfig, n: int,
                             rng: np.random.Generator) -> np.ndarray:
    """One draw from the Gaussian conditional posterior of a cluster coefficient."""
    if stats.count < 1:
        raise ValueError("cannot sample a coefficient for an empty cluster")
    mean, v, cov_eig = theta_conditional_moments(stats, config, n)
    z = rng.standard_normal(mean.shape[0])
    return mean + v @ (np.sqrt(cov_eig) * z)
