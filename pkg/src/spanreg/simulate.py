"""U-shape simulation experiments: data generation, rate-based hyperparameters,
asymptotic sweeps over the sample size, and the WAIC grid search.

The synthetic truth lives on a U-shaped domain: the unit square minus the
open notch (1/3, 1] x (1/3, 2/3). Its three regions are the upper arm
(s_v >= 2/3), the lower arm (s_v <= 1/3), and the left connector band in
between; coefficients (0,1), (1,0), (2,-1) and noise variance 9.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import Dataset, build_grid
from .likelihood import ModelConfig
from .metrics import DomainEvaluator, ReferencePartition, log_power_denominator, waic
from .predict import predict_means_matrix
from .sampler import SamplerConfig, run_chain

__all__ = [
    "UShapeTruth",
    "HyperParams",
    "ushape_membership",
    "generate_ushape_data",
    "select_hyperparams",
    "run_asymptotic_sweep",
    "waic_grid_search",
]

OUTSIDE = 0


def ushape_membership(points) -> np.ndarray:
    """Region labels 1..3 on the U-shape, 0 outside (in the notch)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    sh, sv = pts[:, 0], pts[:, 1]
    labels = np.where(sv >= 2.0 / 3.0, 1, np.where(sv <= 1.0 / 3.0, 2, 3))
    in_notch = (sh > 1.0 / 3.0) & (sv > 1.0 / 3.0) & (sv < 2.0 / 3.0)
    labels = np.where(in_notch, OUTSIDE, labels)
    return labels.astype(np.int64)


@dataclass(frozen=True)
class UShapeTruth:
    """Ground truth of the three-region U-shape experiment."""

    thetas: np.ndarray = field(default_factory=lambda: np.array([[0.0, 1.0], [1.0, 0.0], [2.0, -1.0]]))
    noise_var: float = 9.0
    k0: int = 3

    def membership(self, points) -> np.ndarray:
        return ushape_membership(points)

    def reference(self) -> ReferencePartition:
        return ReferencePartition(k0=self.k0, membership=ushape_membership)

    def region_areas(self) -> np.ndarray:
        # arms are full-width bands of height 1/3; the connector is 1/3 x 1/3
        return np.array([1.0 / 3.0, 1.0 / 3.0, 1.0 / 9.0])


def generate_ushape_data(n: int, seed) -> tuple:
    """Uniform U-shape locations, x = (1, Unif(-1,1)), Gaussian noise sd 3.

    Returns (dataset, true_labels, true_means).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    truth = UShapeTruth()
    locs = np.empty((0, 2))
    while locs.shape[0] < n:
        cand = rng.random((2 * n + 16, 2))
        cand = cand[ushape_membership(cand) != OUTSIDE]
        locs = np.vstack((locs, cand))
    locs = locs[:n]
    labels = ushape_membership(locs)
    x = np.column_stack((np.ones(n), rng.uniform(-1.0, 1.0, size=n)))
    mu = np.einsum("ij,ij->i", x, truth.thetas[labels - 1])
    y = mu + math.sqrt(truth.noise_var) * rng.standard_normal(n)
    return Dataset(locs, x, y), labels, mu


@dataclass(frozen=True)
class HyperParams:
    """Rate-formula hyperparameters and their derived values."""

    c_b: float
    alpha_b: float
    c_p: float
    alpha_p: float
    K: int
    log_lambda: float


def select_hyperparams(n: int, c_b: float = 5.0, alpha_b: float = 1.0,
                       c_p: float = 0.1, alpha_p: float = 0.5) -> HyperParams:
    """K = floor(c_b sqrt(n) (log n)^{-(1+a_b)/2}); log lam = -c_p n (log n)^{-a_p}.

    lambda itself is never formed; at realistic n it underflows.
    """
    if n < 3:
        raise ValueError("n must be >= 3 for the rate formulas")
    logn = math.log(n)
    K = max(1, int(math.floor(c_b * math.sqrt(n) * logn ** (-(1.0 + alpha_b) / 2.0))))
    log_lambda = -c_p * n * logn ** (-alpha_p)
    if K > math.floor(math.sqrt(n)):
        warnings.warn(
            f"K={K} exceeds floor(sqrt(n))={math.floor(math.sqrt(n))}; "
            "some blocks must be empty",
            stacklevel=2,
        )
    return HyperParams(c_b, alpha_b, c_p, alpha_p, K, log_lambda)


def _fit_once(dataset: Dataset, hp: HyperParams, model: ModelConfig,
              seed: int, n_iters: int, burn_in: int, thinning: int, k_max: int):
    grid = build_grid(dataset, hp.K, on_disconnected="largest")
    sc = SamplerConfig(log_lambda=hp.log_lambda, k_max=k_max, n_iters=n_iters,
                       burn_in=burn_in, thinning=thinning, seed=seed)
    samples, diag = run_chain(dataset, grid, model, sc)
    return grid, samples, diag


def run_asymptotic_sweep(n_grid, base_seed: int = 0, c_b: float = 5.0,
                         alpha_b: float = 1.0, c_p: float = 0.1,
                         alpha_p: float = 0.5, alpha0: float = 0.1,
                         sigma2: float = 1.0, gamma: float = 1.0,
                         k_max: int = 5, n_iters: int = 20000,
                         burn_in: int = 5000, thinning: int = 5,
                         n_test: int = 5000, resolution: int = 500):
    """Generate, fit, and score each n; returns tidy per-sample rows.

    Each row: {n, sample, k, e1, e2, e3}. Dataset, test set, and chain seeds
    derive deterministically from (base_seed, n).
    """
    truth = UShapeTruth()
    ref = truth.reference()
    model = ModelConfig(sigma2=sigma2, gamma=gamma, d=2)
    rows = []
    for n in n_grid:
        n = int(n)
        dataset, _, _ = generate_ushape_data(n, seed=(base_seed, n, 0))
        test_data, _, test_mu = generate_ushape_data(n_test, seed=(base_seed, n, 1))
        hp = select_hyperparams(n, c_b, alpha_b, c_p, alpha_p)
        chain_seed = int(np.random.SeedSequence(entropy=(base_seed, n, 2)).generate_state(1)[0])
        grid, samples, _ = _fit_once(dataset, hp, model, chain_seed,
                                     n_iters, burn_in, thinning, k_max)
        ev = DomainEvaluator(grid, ref, resolution)
        denom = log_power_denominator(n, alpha0, alpha_b)
        scale = math.sqrt(n) / denom
        mu = predict_means_matrix(samples, grid, test_data.locations, test_data.x)
        sq = ((mu - test_mu[None, :]) ** 2).sum(axis=1)
        e3 = math.sqrt(n) / (n_test * denom) * sq
        for si, s in enumerate(samples):
            eps = ev.epsilon_parts(s.block_labels)[0]
            matched = ev.matched(s.block_labels)
            err = np.linalg.norm(s.thetas - truth.thetas[matched - 1], axis=1).max()
            rows.append({
                "n": n, "sample": si, "k": s.k,
                "e1": scale * eps, "e2": scale * err, "e3": float(e3[si]),
            })
    return rows


def waic_grid_search(dataset: Dataset, cb_grid, cp_grid, alpha_b: float = 1.0,
                     alpha_p: float = 0.5, sigma2: float = 1.0,
                     gamma: float = 1.0, k_max: int = 5, seed: int = 0,
                     n_iters: int = 20000, burn_in: int = 5000, thinning: int = 5):
    """Fit every (c_b, c_p) cell and return (best_pair, table rows).

    Every cell uses the same chain seed, so cells that derive identical
    (K, log lambda) produce identical fits and identical WAIC.
    """
    cells = [(float(cb), float(cp)) for cb in cb_grid for cp in cp_grid]
    if not cells:
        raise ValueError("empty hyperparameter grid")
    model = ModelConfig(sigma2=sigma2, gamma=gamma, d=dataset.d)
    table = []
    for cb, cp in cells:
        hp = select_hyperparams(dataset.n, cb, alpha_b, cp, alpha_p)
        grid, samples, _ = _fit_once(dataset, hp, model, seed,
                                     n_iters, burn_in, thinning, k_max)
        score = waic(samples, dataset, grid, model)
        table.append({"c_b": cb, "c_p": cp, "K": hp.K,
                      "log_lambda": hp.log_lambda, "waic": score})
    best = min(table, key=lambda r: r["waic"])
    return (best["c_b"], best["c_p"]), table
