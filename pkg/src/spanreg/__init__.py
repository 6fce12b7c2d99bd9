"""Spatially clustered regression on spanning-tree partitions of a blocked domain.

The unit square is discretized into blocks, a spanning tree over the active
blocks is cut into contiguous clusters, and cluster-wise linear models are
fit by reversible-jump MCMC with the coefficients integrated out under a
g-prior. Includes prediction at new locations, partition distance metrics,
and the U-shape simulation experiments.
"""

__version__ = "0.1.0"

from .grid import BlockGrid, DataError, Dataset, GridConnectivityError, block_of_point, build_grid, load_dataset_csv
from .likelihood import (
    ClusterStats,
    ModelConfig,
    cluster_stats,
    integrated_log_likelihood,
    log_likelihood_delta_split,
    sample_theta_conditional,
)
from .metrics import (
    DomainEvaluator,
    ReferencePartition,
    consensus_partition,
    crps,
    epsilon_domain,
    epsilon_n,
    mae,
    matched_index,
    normalized_errors,
    prediction_error_e3,
    waic,
)
from .predict import PredictiveDistribution, predict_mean, predict_means_matrix, theta_at
from .sampler import (
    ChainState,
    PosteriorSample,
    SamplerConfig,
    default_move_probs,
    read_samples_jsonl,
    run_chain,
    run_chains,
    write_samples_jsonl,
)
from .simulate import (
    HyperParams,
    UShapeTruth,
    generate_ushape_data,
    run_asymptotic_sweep,
    select_hyperparams,
    ushape_membership,
    waic_grid_search,
)
from .tree import (
    SpanningTree,
    TreePartitionState,
    classify_tree_edges,
    induce_partition,
    prim_mst,
    resample_tree_given_partition,
    sample_rst,
)

__all__ = [name for name in dir() if not name.startswith("_")]
