"""Reversible-jump MCMC over spanning-tree partitions.

Four move types act on (tree, cut set):

* birth  — cut one more within-cluster tree edge (k -> k+1); accepted with
  log ratio  log lam - log(k+1) + log r_d(k+1) - log r_b(k) + dloglik.
  The uniform-edge proposal odds cancel exactly against the uniform
  induced-partition prior's binomial terms, so neither appears.
* death  — merge across a uniformly chosen cut edge (k -> k-1); mirror ratio.
* change — a split proposal chained into a merge proposal, tested once with
  the combined ratio; every prior and proposal term cancels at equal k, so
  the test reduces to the likelihood ratio of the endpoints. k is preserved
  in every completed change move and the kernel is reversible.
* hyper  — redraw the spanning tree conditional on the partition
  (stratified weights + MST); always accepted, changes nothing else.

States carry per-cluster sufficient statistics and a cached collapsed
log-likelihood; moves update both incrementally and the cache is resynced
from scratch periodically to stop float drift.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .grid import BlockGrid, Dataset
from .likelihood import (
    ClusterStats,
    ModelConfig,
    block_stats,
    integrated_log_likelihood,
    log_likelihood_delta_split,
    sample_theta_conditional,
)
from .tree import (
    SpanningTree,
    TreePartitionState,
    resample_tree_given_partition,
    sample_rst,
)

__all__ = [
    "SamplerConfig",
    "ChainState",
    "PosteriorSample",
    "default_move_probs",
    "init_chain",
    "birth_move",
    "death_move",
    "change_move",
    "hyper_move",
    "step",
    "run_chain",
    "run_chains",
    "write_samples_jsonl",
    "read_samples_jsonl",
]

MOVES = ("birth", "death", "change", "hyper")
RESYNC_EVERY = 1000


def default_move_probs(k: int, k_max: int):
    """(r_b, r_d, r_c, r_h): symmetric 1/4 each, boundary mass shifted.

    At k=1 the death mass moves to birth; at k=k_max the birth mass moves to
    death. The degenerate k_max=1 case keeps only change/hyper.
    """
    if k_max == 1:
        return (0.0, 0.0, 0.5, 0.5)
    if k <= 1:
        return (0.5, 0.0, 0.25, 0.25)
    if k >= k_max:
        return (0.0, 0.5, 0.25, 0.25)
    return (0.25, 0.25, 0.25, 0.25)


@dataclass(frozen=True)
class SamplerConfig:
    """Chain settings; lambda is carried in log space only."""

    log_lambda: float
    k_max: int = 5
    n_iters: int = 20000
    burn_in: int = 5000
    thinning: int = 5
    seed: int = 0
    n_chains: int = 1
    move_probs: object = None  # callable (k, k_max) -> (r_b, r_d, r_c, r_h)

    def __post_init__(self):
        if (self.k_max < 1 or self.n_iters < 0 or self.burn_in < 0
                or self.thinning < 1 or self.n_chains < 1):
            raise ValueError("invalid sampler configuration")

    def probs(self, k: int):
        fn = self.move_probs if self.move_probs is not None else default_move_probs
        p = fn(k, self.k_max)
        if len(p) != 4 or min(p) < 0 or abs(sum(p) - 1.0) > 1e-9:
            raise ValueError(f"move probabilities at k={k} must be a 4-simplex point")
        return p


@dataclass
class PosteriorSample:
    """One retained draw: partition, per-cluster coefficients, likelihood."""

    iteration: int
    k: int
    block_labels: np.ndarray  # (M,), values 1..k
    thetas: np.ndarray        # (k, d)
    log_lik: float


class _Context:
    """Per-fit constants: data stats aggregated to blocks."""

    def __init__(self, dataset: Dataset, grid: BlockGrid, model: ModelConfig):
        if model.d != dataset.d:
            raise ValueError(f"model d={model.d} != data d={dataset.d}")
        self.grid = grid
        self.model = model
        self.block_gram, self.block_xty, self.block_yty, self.block_count = block_stats(dataset, grid)
        kept = grid.block_of >= 0
        self.n = int(kept.sum())
        self.total_yty = float(self.block_yty.sum())

    def stats_of_blocks(self, blocks) -> ClusterStats:
        b = np.asarray(blocks, dtype=np.int64)
        return ClusterStats(
            self.block_gram[b].sum(axis=0),
            self.block_xty[b].sum(axis=0),
            float(self.block_yty[b].sum()),
            int(self.block_count[b].sum()),
        )


@dataclass
class ChainState:
    """Mutable single-chain state; owned by exactly one chain."""

    tp: TreePartitionState
    stats: list                      # ClusterStats per label (index label-1)
    log_lik: float
    cut_mask: np.ndarray             # bool over tree-edge ids
    tree_nbrs: list                  # per-node [(neighbor, tree_edge_id)]
    iteration: int = 0
    counters: dict = field(default_factory=lambda: {m: [0, 0] for m in MOVES})  # [proposed, accepted]

    @property
    def k(self) -> int:
        return self.tp.k

    def clone(self) -> "ChainState":
        return ChainState(
            tp=self.tp.copy(),
            stats=list(self.stats),
            log_lik=self.log_lik,
            cut_mask=self.cut_mask.copy(),
            tree_nbrs=self.tree_nbrs,
            iteration=self.iteration,
            counters={m: list(c) for m, c in self.counters.items()},
        )


def _cut_mask(tree: SpanningTree, cut_edges) -> np.ndarray:
    mask = np.zeros(tree.n_edges, dtype=bool)
    for e in cut_edges:
        mask[e] = True
    return mask


def init_chain(ctx: _Context, rng: np.random.Generator) -> ChainState:
    """Single cluster, random spanning tree."""
    grid = ctx.grid
    tree = sample_rst(grid, rng)
    labels = np.ones(grid.n_blocks, dtype=np.int64)
    tp = TreePartitionState(tree=tree, cut_edges=(), labels=labels, k=1)
    stats = [ctx.stats_of_blocks(np.arange(grid.n_blocks))]
    log_lik = integrated_log_likelihood(stats, ctx.model, ctx.n, ctx.total_yty)
    return ChainState(
        tp=tp,
        stats=stats,
        log_lik=log_lik,
        cut_mask=_cut_mask(tree, ()),
        tree_nbrs=tree.neighbor_lists(grid.n_blocks),
    )


def _split_side(state: ChainState, e: int):
    """Nodes of one side of cutting tree edge e, by alternating BFS.

    Returns (side_nodes, side_holds_a). Walks both sides in lockstep and
    stops with whichever finishes first, so cost tracks the smaller side.
    """
    a, b = (int(v) for v in state.tp.tree.edges[e])
    nbrs = state.tree_nbrs
    cut = state.cut_mask
    seen_a, seen_b = {a}, {b}
    stack_a, stack_b = [a], [b]
    while True:
        if stack_a:
            u = stack_a.pop()
            for v, eid in nbrs[u]:
                if eid != e and not cut[eid] and v not in seen_a:
                    seen_a.add(v)
                    stack_a.append(v)
        if not stack_a:
            return np.fromiter(seen_a, dtype=np.int64, count=len(seen_a)), True
        if stack_b:
            u = stack_b.pop()
            for v, eid in nbrs[u]:
                if eid != e and not cut[eid] and v not in seen_b:
                    seen_b.add(v)
                    stack_b.append(v)
        if not stack_b:
            return np.fromiter(seen_b, dtype=np.int64, count=len(seen_b)), False


def _canonicalize(labels_raw: np.ndarray, stats_by_raw: dict):
    """Renumber clusters 1..k by smallest member block; reorder stats to match."""
    uniq, first = np.unique(labels_raw, return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.zeros(int(uniq.max()) + 1, dtype=np.int64)
    remap[uniq[order]] = np.arange(1, uniq.size + 1)
    stats = [stats_by_raw[int(l)] for l in uniq[order]]
    return remap[labels_raw], stats


@dataclass
class _Proposal:
    labels_raw: np.ndarray
    stats_by_raw: dict
    cut_edges: tuple
    delta: float
    log_ratio: float


def _split_proposal(state: ChainState, ctx: _Context, e: int):
    """Common split machinery: new raw labels/stats after cutting edge e."""
    a = int(state.tp.tree.edges[e][0])
    side, _ = _split_side(state, e)
    j = int(state.tp.labels[a])  # both endpoints share the label on a within edge
    parent = state.stats[j - 1]
    side_stats = ctx.stats_of_blocks(side)
    other_stats = parent - side_stats
    delta = log_likelihood_delta_split(parent, side_stats, other_stats, ctx.model, ctx.n)
    k = state.k
    labels_raw = state.tp.labels.copy()
    labels_raw[side] = k + 1
    stats_by_raw = {l + 1: state.stats[l] for l in range(k)}
    stats_by_raw[j] = other_stats
    stats_by_raw[k + 1] = side_stats
    return labels_raw, stats_by_raw, delta


def birth_move(state: ChainState, ctx: _Context, config: SamplerConfig,
               rng: np.random.Generator, forced_edge: int | None = None):
    """Propose cutting a uniform within-cluster tree edge; None if infeasible."""
    within = np.nonzero(~state.cut_mask)[0]
    if state.k >= config.k_max or within.size == 0:
        return None
    e = int(within[rng.integers(within.size)]) if forced_edge is None else int(forced_edge)
    labels_raw, stats_by_raw, delta = _split_proposal(state, ctx, e)
    k = state.k
    r_b = config.probs(k)[0]
    r_d_next = config.probs(k + 1)[1]
    log_ratio = (config.log_lambda - math.log(k + 1)
                 + math.log(r_d_next) - math.log(r_b) + delta)
    return _Proposal(labels_raw, stats_by_raw,
                     tuple(sorted(state.tp.cut_edges + (e,))), delta, log_ratio)


def death_move(state: ChainState, ctx: _Context, config: SamplerConfig,
               rng: np.random.Generator, forced_edge: int | None = None):
    """Propose merging across a uniform cut edge; None if k = 1."""
    if state.k < 2:
        return None
    cut = state.tp.cut_edges
    e = int(cut[rng.integers(len(cut))]) if forced_edge is None else int(forced_edge)
    a, b = (int(v) for v in state.tp.tree.edges[e])
    j1, j2 = int(state.tp.labels[a]), int(state.tp.labels[b])
    s1, s2 = state.stats[j1 - 1], state.stats[j2 - 1]
    merged = s1 + s2
    delta = -log_likelihood_delta_split(merged, s1, s2, ctx.model, ctx.n)
    k = state.k
    r_d = config.probs(k)[1]
    r_b_prev = config.probs(k - 1)[0]
    log_ratio = (math.log(k) - config.log_lambda
                 + math.log(r_b_prev) - math.log(r_d) + delta)
    labels_raw = state.tp.labels.copy()
    labels_raw[labels_raw == j2] = j1
    stats_by_raw = {l + 1: state.stats[l] for l in range(k)}
    stats_by_raw[j1] = merged
    del stats_by_raw[j2]
    new_cut = tuple(c for c in cut if c != e)
    return _Proposal(labels_raw, stats_by_raw, new_cut, delta, log_ratio)


def _commit(state: ChainState, prop: _Proposal) -> None:
    labels, stats = _canonicalize(prop.labels_raw, prop.stats_by_raw)
    state.tp = TreePartitionState(tree=state.tp.tree, cut_edges=prop.cut_edges,
                                  labels=labels, k=len(stats))
    state.stats = stats
    state.log_lik += prop.delta
    state.cut_mask = _cut_mask(state.tp.tree, prop.cut_edges)


def change_move(state: ChainState, ctx: _Context, config: SamplerConfig,
                rng: np.random.Generator) -> bool:
    """Cut one within edge, merge one cut edge of the result, test once.

    Start and end share k, so the cluster-count prior, the partition-count
    terms, and the proposal odds (1/(M-k) within edges, 1/k intermediate cut
    edges, both directions) all cancel: the combined M-H ratio is the bare
    likelihood ratio of the final vs the initial partition. The merge edge
    may be the freshly cut one, completing the move as the identity. Returns
    True when the proposal was accepted.
    """
    within = np.nonzero(~state.cut_mask)[0]
    if within.size == 0:
        return False
    e_add = int(within[rng.integers(within.size)])
    labels_mid, stats_mid, delta1 = _split_proposal(state, ctx, e_add)
    cut_mid = state.tp.cut_edges + (e_add,)
    e_del = int(cut_mid[rng.integers(len(cut_mid))])
    if e_del == e_add:
        return True  # completed as the identity
    a, b = (int(v) for v in state.tp.tree.edges[e_del])
    j1, j2 = int(labels_mid[a]), int(labels_mid[b])
    s1, s2 = stats_mid[j1], stats_mid[j2]
    merged = s1 + s2
    delta2 = -log_likelihood_delta_split(merged, s1, s2, ctx.model, ctx.n)
    if math.log(1.0 - rng.random()) >= delta1 + delta2:
        return False
    labels_raw = labels_mid
    labels_raw[labels_raw == j2] = j1
    stats_by_raw = dict(stats_mid)
    stats_by_raw[j1] = merged
    del stats_by_raw[j2]
    new_cut = tuple(sorted(c for c in cut_mid if c != e_del))
    _commit(state, _Proposal(labels_raw, stats_by_raw, new_cut, delta1 + delta2, 0.0))
    return True


def hyper_move(state: ChainState, grid: BlockGrid, rng: np.random.Generator) -> None:
    """Resample the tree given the partition; nothing else changes."""
    tp = resample_tree_given_partition(grid, state.tp, rng)
    state.tp = tp
    state.cut_mask = _cut_mask(tp.tree, tp.cut_edges)
    state.tree_nbrs = tp.tree.neighbor_lists(grid.n_blocks)


def step(state: ChainState, ctx: _Context, config: SamplerConfig,
         rng: np.random.Generator) -> str:
    """One kernel application; returns the move name attempted."""
    r_b, r_d, r_c, _ = config.probs(state.k)
    u = rng.random()
    if u < r_b:
        move = "birth"
    elif u < r_b + r_d:
        move = "death"
    elif u < r_b + r_d + r_c:
        move = "change"
    else:
        move = "hyper"
    c = state.counters[move]
    c[0] += 1
    if move == "hyper":
        hyper_move(state, ctx.grid, rng)
        c[1] += 1
    elif move == "change":
        if change_move(state, ctx, config, rng):
            c[1] += 1
    else:
        prop = (birth_move if move == "birth" else death_move)(state, ctx, config, rng)
        if prop is not None and math.log(1.0 - rng.random()) < prop.log_ratio:
            _commit(state, prop)
            c[1] += 1
    state.iteration += 1
    return move


def _resync(state: ChainState, ctx: _Context) -> None:
    """Rebuild stats and the cached log-likelihood from scratch."""
    stats = []
    for j in range(1, state.k + 1):
        stats.append(ctx.stats_of_blocks(np.nonzero(state.tp.labels == j)[0]))
    state.stats = stats
    state.log_lik = integrated_log_likelihood(stats, ctx.model, ctx.n, ctx.total_yty)


def run_chain(dataset: Dataset, grid: BlockGrid, model_config: ModelConfig,
              sampler_config: SamplerConfig, rng: np.random.Generator | None = None):
    """Run one chain; returns (samples, diagnostics).

    After burn-in, every ``thinning``-th state is retained with coefficients
    drawn fresh from their conditional posterior. Diagnostics carry per-move
    proposal/acceptance counts, the full k trace, and timing.
    """
    if rng is None:
        rng = np.random.default_rng(sampler_config.seed)
    ctx = _Context(dataset, grid, model_config)
    state = init_chain(ctx, rng)
    samples: list = []
    k_trace = np.empty(sampler_config.n_iters, dtype=np.int64)
    t0 = time.perf_counter()
    burn, thin = sampler_config.burn_in, sampler_config.thinning
    for it in range(1, sampler_config.n_iters + 1):
        step(state, ctx, sampler_config, rng)
        k_trace[it - 1] = state.k
        if it % RESYNC_EVERY == 0:
            _resync(state, ctx)
        if it > burn and (it - burn) % thin == 0:
            thetas = np.stack([
                sample_theta_conditional(state.stats[j], model_config, ctx.n, rng)
                for j in range(state.k)
            ])
            samples.append(PosteriorSample(
                iteration=it, k=state.k,
                block_labels=state.tp.labels.copy(),
                thetas=thetas, log_lik=state.log_lik,
            ))
    elapsed = time.perf_counter() - t0
    diagnostics = {
        "n_iters": sampler_config.n_iters,
        "burn_in": burn,
        "thinning": thin,
        "n_samples": len(samples),
        "seconds": elapsed,
        "moves": {
            m: {"proposed": c[0], "accepted": c[1],
                "rate": (c[1] / c[0]) if c[0] else None}
            for m, c in state.counters.items()
        },
        "k_trace": k_trace.tolist(),
    }
    return samples, diagnostics


def _one_chain(args):
    dataset, grid, model_config, sampler_config, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    return run_chain(dataset, grid, model_config, sampler_config, rng=rng)


def run_chains(dataset: Dataset, grid: BlockGrid, model_config: ModelConfig,
               sampler_config: SamplerConfig):
    """Run ``n_chains`` independent chains; streams derive from (seed, chain).

    Results are merged in chain order, so output never depends on scheduling.
    SPANREG_THREADS > 1 runs chains in worker processes.
    """
    seqs = np.random.SeedSequence(sampler_config.seed).spawn(sampler_config.n_chains)
    jobs = [(dataset, grid, model_config, sampler_config, s) for s in seqs]
    workers = int(os.environ.get("SPANREG_THREADS", "1"))
    if workers > 1 and sampler_config.n_chains > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_chain, jobs))
    else:
        results = [_one_chain(j) for j in jobs]
    samples = [s for r in results for s in r[0]]
    diagnostics = {"chains": [r[1] for r in results], "n_samples": len(samples)}
    return samples, diagnostics


def write_samples_jsonl(samples, path) -> None:
    """One record per retained draw: {iter, k, labels, thetas, log_lik}."""
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps({
                "iter": s.iteration,
                "k": s.k,
                "labels": s.block_labels.tolist(),
                "thetas": s.thetas.tolist(),
                "log_lik": s.log_lik,
            }) + "\n")


def read_samples_jsonl(path):
    samples = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            samples.append(PosteriorSample(
                iteration=int(rec["iter"]),
                k=int(rec["k"]),
                block_labels=np.asarray(rec["labels"], dtype=np.int64),
                thetas=np.asarray(rec["thetas"], dtype=float),
                log_lik=float(rec["log_lik"]),
            ))
    return samples
