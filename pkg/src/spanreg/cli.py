"""Command-line surface: fit, predict, evaluate, simulate, sweep, waic-select.

Tabular inputs/outputs are CSV, posterior samples are JSON lines, and every
run writes a manifest echoing the fully resolved configuration so it can be
reproduced exactly. Exit codes: 0 ok, 1 runtime failure, 2 usage/parse.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .grid import DataError, build_grid, load_dataset_csv
from .likelihood import ModelConfig
from .metrics import (
    DomainEvaluator,
    crps_mean,
    log_power_denominator,
    mae,
    waic,
)
from .predict import block_index_of_points, predict_means_matrix
from .sampler import SamplerConfig, read_samples_jsonl, run_chains, write_samples_jsonl
from .simulate import (
    UShapeTruth,
    generate_ushape_data,
    run_asymptotic_sweep,
    select_hyperparams,
    waic_grid_search,
)

__all__ = ["main", "parse_config", "RunConfig", "ConfigError"]


class ConfigError(ValueError):
    """Invalid run configuration (usage-class failure, exit 2)."""


_MODEL_KEYS = {"sigma2", "gamma"}
_SAMPLER_KEYS = {"iterations", "burn_in", "thinning", "seed", "k_max", "chains"}
_HYPER_EXPLICIT = {"K", "log_lambda"}
_HYPER_RATE = {"c_b", "alpha_b", "c_p", "alpha_p"}
_TOP_KEYS = {"data", "model", "sampler", "hyper", "on_disconnected"}


@dataclass
class RunConfig:
    """Resolved fit configuration (defaults follow the simulation protocol)."""

    data: str | None = None
    sigma2: float = 1.0
    gamma: float = 1.0
    iterations: int = 20000
    burn_in: int = 5000
    burn_in_explicit: bool = False
    thinning: int = 5
    seed: int = 0
    k_max: int = 5
    chains: int = 1
    hyper_mode: str = "rate"  # "rate" or "explicit"
    K: int | None = None
    log_lambda: float | None = None
    c_b: float = 5.0
    alpha_b: float = 1.0
    c_p: float = 0.1
    alpha_p: float = 0.5
    on_disconnected: str = "error"


def _check_keys(d: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")


def parse_config(path) -> RunConfig:
    """Load and strictly validate a JSON run configuration."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    _check_keys(raw, _TOP_KEYS, "config")
    cfg = RunConfig()
    if "data" in raw:
        cfg.data = str(raw["data"])
    model = raw.get("model", {})
    _check_keys(model, _MODEL_KEYS, "model")
    cfg.sigma2 = float(model.get("sigma2", cfg.sigma2))
    cfg.gamma = float(model.get("gamma", cfg.gamma))
    sampler = raw.get("sampler", {})
    _check_keys(sampler, _SAMPLER_KEYS, "sampler")
    cfg.iterations = int(sampler.get("iterations", cfg.iterations))
    cfg.burn_in = int(sampler.get("burn_in", cfg.burn_in))
    cfg.burn_in_explicit = "burn_in" in sampler
    cfg.thinning = int(sampler.get("thinning", cfg.thinning))
    cfg.seed = int(sampler.get("seed", cfg.seed))
    cfg.k_max = int(sampler.get("k_max", cfg.k_max))
    cfg.chains = int(sampler.get("chains", cfg.chains))
    hyper = raw.get("hyper", {})
    _check_keys(hyper, _HYPER_EXPLICIT | _HYPER_RATE, "hyper")
    has_explicit = bool(_HYPER_EXPLICIT & set(hyper))
    has_rate = bool(_HYPER_RATE & set(hyper))
    if has_explicit and has_rate:
        raise ConfigError("hyper: give either explicit {K, log_lambda} or rate "
                          "constants {c_b, alpha_b, c_p, alpha_p}, not both")
    if has_explicit:
        if set(hyper) != _HYPER_EXPLICIT:
            raise ConfigError("explicit hyper needs both K and log_lambda")
        cfg.hyper_mode = "explicit"
        cfg.K = int(hyper["K"])
        cfg.log_lambda = float(hyper["log_lambda"])
    else:
        cfg.c_b = float(hyper.get("c_b", cfg.c_b))
        cfg.alpha_b = float(hyper.get("alpha_b", cfg.alpha_b))
        cfg.c_p = float(hyper.get("c_p", cfg.c_p))
        cfg.alpha_p = float(hyper.get("alpha_p", cfg.alpha_p))
    if "on_disconnected" in raw:
        if raw["on_disconnected"] not in ("error", "largest"):
            raise ConfigError("on_disconnected must be 'error' or 'largest'")
        cfg.on_disconnected = raw["on_disconnected"]
    return cfg


def _resolve_hyper(cfg: RunConfig, n: int):
    if cfg.hyper_mode == "explicit":
        return int(cfg.K), float(cfg.log_lambda)
    hp = select_hyperparams(n, cfg.c_b, cfg.alpha_b, cfg.c_p, cfg.alpha_p)
    return hp.K, hp.log_lambda


def fit(cfg: RunConfig, out_prefix: str) -> dict:
    """Run the sampler and write samples/diagnostics/manifest files."""
    if cfg.data is None:
        raise ConfigError("no dataset given (config 'data' or --data)")
    dataset = load_dataset_csv(cfg.data)
    K, log_lambda = _resolve_hyper(cfg, dataset.n)
    grid = build_grid(dataset, K, on_disconnected=cfg.on_disconnected)
    model = ModelConfig(sigma2=cfg.sigma2, gamma=cfg.gamma, d=dataset.d)
    sc = SamplerConfig(log_lambda=log_lambda, k_max=cfg.k_max, n_iters=cfg.iterations,
                       burn_in=cfg.burn_in, thinning=cfg.thinning, seed=cfg.seed,
                       n_chains=cfg.chains)
    samples, diagnostics = run_chains(dataset, grid, model, sc)
    paths = {
        "samples": out_prefix + "samples.jsonl",
        "diagnostics": out_prefix + "diagnostics.json",
        "manifest": out_prefix + "manifest.json",
    }
    write_samples_jsonl(samples, paths["samples"])
    with open(paths["diagnostics"], "w") as fh:
        json.dump(diagnostics, fh)
    manifest = {
        "command": "fit",
        "version": __version__,
        "config": asdict(cfg),
        "resolved": {"K": K, "log_lambda": log_lambda, "n": dataset.n,
                     "d": dataset.d, "n_blocks": grid.n_blocks},
        "outputs": paths,
    }
    with open(paths["manifest"], "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def _grid_from_manifest(manifest: dict):
    cfg_d = manifest["config"]
    dataset = load_dataset_csv(cfg_d["data"])
    grid = build_grid(dataset, manifest["resolved"]["K"],
                      on_disconnected=cfg_d.get("on_disconnected", "error"))
    return dataset, grid, cfg_d


def _load_points_csv(path, d: int):
    """Prediction input `s_h,s_v,x1..xd`; returns (locations, x)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        expected = ["s_h", "s_v"] + [f"x{i + 1}" for i in range(d)]
        if header != expected:
            for col in expected:
                if col not in header:
                    raise DataError(f"{path}: missing column '{col}'")
            raise DataError(f"{path}: header must be {expected}")
        rows = []
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DataError(f"{path}: row {rownum}: {exc}") from None
    arr = np.asarray(rows, dtype=float)
    if arr.size == 0:
        raise DataError(f"{path}: no data rows")
    return arr[:, :2], arr[:, 2:]


def _reference_from_arg(name: str):
    if name == "ushape":
        truth = UShapeTruth()
        return truth.reference(), truth.thetas
    with open(name) as fh:
        payload = json.load(fh)
    _check_keys(payload, {"kind", "thetas"}, "reference")
    if payload.get("kind") != "ushape":
        raise ConfigError(f"unsupported reference kind {payload.get('kind')!r}")
    truth = UShapeTruth()
    thetas = np.asarray(payload.get("thetas", truth.thetas), dtype=float)
    return truth.reference(), thetas


def _cmd_fit(args) -> int:
    cfg = parse_config(args.config) if args.config else RunConfig()
    if args.data:
        cfg.data = args.data
    if args.seed is not None:
        cfg.seed = args.seed
    if args.iterations is not None:
        cfg.iterations = args.iterations
        # keep the stock 1/4 burn-in ratio unless the config pinned one
        if not cfg.burn_in_explicit and cfg.burn_in >= cfg.iterations:
            cfg.burn_in = cfg.iterations // 4
    if args.on_disconnected is not None:
        cfg.on_disconnected = args.on_disconnected
    manifest = fit(cfg, args.out)
    n_samples = _count_lines(manifest["outputs"]["samples"])
    status = {"ok": True, "manifest": manifest["outputs"]["manifest"],
              "n_samples": n_samples}
    if n_samples == 0:
        status["warning"] = "no samples retained (iterations <= burn_in)"
    print(json.dumps(status))
    return 0


def _count_lines(path) -> int:
    with open(path) as fh:
        return sum(1 for line in fh if line.strip())


def _cmd_predict(args) -> int:
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    dataset, grid, _ = _grid_from_manifest(manifest)
    samples = read_samples_jsonl(manifest["outputs"]["samples"])
    if not samples:
        raise ConfigError("no posterior samples in the fit output")
    locs, x = _load_points_csv(args.points, dataset.d)
    means = predict_means_matrix(samples, grid, locs, x)
    idx = block_index_of_points(grid, locs)
    label_mat = np.stack([s.block_labels[idx] for s in samples])
    kmax = int(label_mat.max())
    tallies = np.stack([(label_mat == lab).sum(axis=0) for lab in range(1, kmax + 1)])
    modal = tallies.argmax(axis=0) + 1  # ties resolve to the smaller label
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s_h", "s_v", "mean", "q05", "q95", "modal_label"])
        q05 = np.quantile(means, 0.05, axis=0)
        q95 = np.quantile(means, 0.95, axis=0)
        avg = means.mean(axis=0)
        for i in range(locs.shape[0]):
            w.writerow([f"{locs[i, 0]:.10g}", f"{locs[i, 1]:.10g}",
                        f"{avg[i]:.10g}", f"{q05[i]:.10g}", f"{q95[i]:.10g}",
                        int(modal[i])])
    print(json.dumps({"ok": True, "points": int(locs.shape[0]), "output": args.output}))
    return 0


def _cmd_evaluate(args) -> int:
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    dataset, grid, cfg_d = _grid_from_manifest(manifest)
    samples = read_samples_jsonl(args.samples or manifest["outputs"]["samples"])
    if not samples:
        raise ConfigError("no posterior samples to evaluate")
    ref, true_thetas = _reference_from_arg(args.reference)
    n = dataset.n
    ev = DomainEvaluator(grid, ref, args.resolution)
    denom = log_power_denominator(n, args.alpha0, cfg_d.get("alpha_b", 1.0))
    scale = math.sqrt(n) / denom

    test_data, _, test_mu = generate_ushape_data(args.n_test, seed=args.test_seed)
    mu_test = predict_means_matrix(samples, grid, test_data.locations, test_data.x)
    e3 = math.sqrt(n) / (args.n_test * denom) * ((mu_test - test_mu[None, :]) ** 2).sum(axis=1)

    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "k", "e1", "e2", "e3"])
        for si, s in enumerate(samples):
            eps = ev.epsilon_parts(s.block_labels)[0]
            matched = ev.matched(s.block_labels)
            err = np.linalg.norm(s.thetas - true_thetas[matched - 1], axis=1).max()
            w.writerow([si, s.k, f"{scale * eps:.10g}", f"{scale * err:.10g}",
                        f"{e3[si]:.10g}"])

    obs_labels = np.asarray(ref.membership(dataset.locations), dtype=np.int64)
    if obs_labels.min() < 1:
        raise ConfigError("reference does not cover every observed location")
    true_obs_mu = np.einsum("ij,ij->i", dataset.x, true_thetas[obs_labels - 1])
    mu_obs = predict_means_matrix(samples, grid, dataset.locations, dataset.x)
    model = ModelConfig(sigma2=cfg_d.get("sigma2", 1.0), gamma=cfg_d.get("gamma", 1.0),
                        d=dataset.d)
    summary = {
        "mae": mae(mu_obs, true_obs_mu),
        "crps_mean": crps_mean(mu_obs, true_obs_mu),
        "waic": waic(samples, dataset, grid, model) if len(samples) > 1 else None,
    }
    with open(args.output + ".summary.json", "w") as fh:
        json.dump(summary, fh)
    print(json.dumps({"ok": True, **summary}))
    return 0


def _cmd_simulate(args) -> int:
    dataset, labels, mu = generate_ushape_data(args.n, seed=args.seed)
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s_h", "s_v", "x1", "x2", "y"])
        for i in range(dataset.n):
            w.writerow([f"{v:.10g}" for v in (*dataset.locations[i], *dataset.x[i], dataset.y[i])])
    if args.truth:
        with open(args.truth, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["region", "mu"])
            for i in range(dataset.n):
                w.writerow([int(labels[i]), f"{mu[i]:.10g}"])
    print(json.dumps({"ok": True, "n": args.n, "output": args.output}))
    return 0


def _cmd_sweep(args) -> int:
    n_grid = [int(v) for v in args.n_grid.split(",")]
    rows = run_asymptotic_sweep(
        n_grid, base_seed=args.seed, c_b=args.c_b, alpha_b=args.alpha_b,
        c_p=args.c_p, alpha_p=args.alpha_p, alpha0=args.alpha0,
        sigma2=args.sigma2, gamma=args.gamma, k_max=args.k_max,
        n_iters=args.iterations, burn_in=args.burn_in, thinning=args.thinning,
        n_test=args.n_test, resolution=args.resolution,
    )
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "sample", "k", "e1", "e2", "e3"])
        for r in rows:
            w.writerow([r["n"], r["sample"], r["k"],
                        f"{r['e1']:.10g}", f"{r['e2']:.10g}", f"{r['e3']:.10g}"])
    manifest = {"command": "sweep", "version": __version__,
                "args": {k: getattr(args, k) for k in
                         ("n_grid", "seed", "c_b", "alpha_b", "c_p", "alpha_p",
                          "alpha0", "sigma2", "gamma", "k_max", "iterations",
                          "burn_in", "thinning", "n_test", "resolution")},
                "output": args.output}
    with open(args.output + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    print(json.dumps({"ok": True, "rows": len(rows), "output": args.output}))
    return 0


def _cmd_waic_select(args) -> int:
    dataset = load_dataset_csv(args.data)
    best, table = waic_grid_search(
        dataset,
        [float(v) for v in args.cb_grid.split(",")],
        [float(v) for v in args.cp_grid.split(",")],
        alpha_b=args.alpha_b, alpha_p=args.alpha_p, sigma2=args.sigma2,
        gamma=args.gamma, k_max=args.k_max, seed=args.seed,
        n_iters=args.iterations, burn_in=args.burn_in, thinning=args.thinning,
    )
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["c_b", "c_p", "K", "log_lambda", "waic"])
        for r in table:
            w.writerow([r["c_b"], r["c_p"], r["K"],
                        f"{r['log_lambda']:.10g}", f"{r['waic']:.10g}"])
    print(json.dumps({"ok": True, "best_c_b": best[0], "best_c_p": best[1],
                      "output": args.output}))
    return 0


def _add_fit_like_options(p):
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--k-max", dest="k_max", type=int, default=5)
    p.add_argument("--iterations", type=int, default=20000)
    p.add_argument("--burn-in", dest="burn_in", type=int, default=5000)
    p.add_argument("--thinning", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="spanreg",
        description="Spatially clustered regression on spanning-tree block partitions.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the model to a CSV dataset")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--data", help="dataset CSV (s_h,s_v,x1..xd,y)")
    p.add_argument("--out", default="./", help="output path prefix")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--on-disconnected", dest="on_disconnected",
                   choices=("error", "largest"),
                   help="what to do when the active-block graph is disconnected")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", help="predict at new locations")
    p.add_argument("--manifest", required=True)
    p.add_argument("--points", required=True, help="CSV of s_h,s_v,x1..xd")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="score posterior samples against a reference")
    p.add_argument("--manifest", required=True)
    p.add_argument("--samples", help="defaults to the manifest's samples file")
    p.add_argument("--reference", default="ushape")
    p.add_argument("--output", required=True)
    p.add_argument("--alpha0", type=float, default=0.1)
    p.add_argument("--resolution", type=int, default=500)
    p.add_argument("--n-test", dest="n_test", type=int, default=5000)
    p.add_argument("--test-seed", dest="test_seed", type=int, default=1)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("simulate", help="generate U-shape synthetic data")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--truth", help="optional truth CSV (region, mu)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="asymptotic sweep over sample sizes")
    p.add_argument("--n-grid", dest="n_grid", required=True, help="e.g. 500,1000,2000")
    p.add_argument("--output", required=True)
    p.add_argument("--c-b", dest="c_b", type=float, default=5.0)
    p.add_argument("--alpha-b", dest="alpha_b", type=float, default=1.0)
    p.add_argument("--c-p", dest="c_p", type=float, default=0.1)
    p.add_argument("--alpha-p", dest="alpha_p", type=float, default=0.5)
    p.add_argument("--alpha0", type=float, default=0.1)
    p.add_argument("--n-test", dest="n_test", type=int, default=5000)
    p.add_argument("--resolution", type=int, default=500)
    _add_fit_like_options(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("waic-select", help="WAIC grid search over (c_b, c_p)")
    p.add_argument("--data", required=True)
    p.add_argument("--cb-grid", dest="cb_grid", default="1,3,5,7")
    p.add_argument("--cp-grid", dest="cp_grid", default="0.01,0.1,0.5")
    p.add_argument("--alpha-b", dest="alpha_b", type=float, default=1.0)
    p.add_argument("--alpha-p", dest="alpha_p", type=float, default=0.5)
    p.add_argument("--output", required=True)
    _add_fit_like_options(p)
    p.set_defaults(func=_cmd_waic_select)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 2
    except Exception as exc:  # runtime-class failures: one structured line
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
