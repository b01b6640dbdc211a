"""Pipeline stages behind the command line: data generation and loading,
multi-seed training, densities, forecasts, the inequality sweep and the
scaling benchmark."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import density
from . import harris_wilson as hw
from . import io, plotting, sir_abm
from .nn import NetSpec
from .trainer import HWProblem, SIRProblem, TrainingConfig, calibrated_forecast, run_multiseed, train_seed

log = logging.getLogger(__name__)

SIR_LABELS = ("S", "I", "R")


@dataclass
class Dataset:
    series: np.ndarray  # (L, dim) observed frames
    O: np.ndarray = None
    C: np.ndarray = None
    W_star: np.ndarray = None


def provenance(cfg, seed=None):
    out = {"config": cfg.raw}
    if seed is not None:
        out["seed"] = seed
    return out


# -- data -----------------------------------------------------------------------


def generate_hw_data(N, M, alpha, beta, kappa, epsilon=1.0, sigma=0.0, dt=0.01, num_steps=1, seed=0):
    rng = np.random.default_rng(seed)
    O, C = hw.synthetic_network(N, M, rng)
    W0 = rng.uniform(0.5, 1.5, size=M) * O.sum() / (kappa * M)
    system = hw.HWSystem(O, W0, C, alpha=alpha, beta=beta, kappa=kappa, epsilon=epsilon, dt=dt)
    obs = hw.generate_hw_dataset(system, sigma, num_steps, seed)
    return Dataset(series=obs.frames, O=O, C=C, W_star=obs.W_star)


def generate_sir_data(n_agents=3000, n_steps=100, seed=0, **params):
    series = sir_abm.generate_sir_dataset(n_agents, sir_abm.ABMParams(**params), n_steps, seed)
    return Dataset(series=series)


def load_data(cfg):
    """Generate or read the observations named by the config's Data section."""
    opts = dict(cfg.data.options)
    if cfg.data.kind == "generate":
        seed = opts.pop("seed", 0)
        if cfg.model == "sir":
            return generate_sir_data(seed=seed, **opts)
        try:
            N, M = opts.pop("N"), opts.pop("M")
            alpha, beta, kappa = opts.pop("alpha"), opts.pop("beta"), opts.pop("kappa")
        except KeyError as exc:
            raise io.DataError(f"Data.generate needs {exc.args[0]}") from exc
        return generate_hw_data(N, M, alpha, beta, kappa, seed=seed, **opts)
    paths = cfg.data_paths()
    if cfg.model == "sir":
        return Dataset(series=io.read_series(paths["series"]))
    O, W, C, series = io.load_hw_dataset(
        paths["origin_zones"], paths["destination_zones"], paths["network"],
        raw_units=bool(opts.get("raw_units", False)),
        network_is_distance=bool(opts.get("network_is_distance", False)),
        time_series=paths.get("time_series"),
    )
    return Dataset(series=series, O=O, C=C, W_star=W)


def write_data(cfg, data, out_dir):
    prov = provenance(cfg, cfg.data.options.get("seed"))
    if cfg.model == "sir":
        path = io.write_series(out_dir / "series.csv", data.series, prov)
        plotting.plot_trajectories(out_dir / "series.svg", data.series, SIR_LABELS)
        return [path]
    paths = list(io.write_hw_dataset(out_dir, data.O, data.W_star, data.C, data.series, prov).values())
    plotting.plot_trajectories(out_dir / "time_series.svg", data.series, [f"W{j}" for j in range(data.series.shape[1])])
    return paths


# -- training ---------------------------------------------------------------------


def _loss_name(entry):
    if isinstance(entry, dict):
        extra = set(entry) - {"name"}
        if extra:
            raise ValueError(f"unknown keys in Training.loss_function: {sorted(extra)}")
        return str(entry.get("name", "MSELoss"))
    return str(entry)


def hw_netspec(M, output_dim=3):
    """Single hidden layer of 20 linear nodes, modulus output, biases on [0, 4]."""
    return NetSpec(
        input_dim=M, output_dim=output_dim, num_hidden_layers=1, nodes_per_layer=20, activation="linear",
        activation_override={-1: "abs"}, bias_init=(0.0, 4.0), learning_rate=0.002,
    )


def build_problem(cfg, data):
    tr = cfg.training
    to_learn = list(tr["to_learn"])
    fixed = dict(tr.get("true_parameters") or {})
    if cfg.model == "sir":
        problem = SIRProblem(to_learn, fixed)
    else:
        problem = HWProblem(data.O, data.C, to_learn, fixed, dt=float(cfg.data.options.get("dt", 0.01)))
    spec = NetSpec.from_config(cfg.neural_net, input_dim=data.series.shape[1], output_dim=len(to_learn))
    tcfg = TrainingConfig(
        to_learn=to_learn, true_parameters=fixed,
        batch_size=int(tr.get("batch_size", 1)), epochs=int(tr.get("epochs", 100)),
        seeds=list(cfg.seeds), loss=_loss_name(tr.get("loss_function", "MSELoss")),
    )
    if len(data.series) > 1 and tcfg.batch_size > len(data.series):
        raise ValueError(f"batch_size {tcfg.batch_size} exceeds series length {len(data.series)}")
    return problem, spec, tcfg


def train(cfg, data, out_dir):
    problem, spec, tcfg = build_problem(cfg, data)
    t0 = time.perf_counter()
    result = run_multiseed(problem, data.series, spec, tcfg, workers=cfg.workers)
    elapsed = time.perf_counter() - t0
    for seed, ss in result.per_seed.items():
        io.write_samples(out_dir / "samples" / f"seed_{seed}.csv", ss, provenance(cfg, seed))
    io.write_samples(out_dir / "samples.csv", result.samples, provenance(cfg, cfg.seeds))
    io.write_json(out_dir / "training.json", {
        "runtime_seconds": elapsed, "seeds": sorted(result.per_seed), "failures": result.failures,
        "n_samples": len(result.samples),
    }, provenance(cfg))
    names = result.samples.names
    if len(names) >= 2:
        plotting.plot_loss_potential(out_dir / "loss_potential.svg", result.samples, names[0], names[1])
    return result, elapsed


# -- densities and forecasts ---------------------------------------------------------


def density_report(samples, out_dir, n_bins=100, bandwidth=None, prominence=0.05, prov=None):
    out_dir = Path(out_dir)
    mds = density.marginals(samples, n_bins=n_bins, bandwidth=bandwidth)
    summary = {}
    for name, md in mds.items():
        stats = density.peak_stats(md, prominence)
        mean, std = density.expectation_std(md)
        io.write_density(out_dir / f"density_{name}.csv", md, prov)
        plotting.plot_density(out_dir / f"density_{name}.svg", md, stats)
        summary[name] = {"mle": density.mle(md), "mean": mean, "std": std, "bandwidth": md.bandwidth, **stats.to_dict()}
    io.write_json(out_dir / "peaks.json", {"parameters": summary}, prov)
    return mds, summary


def mle_vector(samples, n_bins=100):
    return np.array([density.mle(md) for md in density.marginals(samples, n_bins=n_bins).values()])


def forecast(cfg, data, estimate, out_dir, replicas=100, seed=0):
    problem, _, _ = build_problem(cfg, data)
    fc = calibrated_forecast(problem, estimate, data.series, replicas=replicas, seed=seed)
    dim = data.series.shape[1]
    labels = SIR_LABELS if cfg.model == "sir" else [f"W{j}" for j in range(dim)]
    prov = provenance(cfg, seed)
    t = np.arange(len(fc.mean))[:, None]
    io.write_table(
        out_dir / "forecast.csv", ["t", *[f"mean_{x}" for x in labels], *[f"std_{x}" for x in labels]],
        np.hstack([t, fc.mean, fc.std]), prov,
    )
    io.write_json(out_dir / "forecast.json", {
        "estimate": dict(zip(problem.to_learn, map(float, estimate))),
        "replicas": replicas, "mspe": fc.mspe, "mspe_std": fc.mspe_std,
    }, prov)
    observed = data.series if len(data.series) > 1 else np.vstack([data.series, data.series])
    plotting.plot_trajectories(out_dir / "forecast.svg", observed, labels, fc.mean, fc.std)
    return fc


# -- inequality sweep ------------------------------------------------------------------


def nu_sweep(O, C, alphas, betas, kappa=1.0, seed=0, tol=1e-8, max_iter=100_000):
    """Steady-state inequality over an (alpha, beta) grid, all cells relaxed
    from the same random start.  Cells that do not converge are NaN."""
    rng = np.random.default_rng(seed)
    W0 = rng.uniform(0.5, 1.5, size=len(C[0])) * np.sum(O) / (kappa * len(C[0]))
    nu = np.full((len(betas), len(alphas)), np.nan)
    for i, b in enumerate(betas):
        for j, a in enumerate(alphas):
            system = hw.HWSystem(O, W0, C, alpha=a, beta=b, kappa=kappa)
            try:
                W, _ = hw.steady_state(system, tol=tol, max_iter=max_iter)
            except hw.SteadyStateNotReached:
                continue
            nu[i, j] = hw.inequality_nu(W)
    return nu


# -- scaling benchmark ---------------------------------------------------------------------


def scaling_benchmark(sizes, seeds=10, epochs=6000, sigma=0.0, m_fraction=0.5, alpha=0.8, beta=2.0, kappa=2.0):
    """Mean wall time per epoch and final loss of Harris-Wilson training for
    each total size ``N + M`` (``M = m_fraction * size``).

    Returns rows ``(size, N, M, mean_epoch_seconds, std_epoch_seconds, mean_final_loss)``.
    """
    rows = []
    for size in sizes:
        M = max(2, int(round(m_fraction * size)))
        N = size - M
        if N < 1:
            raise ValueError(f"size {size} too small for m_fraction {m_fraction}")
        data = generate_hw_data(N, M, alpha, beta, kappa, sigma=sigma, num_steps=1 if sigma == 0 else 4, seed=size)
        problem = HWProblem(data.O, data.C, ["alpha", "beta", "kappa"], {"sigma": 0.0})
        spec = hw_netspec(M)
        times, losses = [], []
        for s in range(seeds):
            cfg = TrainingConfig(["alpha", "beta", "kappa"], {"sigma": 0.0}, batch_size=1, epochs=epochs, seeds=[s])
            t0 = time.perf_counter()
            res = train_seed(problem, data.series, spec, cfg, s)
            times.append((time.perf_counter() - t0) / epochs)
            losses.append(res.loss[res.epoch == epochs - 1].mean())
        rows.append((size, N, M, float(np.mean(times)), float(np.std(times)), float(np.mean(losses))))
    return rows


def loglog_slope(sizes, times):
    return float(np.polyfit(np.log(sizes), np.log(times), 1)[0])
