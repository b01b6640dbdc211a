"""Command-line entry point.

Exit status: 0 on success, 1 on invalid configuration or data, 2 when
training diverges for every seed.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io, plotting, workbench
from .config import ConfigError, load_config, output_root
from .trainer import TrainingDiverged

log = logging.getLogger("nodecal")

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2


def _linspace(spec):
    lo, hi, n = spec
    return np.linspace(float(lo), float(hi), int(n))


def cmd_generate(args):
    cfg = load_config(args.config, args.output_root)
    data = workbench.load_data(cfg)
    paths = workbench.write_data(cfg, data, cfg.output_dir / "data")
    for p in paths:
        print(p)


def cmd_train(args):
    cfg = load_config(args.config, args.output_root)
    if args.workers is not None:
        cfg.workers = args.workers
    data = workbench.load_data(cfg)
    workbench.write_data(cfg, data, cfg.output_dir / "data")
    result, elapsed = workbench.train(cfg, data, cfg.output_dir)
    print(f"trained {len(result.per_seed)} seeds in {elapsed:.1f}s; {len(result.failures)} failed")
    print(cfg.output_dir / "samples.csv")


def cmd_densities(args):
    samples = io.read_samples(args.samples)
    out = Path(args.out) if args.out else Path(args.samples).parent / "densities"
    prov = io.read_provenance(args.samples)
    _, summary = workbench.density_report(samples, out, args.n_bins, args.bandwidth, args.prominence, prov)
    for name, s in summary.items():
        print(f"{name}: mle={s['mle']:.6g} mean={s['mean']:.6g} std={s['std']:.6g} peaks={s['count']}")


def cmd_forecast(args):
    cfg = load_config(args.config, args.output_root)
    data = workbench.load_data(cfg)
    if args.estimate is not None:
        estimate = np.array(args.estimate, dtype=float)
    elif args.samples is not None:
        estimate = workbench.mle_vector(io.read_samples(args.samples), args.n_bins)
    else:
        raise ConfigError("forecast needs --samples or --estimate")
    if len(estimate) != len(cfg.training["to_learn"]):
        raise ConfigError(f"estimate has {len(estimate)} values for {len(cfg.training['to_learn'])} learned parameters")
    fc = workbench.forecast(cfg, data, estimate, cfg.output_dir / "forecast", args.replicas, args.seed)
    print(f"estimate={estimate.tolist()} mspe={fc.mspe:.4e} +- {fc.mspe_std:.4e}")


def cmd_sweep(args):
    from .harris_wilson import synthetic_network

    rng = np.random.default_rng(args.seed)
    O, C = synthetic_network(args.N, args.M, rng)
    alphas, betas = _linspace(args.alphas), _linspace(args.betas)
    nu = workbench.nu_sweep(O, C, alphas, betas, kappa=args.kappa, seed=args.seed)
    out = output_root(args.output_root) / args.out
    aa, bb = np.meshgrid(alphas, betas)
    prov = {"command": "sweep-demo", "N": args.N, "M": args.M, "kappa": args.kappa, "seed": args.seed}
    io.write_table(out / "nu_grid.csv", ["alpha", "beta", "nu"], np.column_stack([aa.ravel(), bb.ravel(), nu.ravel()]), prov)
    plotting.plot_heatmap(out / "nu_grid.svg", alphas, betas, nu, "alpha", "beta", "nu")
    print(out / "nu_grid.csv")


def cmd_benchmark(args):
    rows = workbench.scaling_benchmark(args.sizes, seeds=args.seeds, epochs=args.epochs, sigma=args.sigma)
    out = output_root(args.output_root) / args.out
    prov = {"command": "benchmark", "seeds": args.seeds, "epochs": args.epochs, "sigma": args.sigma}
    io.write_table(out / "scaling.csv", ["size", "N", "M", "epoch_seconds", "epoch_seconds_std", "final_loss"], rows, prov)
    sizes = [r[0] for r in rows]
    times = [r[3] for r in rows]
    plotting.plot_scaling(out / "scaling.svg", sizes, times)
    for r in rows:
        print(f"N+M={r[0]:5d}  {r[3] * 1e3:8.3f} ms/epoch  final J={r[5]:.3e}")
    if len(rows) > 1:
        print(f"log-log slope {workbench.loglog_slope(sizes, times):.2f}")


def build_parser():
    p = argparse.ArgumentParser(prog="nodecal", description="Neural calibration of SIR and Harris-Wilson models.")
    p.add_argument("--output-root", help="base directory for outputs (default: $NODECAL_OUTPUT or .)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-data", help="generate or load data and write it as CSV")
    g.add_argument("config")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="multi-seed training; writes loss-potential samples")
    t.add_argument("config")
    t.add_argument("--workers", type=int, help="parallel seed workers (overrides config)")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("densities", help="marginal densities and peak statistics from a sample CSV")
    d.add_argument("samples")
    d.add_argument("--out")
    d.add_argument("--n-bins", type=int, default=100)
    d.add_argument("--bandwidth", type=float)
    d.add_argument("--prominence", type=float, default=0.05)
    d.set_defaults(func=cmd_densities)

    f = sub.add_parser("forecast", help="forward-model forecast and MSPE at an estimate")
    f.add_argument("config")
    f.add_argument("--samples", help="sample CSV; the estimate is the vector of marginal modes")
    f.add_argument("--estimate", type=float, nargs="+")
    f.add_argument("--replicas", type=int, default=100)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--n-bins", type=int, default=100)
    f.set_defaults(func=cmd_forecast)

    s = sub.add_parser("sweep-demo", help="steady-state inequality over an (alpha, beta) grid")
    s.add_argument("--N", type=int, default=30)
    s.add_argument("--M", type=int, default=10)
    s.add_argument("--kappa", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--alphas", nargs=3, default=(0.5, 2.0, 16), metavar=("LO", "HI", "N"))
    s.add_argument("--betas", nargs=3, default=(0.0, 6.0, 13), metavar=("LO", "HI", "N"))
    s.add_argument("--out", default="sweep")
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("benchmark", help="epoch time versus system size")
    b.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200, 400])
    b.add_argument("--seeds", type=int, default=10)
    b.add_argument("--epochs", type=int, default=6000)
    b.add_argument("--sigma", type=float, default=0.0)
    b.add_argument("--out", default="benchmark")
    b.set_defaults(func=cmd_benchmark)
    return p


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, io.DataError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
