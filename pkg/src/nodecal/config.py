"""Declarative run configuration.

A run file is a YAML tree with top-level keys ``model``, ``seeds`` (or a
single ``seed``), ``output_dir``, ``workers`` and the sections ``Data``,
``NeuralNet`` and ``Training``.  Parsing is strict: an unknown key anywhere
raises :class:`ConfigError` before any data is generated or loaded.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .nn import NetSpec

MODELS = ("sir", "harris_wilson")

TOP_KEYS = {"model", "seed", "seeds", "output_dir", "workers", "Data", "NeuralNet", "Training"}
TRAINING_KEYS = {"to_learn", "true_parameters", "batch_size", "epochs", "loss_function"}
NET_KEYS = {"num_layers", "nodes_per_layer", "biases", "activation_funcs", "learning_rate", "optimizer"}

GENERATE_KEYS = {
    "sir": {"n_agents", "n_steps", "r_infect", "p_infect", "t_infectious", "sigma_s", "sigma_i", "sigma_r", "space", "seed"},
    "harris_wilson": {"N", "M", "alpha", "beta", "kappa", "epsilon", "sigma", "dt", "num_steps", "seed"},
}
LOAD_KEYS = {
    "sir": {"series"},
    "harris_wilson": {"dir", "network", "origin_zones", "destination_zones", "time_series", "raw_units", "network_is_distance", "dt"},
}

OUTPUT_ENV = "NODECAL_OUTPUT"


class ConfigError(ValueError):
    pass


def _reject_unknown(where, mapping, allowed):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(mapping).__name__}")
    extra = set(mapping) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


@dataclass
class DataSource:
    kind: str  # "generate" or "load_from_dir"
    options: dict


@dataclass
class RunConfig:
    model: str
    seeds: list
    data: DataSource
    neural_net: dict
    training: dict
    output_dir: Path
    workers: int = 1
    base_dir: Path = field(default_factory=Path.cwd)
    raw: dict = field(default_factory=dict)

    def resolve(self, path):
        """Paths in the config are relative to the config file."""
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def data_paths(self):
        """Resolved input files of a ``load_from_dir`` source."""
        if self.data.kind != "load_from_dir":
            return {}
        opts = self.data.options
        if self.model == "sir":
            return {"series": self.resolve(opts["series"])}
        root = self.resolve(opts.get("dir", "."))
        paths = {
            "origin_zones": opts.get("origin_zones", "origin_sizes.csv"),
            "destination_zones": opts.get("destination_zones", "dest_sizes.csv"),
            "network": opts.get("network", "network.csv"),
        }
        if "time_series" in opts:
            paths["time_series"] = opts["time_series"]
        return {k: (Path(v) if Path(v).is_absolute() else root / v) for k, v in paths.items()}


def output_root(cli_value=None):
    if cli_value is not None:
        return Path(cli_value)
    return Path(os.environ.get(OUTPUT_ENV, "."))


def parse_config(tree, base_dir=None, out_root=None):
    _reject_unknown("config", tree, TOP_KEYS)
    model = tree.get("model")
    if model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}, got {model!r}")

    if ("seed" in tree) == ("seeds" in tree):
        raise ConfigError("give exactly one of 'seed' or 'seeds'")
    seeds = [tree["seed"]] if "seed" in tree else list(tree["seeds"] or [])
    if not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise ConfigError("seeds must be a non-empty list of non-negative integers")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds contain duplicates")

    data = tree.get("Data")
    if not isinstance(data, dict) or len(data) != 1 or next(iter(data)) not in ("generate", "load_from_dir"):
        raise ConfigError("Data must contain exactly one of 'generate' or 'load_from_dir'")
    kind, opts = next(iter(data.items()))
    opts = opts or {}
    allowed = GENERATE_KEYS[model] if kind == "generate" else LOAD_KEYS[model]
    _reject_unknown(f"Data.{kind}", opts, allowed)
    if kind == "load_from_dir" and model == "sir" and "series" not in opts:
        raise ConfigError("Data.load_from_dir for sir needs 'series'")

    net = tree.get("NeuralNet", {}) or {}
    _reject_unknown("NeuralNet", net, NET_KEYS)

    training = tree.get("Training")
    if training is None:
        raise ConfigError("missing Training section")
    _reject_unknown("Training", training, TRAINING_KEYS)
    if not training.get("to_learn"):
        raise ConfigError("Training.to_learn is required")
    if not isinstance(training.get("true_parameters", {}) or {}, dict):
        raise ConfigError("Training.true_parameters must be a mapping")

    try:
        # dry build to validate nested NeuralNet entries; input size is data-dependent
        NetSpec.from_config(net, input_dim=1, output_dim=len(training["to_learn"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"NeuralNet: {exc}") from exc

    workers = tree.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers must be a positive integer")

    base = Path(base_dir) if base_dir is not None else Path.cwd()
    out = Path(tree.get("output_dir", "output"))
    if not out.is_absolute():
        out = output_root(out_root) / out
    cfg = RunConfig(
        model=model, seeds=seeds, data=DataSource(kind, dict(opts)), neural_net=dict(net),
        training=dict(training), output_dir=out, workers=workers, base_dir=base, raw=tree,
    )
    for name, p in cfg.data_paths().items():
        if not p.is_file():
            raise ConfigError(f"Data.load_from_dir: {name} file not found: {p}")
    return cfg


def load_config(path, out_root=None):
    path = Path(path)
    try:
        tree = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(tree or {}, base_dir=path.parent, out_root=out_root)
