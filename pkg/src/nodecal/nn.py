"""Feed-forward network mapping an observed state frame to parameter estimates,
plus SGD and Adam optimizers working on :class:`~nodecal.autodiff.Value` leaves.

The configuration keys mirror the ``NeuralNet`` section of a run config::

    NeuralNet:
      num_layers: 1
      nodes_per_layer: {default: 20}
      biases: {default: [0, 1]}
      activation_funcs: {default: linear, layer_specific: {-1: abs}}
      learning_rate: 0.002
      optimizer: Adam
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Value

ACTIVATIONS = ("linear", "abs", "sigmoid", "tanh", "relu", "hardtanh")


@dataclass
class NetSpec:
    input_dim: int
    output_dim: int
    num_hidden_layers: int = 1
    nodes_per_layer: int = 20
    nodes_override: dict = field(default_factory=dict)
    activation: object = "linear"
    activation_override: dict = field(default_factory=dict)
    # None -> no bias, "default" -> fan-based uniform, (a, b) -> uniform on [a, b]
    bias_init: object = "default"
    bias_override: dict = field(default_factory=dict)
    learning_rate: float = 0.001
    optimizer: str = "adam"

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be positive")
        if self.num_hidden_layers < 0:
            raise ValueError("num_hidden_layers must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.optimizer = self.optimizer.lower()
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        n = self.num_layers
        for name, table in (("activation", self.activation_override), ("bias", self.bias_override)):
            for k in table:
                if not -1 <= int(k) < n:
                    raise ValueError(f"{name} override index {k} outside [-1, {n - 1}]")
        for k in self.nodes_override:
            if not 0 <= int(k) < self.num_hidden_layers:
                raise ValueError(f"nodes_per_layer override index {k} is not a hidden layer")
        for i in range(n):
            _parse_activation(self.activation_for(i))
            _check_bias(self.bias_for(i))

    @property
    def num_layers(self):
        """Number of affine transformations (hidden layers + output)."""
        return self.num_hidden_layers + 1

    def layer_sizes(self):
        hidden = [int(self.nodes_override.get(i, self.nodes_per_layer)) for i in range(self.num_hidden_layers)]
        return [self.input_dim, *hidden, self.output_dim]

    def _resolve(self, table, i, default):
        if i in table:
            return table[i]
        if i == self.num_layers - 1 and -1 in table:
            return table[-1]
        return default

    def activation_for(self, i):
        return self._resolve(self.activation_override, i, self.activation)

    def bias_for(self, i):
        return self._resolve(self.bias_override, i, self.bias_init)

    @classmethod
    def from_config(cls, cfg, *, input_dim, output_dim):
        """Build from a ``NeuralNet`` config mapping.  Unknown keys are rejected."""
        allowed = {"num_layers", "nodes_per_layer", "biases", "activation_funcs", "learning_rate", "optimizer"}
        unknown = set(cfg) - allowed
        if unknown:
            raise ValueError(f"unknown NeuralNet keys: {sorted(unknown)}")
        nodes = cfg.get("nodes_per_layer", {"default": 20})
        acts = cfg.get("activation_funcs", {"default": "linear"})
        # omitting the biases entry switches biases off
        biases = cfg.get("biases", {"default": None})
        for name, sub in (("nodes_per_layer", nodes), ("activation_funcs", acts), ("biases", biases)):
            extra = set(sub) - {"default", "layer_specific"}
            if extra:
                raise ValueError(f"unknown keys under {name}: {sorted(extra)}")
        return cls(
            input_dim=input_dim,
            output_dim=output_dim,
            num_hidden_layers=int(cfg.get("num_layers", 1)),
            nodes_per_layer=int(nodes.get("default", 20)),
            nodes_override={int(k): int(v) for k, v in (nodes.get("layer_specific") or {}).items()},
            activation=acts.get("default", "linear"),
            activation_override={int(k): v for k, v in (acts.get("layer_specific") or {}).items()},
            bias_init=_bias_from_cfg(biases.get("default")),
            bias_override={int(k): _bias_from_cfg(v) for k, v in (biases.get("layer_specific") or {}).items()},
            learning_rate=float(cfg.get("learning_rate", 0.001)),
            optimizer=str(cfg.get("optimizer", "adam")),
        )


def _bias_from_cfg(v):
    if v is None or v == "default":
        return v
    return tuple(float(x) for x in v)


def _check_bias(b):
    if b is None or b == "default":
        return
    a, c = b
    if a > c:
        raise ValueError(f"bias interval [{a}, {c}] has a > b")


def _parse_activation(act):
    """Return (name, args) for an activation given as a string or a mapping."""
    if isinstance(act, dict):
        name, args = act["name"], tuple(act.get("args", ()))
    else:
        name, args = act, ()
    name = str(name).lower()
    if name not in ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}")
    if name == "hardtanh" and not args:
        args = (-1.0, 1.0)
    return name, args


def _activate(name, args, x):
    if name == "linear":
        return x
    if name == "abs":
        return ad.abs_(x)
    if name == "sigmoid":
        return ad.sigmoid(x)
    if name == "tanh":
        return ad.tanh(x)
    if name == "relu":
        return ad.relu(x)
    return ad.hardtanh(x, *args)


class Net:
    """Stack of layers ``act_i(W_i x + b_i)``."""

    def __init__(self, spec, weights, biases):
        self.spec = spec
        self.weights = weights
        self.biases = biases
        self._acts = [_parse_activation(spec.activation_for(i)) for i in range(spec.num_layers)]
        sizes = spec.layer_sizes()
        for i, w in enumerate(weights):
            if w.shape != (sizes[i + 1], sizes[i]):
                raise ValueError(f"layer {i} weight shape {w.shape}, expected {(sizes[i + 1], sizes[i])}")

    def parameters(self):
        params = list(self.weights)
        params += [b for b in self.biases if b is not None]
        return params

    def __call__(self, x):
        return forward(self, x)

    def state_dict(self):
        return {
            "weights": [w.data.copy() for w in self.weights],
            "biases": [None if b is None else b.data.copy() for b in self.biases],
        }


def init_net(spec, seed):
    """Fresh network; weights and "default" biases are uniform on
    ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``."""
    rng = np.random.default_rng(seed)
    sizes = spec.layer_sizes()
    weights, biases = [], []
    for i in range(spec.num_layers):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(Value(rng.uniform(-bound, bound, size=(fan_out, fan_in)), requires_grad=True))
        b = spec.bias_for(i)
        _check_bias(b)
        if b is None:
            biases.append(None)
        elif b == "default":
            biases.append(Value(rng.uniform(-bound, bound, size=fan_out), requires_grad=True))
        else:
            biases.append(Value(rng.uniform(b[0], b[1], size=fan_out), requires_grad=True))
    return Net(spec, weights, biases)


def forward(net, x):
    h = x if isinstance(x, Value) else Value(x)
    if h.shape != (net.spec.input_dim,):
        raise ValueError(f"input shape {h.shape} does not match input_dim {net.spec.input_dim}")
    for w, b, (name, args) in zip(net.weights, net.biases, net._acts):
        h = w @ h
        if b is not None:
            h = h + b
        h = _activate(name, args, h)
    return h


class SGD:
    def __init__(self, params, lr=0.001):
        self.params = list(params)
        self.lr = lr
        self.t = 0

    def step(self):
        _require_grads(self.params)
        self.t += 1
        for p in self.params:
            p.data = p.data - self.lr * p.grad


class Adam:
    """Bias-corrected Adam with the usual defaults."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        _require_grads(self.params)
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, p in enumerate(self.params):
            g = p.grad
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


def _require_grads(params):
    if any(p.grad is None for p in params):
        raise RuntimeError("optimizer step before any backward pass")


def make_optimizer(net):
    cls = Adam if net.spec.optimizer == "adam" else SGD
    return cls(net.parameters(), lr=net.spec.learning_rate)


def optimizer_step(net, opt):
    opt.step()
