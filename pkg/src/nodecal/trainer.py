"""Training engine: the network predicts parameters from an observed frame,
the solver runs ``B`` steps from that frame, and the batch-averaged squared
error drives one optimizer step.  Every step is recorded as a loss-potential
sample ``(lambda_hat, J)``.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import harris_wilson as hw
from . import sir_flow
from .nn import init_net, make_optimizer

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, msg, last_estimate=None):
        super().__init__(msg)
        self.last_estimate = last_estimate


@dataclass
class TrainingConfig:
    to_learn: list
    true_parameters: dict = field(default_factory=dict)
    batch_size: int = 1
    epochs: int = 100
    seeds: list = field(default_factory=lambda: [0])
    loss: str = "MSELoss"

    def __post_init__(self):
        if not self.to_learn:
            raise ValueError("to_learn must name at least one parameter")
        if len(set(self.to_learn)) != len(self.to_learn):
            raise ValueError("to_learn contains duplicates")
        both = set(self.to_learn) & set(self.true_parameters)
        if both:
            raise ValueError(f"parameters both learned and fixed: {sorted(both)}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.loss.lower() != "mseloss":
            raise ValueError(f"unsupported loss {self.loss!r}")
        if not self.seeds:
            raise ValueError("need at least one seed")


@dataclass
class LossPotentialSample:
    estimate: np.ndarray
    loss: float
    seed: int
    epoch: int
    step: int


@dataclass
class SampleSet:
    """Column store of loss-potential samples."""

    names: list
    seed: np.ndarray
    epoch: np.ndarray
    step: np.ndarray
    estimates: np.ndarray  # (n, p)
    loss: np.ndarray

    @classmethod
    def from_samples(cls, names, samples):
        p = len(names)
        return cls(
            names=list(names),
            seed=np.array([s.seed for s in samples], dtype=np.int64),
            epoch=np.array([s.epoch for s in samples], dtype=np.int64),
            step=np.array([s.step for s in samples], dtype=np.int64),
            estimates=np.array([s.estimate for s in samples], dtype=float).reshape(-1, p),
            loss=np.array([s.loss for s in samples], dtype=float),
        )

    @classmethod
    def merge(cls, sets):
        sets = list(sets)
        if not sets:
            raise ValueError("nothing to merge")
        names = sets[0].names
        if any(s.names != names for s in sets):
            raise ValueError("cannot merge sample sets with different parameters")
        return cls(
            names=list(names),
            seed=np.concatenate([s.seed for s in sets]),
            epoch=np.concatenate([s.epoch for s in sets]),
            step=np.concatenate([s.step for s in sets]),
            estimates=np.concatenate([s.estimates for s in sets]),
            loss=np.concatenate([s.loss for s in sets]),
        )

    def __len__(self):
        return len(self.loss)

    def column(self, name):
        return self.estimates[:, self.names.index(name)]

    def for_seed(self, seed):
        m = self.seed == seed
        return SampleSet(self.names, self.seed[m], self.epoch[m], self.step[m], self.estimates[m], self.loss[m])


def loss_mse(predicted, observed):
    """``(1/B) * sum_j ||pred_j - obs_j||^2`` over ``B`` frame pairs."""
    if len(predicted) != len(observed):
        raise ValueError(f"got {len(predicted)} predicted and {len(observed)} observed frames")
    if not predicted:
        raise ValueError("loss needs at least one frame")
    total = 0.0
    for p, o in zip(predicted, observed):
        o = np.asarray(o, dtype=float)
        if np.shape(_frame_data(p)) != o.shape:
            raise ValueError(f"frame shapes differ: {np.shape(_frame_data(p))} vs {o.shape}")
        d = p - o
        total = total + ad.sum_(d * d)
    return total * (1.0 / len(predicted))


def _frame_data(p):
    return p.data if isinstance(p, ad.Value) else np.asarray(p)


# -- problems -------------------------------------------------------------------


class Problem:
    """Binds a model's solver to named parameters.

    Subclasses define ``param_names`` and ``predict``; estimates handed in by
    the trainer are in the network's (internal) scale.
    """

    param_names = ()

    def __init__(self, to_learn, true_parameters):
        unknown = set(to_learn) - set(self.param_names)
        unknown |= set(true_parameters) - set(self.param_names)
        if unknown:
            raise ValueError(f"unknown parameters for {type(self).__name__}: {sorted(unknown)}")
        self.to_learn = list(to_learn)
        self.true_parameters = dict(true_parameters)

    def bind(self, lam):
        """Map network outputs to a full parameter dict."""
        params = {name: lam[k] for k, name in enumerate(self.to_learn)}
        for name in self.param_names:
            if name not in params:
                params[name] = self.true_parameters.get(name, self.defaults[name])
        return params

    def to_physical(self, lam):
        return np.asarray(lam, dtype=float)

    def from_physical(self, lam):
        return np.asarray(lam, dtype=float)


class SIRProblem(Problem):
    param_names = ("p_infect", "t_infectious", "sigma")
    defaults = {"p_infect": 0.2, "t_infectious": 1.4, "sigma": 0.0}

    def __init__(self, to_learn=("p_infect", "t_infectious", "sigma"), true_parameters=None, gamma=10.0, k=1000.0):
        true_parameters = dict(true_parameters or {})
        # fixed recovery times are given in physical units
        if "t_infectious" in true_parameters:
            true_parameters["t_infectious"] = true_parameters["t_infectious"] / gamma
        super().__init__(to_learn, true_parameters)
        self.gamma, self.k = gamma, k

    def _params(self, p):
        return sir_flow.SIRParams(
            beta=p["p_infect"], tau=p["t_infectious"], sigma=p["sigma"], gamma=self.gamma, k=self.k
        )

    def noisy(self, params):
        s = params["sigma"]
        return "sigma" in self.to_learn or float(_frame_data(s)) != 0.0

    def predict(self, lam, frame, t, n_steps, rng):
        p = self.bind(lam)
        state = tuple(ad.Value(v) for v in frame)
        states = sir_flow.solve(state, self._params(p), n_steps, t0=t, rng=rng if self.noisy(p) else None)
        return [ad.stack(s) for s in states]

    def to_physical(self, lam):
        out = np.array(lam, dtype=float)
        if "t_infectious" in self.to_learn:
            out[self.to_learn.index("t_infectious")] *= self.gamma
        return out

    def from_physical(self, lam):
        out = np.array(lam, dtype=float)
        if "t_infectious" in self.to_learn:
            out[self.to_learn.index("t_infectious")] /= self.gamma
        return out

    def simulate(self, lam_phys, phi0, n_steps, rng):
        p = self.bind(self.from_physical(lam_phys))
        return sir_flow.trajectory(phi0, self._params(p), n_steps, rng=rng if self.noisy(p) else None)


class HWProblem(Problem):
    param_names = ("alpha", "beta", "kappa", "sigma", "epsilon")
    defaults = {"alpha": 1.0, "beta": 0.0, "kappa": 1.0, "sigma": 0.0, "epsilon": 1.0}

    def __init__(self, O, C, to_learn=("alpha", "beta", "kappa"), true_parameters=None, dt=0.01):
        super().__init__(to_learn, dict(true_parameters or {}))
        if "epsilon" in self.to_learn:
            raise ValueError("epsilon does not affect the steady state and cannot be learned")
        self.O = np.asarray(O, dtype=float)
        self.C = np.asarray(C, dtype=float)
        self.dt = dt

    def noisy(self, params):
        return "sigma" in self.to_learn or float(_frame_data(params["sigma"])) != 0.0

    def _step(self, p, W, rng):
        dB = None
        if self.noisy(p):
            dB = rng.normal(0.0, np.sqrt(self.dt), size=len(self.C[0]))
        return hw.hw_step(
            self.O, W, self.C, p["alpha"], p["beta"], p["kappa"], p["epsilon"], p["sigma"], self.dt, dB
        )

    def predict(self, lam, frame, t, n_steps, rng):
        p = self.bind(lam)
        W = np.asarray(frame, dtype=float)
        out = []
        for _ in range(n_steps):
            W = self._step(p, W, rng)
            out.append(W)
        return out

    def simulate(self, lam_phys, W0, n_steps, rng):
        p = self.bind(np.asarray(lam_phys, dtype=float))
        W = np.asarray(W0, dtype=float)
        out = [W]
        for _ in range(n_steps):
            W = self._step(p, W, rng)
            out.append(W)
        return np.array(out)


# -- training loops ---------------------------------------------------------------


def _windows(L, B):
    """(start, n_steps, targets) per optimizer step of one epoch."""
    if L == 1:
        # steady-state frame: one step compared against the frame itself
        return [(0, 1, [0])]
    if B > L:
        raise ValueError(f"batch size {B} exceeds series length {L}")
    if B == L:
        return [(0, L - 1, list(range(1, L)))]
    return [(t, B, list(range(t + 1, t + B + 1))) for t in range(L - B)]


def train_epoch(net, opt, problem, series, cfg, rng, seed=0, epoch=0):
    series = np.asarray(series, dtype=float)
    samples = []
    params = net.parameters()
    for step, (t, n_steps, targets) in enumerate(_windows(len(series), cfg.batch_size)):
        lam = net(series[t])
        pred = problem.predict(lam, series[t], t, n_steps, rng)
        J = loss_mse(pred, series[targets])
        est = problem.to_physical(lam.data)
        if not (np.isfinite(J.data) and np.all(np.isfinite(est))):
            raise TrainingDiverged(f"non-finite loss at seed {seed}, epoch {epoch}, step {step}", est)
        ad.zero_grads(params)
        ad.backward(J)
        opt.step()
        samples.append(LossPotentialSample(est, float(J.data), seed, epoch, step))
    return samples


def train_seed(problem, series, spec, cfg, seed):
    """Train one freshly initialised network; returns its SampleSet."""
    net = init_net(spec, seed)
    opt = make_optimizer(net)
    rng = np.random.default_rng([seed, 1])
    samples = []
    for epoch in range(cfg.epochs):
        samples.extend(train_epoch(net, opt, problem, series, cfg, rng, seed, epoch))
    return SampleSet.from_samples(problem.to_learn, samples)


@dataclass
class MultiSeedResult:
    samples: SampleSet
    per_seed: dict
    failures: dict


def _train_seed_safe(args):
    problem, series, spec, cfg, seed = args
    try:
        return seed, train_seed(problem, series, spec, cfg, seed), None
    except TrainingDiverged as exc:
        return seed, None, f"{exc} (last estimate {exc.last_estimate})"


def run_multiseed(problem, series, spec, cfg, workers=1):
    """Independent training per seed, merged into one seed-tagged sample set."""
    jobs = [(problem, series, spec, cfg, s) for s in cfg.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_train_seed_safe, jobs))
    else:
        results = [_train_seed_safe(j) for j in jobs]
    per_seed, failures = {}, {}
    for seed, res, err in results:
        if err is None:
            per_seed[seed] = res
        else:
            log.warning("seed %s failed: %s", seed, err)
            failures[seed] = err
    if not per_seed:
        raise TrainingDiverged(f"all seeds failed: {failures}")
    merged = SampleSet.merge(per_seed[s] for s in cfg.seeds if s in per_seed)
    return MultiSeedResult(merged, per_seed, failures)


@dataclass
class Forecast:
    mean: np.ndarray
    std: np.ndarray
    mspe: float
    mspe_std: float
    per_replica: np.ndarray


def calibrated_forecast(problem, estimate, series, replicas=100, seed=0):
    """Run the forward model at ``estimate`` (physical units) from the first
    observed frame and score it against the observations.

    For a single steady-state frame the model takes one step and is compared
    with that frame.  MSPE is the mean squared error over time and components.
    """
    series = np.asarray(series, dtype=float)
    n_steps = max(len(series) - 1, 1)
    target = series[1:] if len(series) > 1 else series
    rng = np.random.default_rng(seed)
    runs = np.array([problem.simulate(estimate, series[0], n_steps, rng) for _ in range(replicas)])
    errs = np.mean((runs[:, 1:] - target[None]) ** 2, axis=(1, 2))
    return Forecast(runs.mean(axis=0), runs.std(axis=0), float(errs.mean()), float(errs.std()), errs)
