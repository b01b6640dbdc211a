"""Differentiable reduced SIR solver used in the training forward pass.

Each step applies an explicit Euler update of the stochastic SIR system and
clamps the result at zero::

    dS = -beta*S*I - w*I
    dI =  beta*S*I + w*I - f(gamma*tau, t)*I
    dR =  f(gamma*tau, t)*I

with ``w = sigma * X`` for ``X ~ N(0, 0.1)`` (variance 0.1), drawn afresh each step, and
``f(s, t) = sigmoid(k*t/s) / s`` a smoothed recovery switch.  The learned
``tau`` lives on a scale shrunk by ``gamma``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

NOISE_VARIANCE = 0.1


@dataclass(frozen=True)
class SIRParams:
    beta: object
    tau: object  # internal (gamma-scaled) recovery time
    sigma: object = 0.0
    gamma: float = 10.0
    k: float = 1000.0

    def __post_init__(self):
        if self.gamma <= 0 or self.k <= 0:
            raise ValueError("gamma and k must be positive")


def smooth_step(s, t, k=1000.0):
    if not isinstance(s, ad.Value) and s == 0:
        raise ZeroDivisionError("smooth_step needs s != 0")
    if isinstance(s, ad.Value) and np.any(s.data == 0):
        raise ZeroDivisionError("smooth_step needs s != 0")
    return ad.sigmoid(k * t / s) / s


def rescale_tau(tau_internal, gamma=10.0):
    return gamma * tau_internal


def scale_tau(tau_physical, gamma=10.0):
    return tau_physical / gamma


def sir_flow_step(state, params, t, rng=None):
    """Advance ``state = (S, I, R)`` by one step.

    ``rng=None`` runs the noiseless solver.  Components may be floats or
    :class:`~nodecal.autodiff.Value` scalars.
    """
    S, I, R = state
    infection = params.beta * (S * I)
    if rng is not None:
        x = rng.normal(0.0, np.sqrt(NOISE_VARIANCE))
        infection = infection + (params.sigma * x) * I
    recovery = smooth_step(params.gamma * params.tau, t, params.k) * I
    return (
        ad.relu(S - infection),
        ad.relu(I + infection - recovery),
        ad.relu(R + recovery),
    )


def solve(phi0, params, n_steps, t0=0, rng=None):
    """Run ``n_steps`` steps from ``phi0``; returns the list of new states."""
    state = tuple(phi0)
    out = []
    for b in range(n_steps):
        state = sir_flow_step(state, params, t0 + b, rng)
        out.append(state)
    return out


def trajectory(phi0, params, n_steps, rng=None):
    """Numpy trajectory of shape ``(n_steps + 1, 3)`` including ``phi0``."""
    states = solve([float(v) for v in phi0], params, n_steps, rng=rng)
    return np.vstack([np.asarray(phi0, float), np.array(states, dtype=float)])
