"""Agent-based SIR model on a periodic square, used to generate ground-truth
density time series."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

SUSCEPTIBLE, INFECTED, RECOVERED = 0, 1, 2


@dataclass
class ABMParams:
    r_infect: float = 0.3
    p_infect: float = 0.2
    t_infectious: int = 14
    sigma_s: float = 0.15
    sigma_i: float = 0.15
    sigma_r: float = 0.15
    space: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.p_infect <= 1.0:
            raise ValueError("p_infect must lie in [0, 1]")
        if self.space <= 0 or self.r_infect < 0:
            raise ValueError("space must be positive and r_infect non-negative")


class AgentPopulation:
    def __init__(self, positions, compartment, tau, params):
        self.positions = positions
        self.compartment = compartment
        self.tau = tau
        self.params = params

    @classmethod
    def random(cls, n_agents, params, rng):
        """Uniform positions, all susceptible except one random patient zero."""
        pos = rng.uniform(0.0, params.space, size=(n_agents, 2))
        comp = np.full(n_agents, SUSCEPTIBLE, dtype=np.int8)
        comp[rng.integers(n_agents)] = INFECTED
        return cls(_wrap(pos, params.space), comp, np.zeros(n_agents, dtype=np.int64), params)

    def __len__(self):
        return len(self.compartment)

    def counts(self):
        return np.bincount(self.compartment, minlength=3)

    def densities(self):
        return self.counts() / len(self)


def torus_distance(x, y, L):
    d = np.abs(np.asarray(x, float) - np.asarray(y, float))
    d = np.minimum(d, L - d)
    return float(np.sqrt(np.sum(d * d)))


def _wrap(pos, L):
    pos = np.mod(pos, L)
    # np.mod can round a tiny negative up to exactly L
    pos[pos >= L] -= L
    return pos


def abm_step(pop, rng):
    """One iteration: infection sweep, recovery, then diffusion of all agents."""
    prm = pop.params
    comp, tau = pop.compartment, pop.tau
    infected = np.flatnonzero(comp == INFECTED)
    if infected.size:
        tree = cKDTree(pop.positions, boxsize=prm.space)
        neighbours = tree.query_ball_point(pop.positions[infected], prm.r_infect)
        for j, nb in zip(infected, neighbours):
            nb = np.sort(np.asarray(nb, dtype=np.int64))
            cand = nb[comp[nb] == SUSCEPTIBLE]
            if cand.size:
                hit = cand[rng.random(cand.size) < prm.p_infect]
                comp[hit] = INFECTED
                tau[hit] = 0
        tau[infected] += 1
    comp[(comp == INFECTED) & (tau >= prm.t_infectious)] = RECOVERED

    sigma = np.array([prm.sigma_s, prm.sigma_i, prm.sigma_r])[comp]
    step = rng.normal(size=pop.positions.shape) * sigma[:, None]
    pop.positions = _wrap(pop.positions + step, prm.space)


def generate_sir_dataset(n_agents, params, n_steps, seed):
    """Run ``n_steps`` iterations from one infected agent; returns an
    ``(n_steps, 3)`` array of (S, I, R) densities recorded after each step."""
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    rng = np.random.default_rng(seed)
    pop = AgentPopulation.random(n_agents, params, rng)
    out = np.empty((n_steps, 3))
    for t in range(n_steps):
        abm_step(pop, rng)
        out[t] = pop.counts() / n_agents
    return out
