"""Harris-Wilson model of destination-zone sizes on a complete bipartite network.

Demand at destination ``j`` is ``D_j = sum_i T_ij`` with
``T_ij = W_j**alpha * c_ij**beta * O_i / sum_k W_k**alpha * c_ik**beta``; sizes
follow ``dW = eps * W * (D - kappa*W) dt + sigma * W o dB`` (Stratonovich),
integrated with a Heun predictor-corrector.

The step functions accept plain arrays or :class:`~nodecal.autodiff.Value`
operands, so the same code generates data and runs inside training.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad

W_FLOOR = 1e-12


@dataclass
class HWSystem:
    O: np.ndarray
    W: np.ndarray
    C: np.ndarray
    alpha: float = 1.0
    beta: float = 0.0
    kappa: float = 1.0
    epsilon: float = 1.0
    sigma: float = 0.0
    dt: float = 0.01

    def __post_init__(self):
        self.O = np.asarray(self.O, dtype=float)
        self.W = np.asarray(self.W, dtype=float)
        self.C = np.asarray(self.C, dtype=float)
        if self.C.shape != (self.O.size, self.W.size):
            raise ValueError(f"network shape {self.C.shape} does not match N={self.O.size}, M={self.W.size}")
        if np.any(self.O <= 0) or np.any(self.W <= 0):
            raise ValueError("origin and destination sizes must be strictly positive")
        if np.any(self.C <= 0) or np.any(self.C > 1):
            raise ValueError("convenience entries must lie in (0, 1]")
        if self.kappa <= 0 or self.sigma < 0 or self.dt <= 0:
            raise ValueError("need kappa > 0, sigma >= 0, dt > 0")

    @property
    def N(self):
        return self.O.size

    @property
    def M(self):
        return self.W.size

    def with_params(self, **kw):
        return replace(self, **kw)


def demand(O, W, C, alpha, beta, Cb=None):
    """Matrix-form demand ``W^alpha * [(C^beta)^T (O * Z)]`` with
    ``1/Z = C^beta W^alpha``.  ``Cb`` may carry a precomputed ``C**beta``."""
    w = W.data if isinstance(W, ad.Value) else np.asarray(W)
    if np.any(w <= 0):
        raise ValueError("demand needs strictly positive destination sizes")
    if Cb is None:
        Cb = ad.power(C, beta)
    Wa = ad.power(W, alpha)
    Z = 1.0 / (Cb @ Wa)
    return Wa * (Cb.T @ (O * Z))


def demand_loops(O, W, C, alpha, beta):
    """Reference double loop over the flows ``T_ij``."""
    N, M = len(O), len(W)
    D = np.zeros(M)
    for i in range(N):
        norm = sum(W[k] ** alpha * C[i][k] ** beta for k in range(M))
        for j in range(M):
            D[j] += W[j] ** alpha * C[i][j] ** beta * O[i] / norm
    return D


def drift(O, W, C, alpha, beta, kappa, epsilon=1.0, Cb=None):
    return epsilon * W * (demand(O, W, C, alpha, beta, Cb) - kappa * W)


def hw_step(O, W, C, alpha, beta, kappa, epsilon=1.0, sigma=0.0, dt=0.01, dB=None):
    """One Heun step.  ``dB`` holds the Brownian increments (``N(0, dt)``
    per zone); it is ignored when ``sigma`` is exactly zero."""
    Cb = ad.power(C, beta)
    noisy = dB is not None and not (np.isscalar(sigma) and sigma == 0)
    a0 = drift(O, W, C, alpha, beta, kappa, epsilon, Cb)
    if noisy:
        b0 = sigma * W
        Wp = ad.clamp_min(W + a0 * dt + b0 * dB, W_FLOOR)
        a1 = drift(O, Wp, C, alpha, beta, kappa, epsilon, Cb)
        Wn = W + (a0 + a1) * (0.5 * dt) + (b0 + sigma * Wp) * (0.5 * dB)
    else:
        Wp = ad.clamp_min(W + a0 * dt, W_FLOOR)
        a1 = drift(O, Wp, C, alpha, beta, kappa, epsilon, Cb)
        Wn = W + (a0 + a1) * (0.5 * dt)
    return ad.clamp_min(Wn, W_FLOOR)


def step_system(sys, W, rng=None):
    """Numpy step of ``sys`` from sizes ``W``; draws noise from ``rng`` when
    ``sys.sigma > 0``."""
    dB = None
    if sys.sigma > 0:
        if rng is None:
            raise ValueError("a noisy system needs an rng")
        dB = rng.normal(0.0, np.sqrt(sys.dt), size=sys.M)
    return hw_step(sys.O, W, sys.C, sys.alpha, sys.beta, sys.kappa, sys.epsilon, sys.sigma, sys.dt, dB)


class SteadyStateNotReached(RuntimeError):
    def __init__(self, iterations, residual, W):
        super().__init__(f"no steady state after {iterations} iterations (last rate {residual:.3e})")
        self.iterations = iterations
        self.residual = residual
        self.W = W


def steady_state(sys, tol=1e-8, max_iter=100_000, W0=None, adaptive=True, extinction=1e-4):
    """Iterate the noiseless dynamics until the per-capita rate
    ``sup_j |dW_j/dt| / W_j = eps * ||D - kappa W||_inf`` drops below ``tol``.

    With ``adaptive`` the pseudo-time step grows by 10% per accepted step and
    is halved (down to ``sys.dt``) whenever a step increases the rate.  The
    fixed points do not depend on the step size, only the path to them does.

    For ``alpha > 1`` a losing zone only decays like ``1/(kappa t)``.  Zones
    below ``extinction * sum(W)`` that are still shrinking are therefore
    snapped to the floor, their boundary equilibrium; pass ``None`` to disable.
    Returns ``(W_star, iterations)``.
    """
    nl = replace(sys, sigma=0.0)
    W = np.array(sys.W if W0 is None else W0, dtype=float)
    Cb = np.power(nl.C, nl.beta)

    def a(w):
        return drift(nl.O, w, nl.C, nl.alpha, nl.beta, nl.kappa, nl.epsilon, Cb)

    def per_capita(w, aw):
        if extinction is not None:
            dead = (w < extinction * w.sum()) & (aw < 0)
            if dead.any():
                w = w.copy()
                w[dead] = W_FLOOR
                aw = a(w)
        return w, aw, np.max(np.abs(aw) / w)

    W, a0, rate = per_capita(W, a(W))
    dt = nl.dt
    for it in range(max_iter):
        if rate < tol:
            return W, it
        Wp = np.maximum(W + a0 * dt, W_FLOOR)
        Wn = np.maximum(W + (a0 + a(Wp)) * (0.5 * dt), W_FLOOR)
        Wn, an, rn = per_capita(Wn, a(Wn))
        if adaptive and dt > nl.dt and not rn <= rate:
            dt = max(0.5 * dt, nl.dt)
            continue
        W, a0, rate = Wn, an, rn
        if adaptive:
            dt *= 1.1
    if rate < tol:
        return W, max_iter
    raise SteadyStateNotReached(max_iter, rate, W)


def inequality_nu(W):
    W = np.asarray(W, dtype=float)
    if W.size < 2:
        raise ValueError("inequality needs at least two zones")
    return float((W.max() - W.min()) / W.sum())


def kappa_truth(O, W):
    return float(np.sum(O) / np.sum(W))


def trivial_params(O, W):
    """The (alpha, beta, kappa) triple that is a steady state for any data."""
    return 1.0, 0.0, kappa_truth(O, W)


def synthetic_network(N, M, rng):
    """Random system inputs: ``C`` uniform on (0.1, 1], ``O`` uniform on (0.5, 1.5]."""
    C = 1.0 - rng.uniform(0.0, 0.9, size=(N, M))
    O = 1.5 - rng.uniform(0.0, 1.0, size=N)
    return O, C


@dataclass
class HWObservation:
    frames: np.ndarray  # (L, M)
    W_star: np.ndarray
    nu: float
    sigma: float
    seed: int


class UnlearnableDataset(ValueError):
    pass


def generate_hw_dataset(sys, sigma_data, L, seed, nu_margin=1e-3, tol=1e-8, max_iter=100_000):
    """Steady state of ``sys`` plus, for ``sigma_data > 0``, ``L`` consecutive
    frames of the noisy dynamics started there.  The initial sizes ``sys.W``
    serve as the starting point of the relaxation."""
    if L < 1:
        raise ValueError("L must be at least 1")
    W_star, _ = steady_state(sys, tol=tol, max_iter=max_iter)
    nu = inequality_nu(W_star)
    if nu < nu_margin or nu > 1.0 - nu_margin:
        raise UnlearnableDataset(f"steady state has nu = {nu:.6f}; parameters are not learnable at nu in {{0, 1}}")
    if sigma_data == 0:
        frames = np.tile(W_star, (L, 1))
    else:
        rng = np.random.default_rng(seed)
        noisy = replace(sys, sigma=float(sigma_data))
        frames = np.empty((L, sys.M))
        W = W_star
        for k in range(L):
            W = step_system(noisy, W, rng)
            frames[k] = W
    return HWObservation(frames=frames, W_star=W_star, nu=nu, sigma=float(sigma_data), seed=seed)
