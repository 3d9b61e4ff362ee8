"""Discrete-time lattice oracle: trinomial tree plus backward induction.

This module cross-checks the finite-difference solver with an entirely
independent discretization: a recombining trinomial tree for the state
process and dynamic programming in time.  The infinite horizon is truncated
at a T chosen so that the discarded discounted tail is provably below a
requested tolerance (:func:`horizon_for_tolerance`); values at the terminal
layer are set to zero.

Tree construction is in log space, so states stay on the geometric grid
``x0 * exp(k * dxi)`` and the tree recombines:

* purely linear coefficients (drift = b1*x, vol = s1*x): one set of branch
  probabilities matches the exact mean (b1 - s1^2/2) dt and variance
  s1^2 dt of the log increment at every node;
* affine coefficients with offsets: probabilities are fitted per node by
  matching the local arithmetic mean drift(x) dt and second moment
  vol(x)^2 dt + (drift(x) dt)^2 of the increment;
* zero volatility: a single deterministic branch.

Probabilities are validated at build time; a time step too large for the
chosen spacing raises with a hint to increase ``n_steps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exprlang import Expr, evaluate
from .problem import DiffusionModel, SwitchingProblem, affine_coefficients, moment_exponent

__all__ = [
    "LatticeConfig",
    "Lattice",
    "LatticeValues",
    "horizon_for_tolerance",
    "build_lattice",
    "switching_dp",
    "snell_stop",
]


@dataclass(frozen=True)
class LatticeConfig:
    x0: float
    horizon: float
    n_steps: int
    tail_constant: float = 1.0

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if self.tail_constant <= 0:
            raise ValueError("tail_constant must be positive")


def horizon_for_tolerance(problem: SwitchingProblem, x0: float, eps: float,
                          tail_constant: float = 1.0) -> float:
    """Smallest T with tail_constant (1+|x0|^gamma) e^{(C_gamma - r) T} < eps.

    The bound quantifies the discounted value mass beyond T; it is finite
    only under discount dominance (C_gamma < r), otherwise this raises.
    The tail constant is a reporting convention (default 1, appropriate for
    the exact linear-coefficient case), not a certified bound.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    r = problem.discount_rate
    c_gamma = moment_exponent(problem.model, problem.gamma)
    if c_gamma >= r:
        raise ValueError(
            f"no finite horizon: moment exponent {c_gamma:g} >= discount rate {r:g}")
    t = math.log(tail_constant * (1.0 + abs(x0) ** problem.gamma) / eps) / (r - c_gamma)
    return max(t, 0.0)


@dataclass(frozen=True)
class Lattice:
    """Recombining log-space trinomial tree (layer t has 2t+1 nodes)."""

    x0: float
    horizon: float
    n_steps: int
    dt: float
    dxi: float
    kind: str  # "linear" | "affine" | "deterministic"
    model: DiffusionModel
    # constant branch probabilities for the linear kind, else None
    p_up: float = None
    p_mid: float = None
    p_down: float = None
    # Euler path for the deterministic (zero-volatility) kind, else None
    det_path: np.ndarray = None

    def layer_states(self, t: int) -> np.ndarray:
        if self.kind == "deterministic":
            return self.det_path[t:t + 1]
        return self.x0 * np.exp(self.dxi * np.arange(-t, t + 1))

    def layer_probabilities(self, t: int):
        """(p_up, p_mid, p_down) per node of layer t."""
        if self.kind == "deterministic":
            one = np.ones(1)
            return 0.0 * one, one, 0.0 * one
        states = self.layer_states(t)
        if self.kind == "linear":
            shape = np.ones_like(states)
            return self.p_up * shape, self.p_mid * shape, self.p_down * shape
        return _affine_probabilities(self.model, states, self.dt, self.dxi)


def _affine_probabilities(model: DiffusionModel, states: np.ndarray,
                          dt: float, dxi: float):
    b = np.asarray(evaluate(model.drift, states), dtype=float)
    s2 = np.asarray(evaluate(model.vol, states), dtype=float) ** 2
    up_move = states * (np.exp(dxi) - 1.0)
    down_move = states * (np.exp(-dxi) - 1.0)
    mean = b * dt
    second = s2 * dt + mean ** 2
    # solve p_u * up + p_d * down = mean ; p_u * up^2 + p_d * down^2 = second
    det = up_move * down_move * (down_move - up_move)
    p_up = (mean * down_move ** 2 - second * down_move) / det
    p_down = (second * up_move - mean * up_move ** 2) / det
    p_mid = 1.0 - p_up - p_down
    return p_up, p_mid, p_down


def _validate_probabilities(p_up, p_mid, p_down):
    arrs = [np.atleast_1d(p) for p in (p_up, p_mid, p_down)]
    tol = 1e-12
    for p in arrs:
        if np.any(p < -tol) or np.any(p > 1 + tol):
            raise ValueError(
                "branch probabilities left [0, 1]; the time step is too large "
                "for the tree spacing, increase n_steps")
    s = arrs[0] + arrs[1] + arrs[2]
    if np.any(np.abs(s - 1.0) > 1e-9):
        raise AssertionError("branch probabilities do not sum to 1")


def build_lattice(model: DiffusionModel, cfg: LatticeConfig) -> Lattice:
    """Construct the tree and validate branch probabilities at every layer
    (constant-probability kinds only need one check)."""
    dt = cfg.horizon / cfg.n_steps
    drift_affine = affine_coefficients(model.drift)
    vol_affine = affine_coefficients(model.vol)

    def deterministic():
        path = np.empty(cfg.n_steps + 1)
        path[0] = cfg.x0
        for t in range(cfg.n_steps):
            path[t + 1] = path[t] + float(evaluate(model.drift, float(path[t]))) * dt
        return Lattice(cfg.x0, cfg.horizon, cfg.n_steps, dt, 0.0,
                       "deterministic", model, None, None, None, path)

    if vol_affine is not None and vol_affine == (0.0, 0.0):
        return deterministic()

    purely_linear = (drift_affine is not None and vol_affine is not None
                     and drift_affine[0] == 0.0 and vol_affine[0] == 0.0)
    if purely_linear:
        b1, s1 = drift_affine[1], vol_affine[1]
        if s1 == 0.0:
            return deterministic()
        log_mean = (b1 - 0.5 * s1 * s1) * dt
        dxi = abs(s1) * math.sqrt(3.0 * dt)
        both = (s1 * s1 * dt + log_mean ** 2) / dxi ** 2
        diff = log_mean / dxi
        p_up = 0.5 * (both + diff)
        p_down = 0.5 * (both - diff)
        p_mid = 1.0 - p_up - p_down
        _validate_probabilities(p_up, p_mid, p_down)
        return Lattice(cfg.x0, cfg.horizon, cfg.n_steps, dt, dxi, "linear",
                       model, p_up, p_mid, p_down)

    # affine with offsets: per-node moment matching on the geometric grid
    if cfg.x0 <= 0:
        raise ValueError("affine-coefficient lattice needs x0 > 0 (log-space grid)")
    vol0 = abs(float(evaluate(model.vol, cfg.x0)))
    if vol0 == 0.0:
        raise ValueError("affine-coefficient lattice needs vol(x0) != 0")
    dxi = (vol0 / cfg.x0) * math.sqrt(3.0 * dt)
    lat = Lattice(cfg.x0, cfg.horizon, cfg.n_steps, dt, dxi, "affine",
                  model, None, None, None)
    for t in range(cfg.n_steps):
        _validate_probabilities(*lat.layer_probabilities(t))
    return lat


@dataclass(frozen=True)
class LatticeValues:
    """Backward-induction values: root per mode, plus every layer."""

    root: np.ndarray            # (m,)
    layers: tuple               # layers[t] has shape (m, 2t+1); terminal == 0
    lattice: Lattice

    def root_value(self, i: int = 0) -> float:
        return float(self.root[i])


def switching_dp(lattice: Lattice, problem: SwitchingProblem) -> LatticeValues:
    """All-modes backward induction with same-date chained switches.

    One step computes, per mode, the continuation value psi_i(x) dt +
    e^{-r dt} E[next layer], then runs inner sweeps (at most m-1, with ties
    resolved to the lowest target index) so that chains of switches at a
    single date are captured.  Terminal values are zero.
    """
    m = problem.n_modes
    r = problem.discount_rate
    dt = lattice.dt
    disc = math.exp(-r * dt)
    n_steps = lattice.n_steps

    width = 1 if lattice.kind == "deterministic" else 2 * n_steps + 1
    values = np.zeros((m, width))
    layers = [None] * (n_steps + 1)
    layers[n_steps] = np.zeros((m, width))

    for t in range(n_steps - 1, -1, -1):
        states = lattice.layer_states(t)
        nn = states.size
        p_up, p_mid, p_down = lattice.layer_probabilities(t)
        cont = np.empty((m, nn))
        for i in range(m):
            nxt = values[i]
            if lattice.kind == "deterministic":
                expected = nxt[:1]
            else:
                expected = (p_up * nxt[2:2 + nn] + p_mid * nxt[1:1 + nn]
                            + p_down * nxt[0:nn])
            cont[i] = np.asarray(evaluate(problem.profits[i], states),
                                 dtype=float) * dt + disc * expected
        layer = cont.copy()
        for _ in range(max(m - 1, 1)):
            changed = False
            for i in range(m):
                best = np.full(nn, -np.inf)
                for j in range(m):
                    if j == i:
                        continue
                    cost = np.asarray(evaluate(problem.costs[i][j], states),
                                      dtype=float)
                    best = np.maximum(best, layer[j] - cost)
                improved = np.maximum(layer[i], best)
                if np.any(improved > layer[i]):
                    changed = True
                    layer[i] = improved
            if not changed:
                break
        layers[t] = layer
        values = layer
    return LatticeValues(layers[0][:, 0].copy(), tuple(layers), lattice)


def snell_stop(lattice: Lattice, running: Expr, terminal_reward: Expr,
               r: float) -> float:
    """Optimal-stopping value at the root: V = max(h, f dt + e^{-r dt} E V').

    ``running`` is the profit rate f while continuing, ``terminal_reward``
    the reward h collected on stopping.
    """
    dt = lattice.dt
    disc = math.exp(-r * dt)
    n_steps = lattice.n_steps
    width = 1 if lattice.kind == "deterministic" else 2 * n_steps + 1
    values = np.zeros(width)
    for t in range(n_steps - 1, -1, -1):
        states = lattice.layer_states(t)
        nn = states.size
        p_up, p_mid, p_down = lattice.layer_probabilities(t)
        if lattice.kind == "deterministic":
            expected = values[:1]
        else:
            expected = (p_up * values[2:2 + nn] + p_mid * values[1:1 + nn]
                        + p_down * values[0:nn])
        cont = np.asarray(evaluate(running, states), dtype=float) * dt + disc * expected
        stop = np.asarray(evaluate(terminal_reward, states), dtype=float)
        values = np.maximum(stop, cont)
    return float(values[0])
