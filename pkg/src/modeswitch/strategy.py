"""Optimal-strategy extraction and Monte Carlo evaluation.

From a converged value field the switching regions are read off nodewise:
mode i switches to j at states where v_i touches its obstacle
max_{j != i}(-g_ij + v_j) (within a tolerance), the target being the j
attaining the max (lowest index on ties).  The strategy is then evaluated
on Euler paths of the state dynamics: at each time step the current mode's
region is looked up at the nearest grid node; switches are executed
immediately, chained switches at one date are allowed up to m-1 in a row,
and the discounted running profit and switching costs are accumulated.

Reproducibility: normal increments come from counter-based Philox streams
keyed by (seed, path block), so a path's trajectory depends only on the
seed and its index, never on how many paths are simulated or in what order
blocks are processed.  All per-path reductions use fixed index order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exprlang import evaluate
from .fd_solver import ValueField
from .problem import DiffusionModel, SwitchingProblem

__all__ = [
    "SwitchingRegions",
    "PathSet",
    "StrategyStats",
    "PayoffEstimate",
    "extract_regions",
    "simulate_paths",
    "run_strategy",
    "estimate_payoff",
    "tau_decay",
]

CONTINUE = -1
_PATH_BLOCK = 4096


@dataclass(frozen=True)
class SwitchingRegions:
    """Per mode and grid node: target mode index, or -1 to continue."""

    actions: np.ndarray  # (m, n_nodes) int
    grid_nodes: np.ndarray
    region_tol: float

    @property
    def n_modes(self) -> int:
        return self.actions.shape[0]

    def interval_table(self):
        """Maximal node intervals of constant switch target, per mode.

        Returns rows (from_mode, to_mode, x_start, x_end), 0-based modes.
        """
        rows = []
        m, n = self.actions.shape
        for i in range(m):
            k = 0
            while k < n:
                target = self.actions[i, k]
                if target == CONTINUE:
                    k += 1
                    continue
                start = k
                while k + 1 < n and self.actions[i, k + 1] == target:
                    k += 1
                rows.append((i, int(target),
                             float(self.grid_nodes[start]),
                             float(self.grid_nodes[k])))
                k += 1
        return rows


def extract_regions(field: ValueField, problem: SwitchingProblem,
                    region_tol: Optional[float] = None) -> SwitchingRegions:
    """Read switching regions off a converged field.

    A node is a switching node for mode i when v_i <= obstacle + tol; the
    default tolerance is 1e-6 * (1 + sup |v|).
    """
    values = field.values
    m, n = values.shape
    if region_tol is None:
        region_tol = 1e-6 * (1.0 + float(np.max(np.abs(values))))
    actions = np.full((m, n), CONTINUE, dtype=np.int64)
    if m > 1:
        x = field.grid.nodes
        for i in range(m):
            cand = np.full((m, n), -np.inf)
            for j in range(m):
                if j != i:
                    cand[j] = values[j] - np.asarray(
                        evaluate(problem.costs[i][j], x), dtype=float)
            best = np.argmax(cand, axis=0)  # lowest index wins ties
            obstacle = cand[best, np.arange(n)]
            switch = values[i] <= obstacle + region_tol
            actions[i, switch] = best[switch]
    return SwitchingRegions(actions, field.grid.nodes.copy(), float(region_tol))


@dataclass(frozen=True)
class PathSet:
    """Euler trajectories: states[p, k] is path p at time k * dt."""

    states: np.ndarray  # (n_paths, n_steps + 1)
    dt: float
    seed: int
    x0: float

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def n_steps(self) -> int:
        return self.states.shape[1] - 1


def simulate_paths(model: DiffusionModel, x0: float, dt: float, T: float,
                   n_paths: int, seed: int) -> PathSet:
    """Euler scheme X_{t+dt} = X_t + drift(X_t) dt + vol(X_t) sqrt(dt) Z.

    Bitwise reproducible for a given (seed, n_paths, dt, T); increments are
    drawn from Philox streams keyed by (seed, block of 4096 paths), so path
    p's trajectory is also independent of n_paths.
    """
    if dt <= 0 or T < dt:
        raise ValueError("need dt > 0 and T >= dt")
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    n_steps = max(1, int(math.ceil(T / dt - 1e-12)))
    states = np.empty((n_paths, n_steps + 1))
    states[:, 0] = x0
    sqrt_dt = math.sqrt(dt)
    for start in range(0, n_paths, _PATH_BLOCK):
        stop = min(start + _PATH_BLOCK, n_paths)
        gen = np.random.Generator(np.random.Philox(key=[seed, start // _PATH_BLOCK]))
        z = gen.standard_normal((_PATH_BLOCK, n_steps))[: stop - start]
        x = states[start:stop, 0].copy()
        for k in range(n_steps):
            drift = evaluate(model.drift, x)
            vol = evaluate(model.vol, x)
            x = x + drift * dt + vol * sqrt_dt * z[:, k]
            states[start:stop, k + 1] = x
    return PathSet(states, float(dt), int(seed), float(x0))


@dataclass(frozen=True)
class StrategyStats:
    """Per-path outcome of running a switching strategy.

    Switch events are stored columnwise: ``switch_times[p, k]`` is the k-th
    switch time of path p (inf if fewer than k+1 switches), with matching
    from/to mode indices (-1 padding).  Discounted profit integrates
    e^{-rs} psi along the path; discounted cost sums e^{-r tau} g over the
    events.
    """

    switch_times: np.ndarray    # (n_paths, K), inf-padded, nondecreasing
    switch_from: np.ndarray     # (n_paths, K) int, -1 padded
    switch_to: np.ndarray       # (n_paths, K) int, -1 padded
    discounted_profit: np.ndarray
    discounted_cost: np.ndarray
    discount_rate: float
    clamp_fraction: float
    start_mode: int

    @property
    def n_paths(self) -> int:
        return self.discounted_profit.shape[0]

    @property
    def switch_counts(self) -> np.ndarray:
        return np.sum(np.isfinite(self.switch_times), axis=1)


@dataclass(frozen=True)
class PayoffEstimate:
    mean: float
    std_error: float
    n_paths: int


class _EventLog:
    """Grow-on-demand (n_paths, K) event storage."""

    def __init__(self, n_paths):
        self.times = np.full((n_paths, 2), np.inf)
        self.mode_from = np.full((n_paths, 2), -1, dtype=np.int64)
        self.mode_to = np.full((n_paths, 2), -1, dtype=np.int64)
        self.counts = np.zeros(n_paths, dtype=np.int64)

    def record(self, paths, time, from_modes, to_modes):
        need = int(np.max(self.counts[paths])) + 1
        while need > self.times.shape[1]:
            pad = self.times.shape[1]
            self.times = np.hstack([self.times, np.full((self.times.shape[0], pad), np.inf)])
            self.mode_from = np.hstack([self.mode_from, np.full((self.times.shape[0], pad), -1, dtype=np.int64)])
            self.mode_to = np.hstack([self.mode_to, np.full((self.times.shape[0], pad), -1, dtype=np.int64)])
        slots = self.counts[paths]
        self.times[paths, slots] = time
        self.mode_from[paths, slots] = from_modes
        self.mode_to[paths, slots] = to_modes
        self.counts[paths] += 1


def run_strategy(paths: PathSet, regions: SwitchingRegions,
                 problem: SwitchingProblem, start_mode: int) -> StrategyStats:
    """Run the region-based strategy along every path.

    At each time step the action of the current mode is looked up at the
    grid node nearest the (clamped) state; switches execute immediately and
    the same date is re-examined, up to m-1 chained switches.  Profits and
    costs are evaluated at the raw (unclamped) state; clamping applies only
    to the region lookup and is counted.  The profit integral uses the
    exact per-step discount factor with the profit frozen at the left
    endpoint of each step.
    """
    m = problem.n_modes
    if not 0 <= start_mode < m:
        raise ValueError(f"start_mode {start_mode} out of range")
    r = problem.discount_rate
    n_paths, n_steps = paths.n_paths, paths.n_steps
    dt = paths.dt
    nodes = regions.grid_nodes
    x_lo, x_hi = nodes[0], nodes[-1]

    mode = np.full(n_paths, start_mode, dtype=np.int64)
    profit = np.zeros(n_paths)
    cost = np.zeros(n_paths)
    log = _EventLog(n_paths)
    clamped = 0
    step_weight = (1.0 - math.exp(-r * dt)) / r  # integral of e^{-r s} over one step

    for k in range(n_steps):
        t = k * dt
        disc = math.exp(-r * t)
        x = paths.states[:, k]
        x_clamped = np.clip(x, x_lo, x_hi)
        clamped += int(np.count_nonzero((x < x_lo) | (x > x_hi)))
        node = np.searchsorted(nodes, x_clamped)
        node = np.clip(node, 1, len(nodes) - 1)
        left_closer = (x_clamped - nodes[node - 1]) <= (nodes[node] - x_clamped)
        node = np.where(left_closer, node - 1, node)

        for chain in range(m + 1):
            action = regions.actions[mode, node]
            switching = action != CONTINUE
            if not np.any(switching):
                break
            if chain == m:
                raise RuntimeError(
                    "more than m chained switches at one date; switching "
                    "costs must be strictly positive")
            idx = np.flatnonzero(switching)
            from_modes = mode[idx]
            to_modes = action[idx]
            # cost of each executed switch, discounted to time zero
            for i in range(m):
                for j in range(m):
                    if i == j:
                        continue
                    sel = idx[(from_modes == i) & (to_modes == j)]
                    if sel.size:
                        g = evaluate(problem.costs[i][j], x[sel])
                        cost[sel] += disc * np.asarray(g, dtype=float)
            log.record(idx, t, from_modes, to_modes)
            mode[idx] = to_modes

        for i in range(m):
            sel = np.flatnonzero(mode == i)
            if sel.size:
                psi = evaluate(problem.profits[i], x[sel])
                profit[sel] += disc * step_weight * np.asarray(psi, dtype=float)

    return StrategyStats(
        switch_times=log.times,
        switch_from=log.mode_from,
        switch_to=log.mode_to,
        discounted_profit=profit,
        discounted_cost=cost,
        discount_rate=r,
        clamp_fraction=clamped / float(n_paths * n_steps),
        start_mode=start_mode,
    )


def estimate_payoff(stats: StrategyStats, problem: SwitchingProblem) -> PayoffEstimate:
    """Mean and standard error of discounted profit minus switching costs."""
    total = stats.discounted_profit - stats.discounted_cost
    n = total.shape[0]
    if n == 0:
        raise ValueError("no paths")
    mean = float(np.mean(total))
    std_error = float(np.std(total, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return PayoffEstimate(mean, std_error, n)


def tau_decay(stats: StrategyStats, n_max: int = 20):
    """Monte Carlo decay table of the n-th switch time.

    Rows (n, mean of e^{-r tau_n}, n * mean); paths with fewer than n
    switches contribute 0, consistent with tau_n = infinity.
    """
    r = stats.discount_rate
    n_paths = stats.n_paths
    rows = []
    for n in range(1, n_max + 1):
        if n <= stats.switch_times.shape[1]:
            taus = stats.switch_times[:, n - 1]
            vals = np.where(np.isfinite(taus), np.exp(-r * np.where(np.isfinite(taus), taus, 0.0)), 0.0)
            mean = float(np.sum(vals) / n_paths)
        else:
            mean = 0.0
        rows.append((n, mean, n * mean))
    return rows
