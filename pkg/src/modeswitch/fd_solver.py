"""Finite-difference solver for the coupled mode-switching value system.

The stationary system solved here is, for each mode i on a truncated grid,

    min( v_i - max_{j != i}(-g_ij + v_j),  r v_i - A v_i - psi_i ) = 0,

with A = 0.5 vol(x)^2 d^2/dx^2 + drift(x) d/dx.  Two schemes are provided:

* :func:`picard_solve` - the monotone fixed-point scheme: start from the
  no-switching values and repeatedly re-solve one single-obstacle problem
  per mode, the obstacle being built from the previous sweep.  Iterates are
  nondecreasing and converge to the discrete solution.
* :func:`penalized_solve` - replace the constraint by a penalty term
  n * (v_i - obstacle)^- and drive n through an increasing schedule,
  warm-starting each stage from the last.

Discretization: central second differences for the diffusion term and
first-order upwind differences for the drift, so that every interior row of
(rI - A) has nonpositive off-diagonal entries and a diagonal excess of
exactly r (an M-matrix; the scheme is monotone).  The single-obstacle
subproblem is solved by policy iteration over the two row choices
"PDE row" / "pin to obstacle", which terminates in finitely many steps.

Boundary rows.  The system lives on all of R and must be truncated.  At a
boundary node where the PDE row is realizable one-sidedly (zero volatility
and drift pointing inward or vanishing, e.g. x = 0 for the usual degenerate
examples), the degenerate PDE row is kept and participates in the obstacle.
Otherwise the default row imposes zero curvature (vanishing second
difference, i.e. linear extrapolation); a Dirichlet row with a user
expression is available instead.  All linear solves go through a banded
LU factorization (bandwidth 2 covers the extrapolation rows).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exprlang import Expr, evaluate
from .problem import DiffusionModel, SwitchingProblem, validate

__all__ = [
    "Grid",
    "build_grid",
    "Boundary",
    "TridiagOperator",
    "discretize_generator",
    "ValueField",
    "SolveConfig",
    "SolveReport",
    "ResidualReport",
    "ObstacleResult",
    "solve_unconstrained",
    "solve_obstacle",
    "picard_solve",
    "penalized_solve",
    "system_residual",
]

_ROW_PDE = 0
_ROW_EXTRAP = 1
_ROW_DIRICHLET = 2

DEFAULT_PENALTY_SCHEDULE = tuple(10.0 ** k for k in range(1, 13))


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n_nodes: int
    spacing: str
    nodes: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")


def build_grid(x_min: float, x_max: float, n_nodes: int,
               spacing: str = "uniform") -> Grid:
    """Uniform or logarithmic grid including both endpoints."""
    if n_nodes < 3:
        raise ValueError("n_nodes must be at least 3")
    if not x_min < x_max:
        raise ValueError("x_min must be < x_max")
    if spacing == "uniform":
        nodes = np.linspace(x_min, x_max, n_nodes)
    elif spacing == "logarithmic":
        if x_min <= 0:
            raise ValueError("logarithmic spacing requires x_min > 0")
        nodes = np.geomspace(x_min, x_max, n_nodes)
    else:
        raise ValueError(f"unknown spacing {spacing!r}")
    return Grid(x_min, x_max, n_nodes, spacing, nodes)


@dataclass(frozen=True)
class Boundary:
    """Truncation rows: 'zero-curvature' (default) or 'dirichlet' with
    value expressions for the two ends."""

    kind: str = "zero-curvature"
    lo: Optional[Expr] = None
    hi: Optional[Expr] = None

    def __post_init__(self):
        if self.kind not in ("zero-curvature", "dirichlet"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "dirichlet" and (self.lo is None or self.hi is None):
            raise ValueError("dirichlet boundary needs lo and hi expressions")


class TridiagOperator:
    """Rows of (rI - A) on a grid, plus boundary row bookkeeping.

    ``sub``, ``diag``, ``sup`` hold the PDE rows (including degenerate
    one-sided boundary rows where applicable); ``row_kind`` marks each node
    as PDE / zero-curvature / Dirichlet.  The M-matrix property of the PDE
    rows is asserted at assembly.
    """

    def __init__(self, grid: Grid, r: float, sub, diag, sup, row_kind,
                 dirichlet_values):
        self.grid = grid
        self.r = float(r)
        self.sub = sub
        self.diag = diag
        self.sup = sup
        self.row_kind = row_kind
        self.dirichlet_values = dirichlet_values
        self.n = grid.n_nodes
        self.pde_mask = row_kind == _ROW_PDE
        self._check_m_matrix()
        self._ab_base, self._rhs_mask = self._banded_template()

    def _check_m_matrix(self):
        inner = slice(1, self.n - 1)
        if np.any(self.sub[inner] > 0) or np.any(self.sup[inner] > 0):
            raise AssertionError("positive off-diagonal in an interior row")
        excess = self.diag[inner] - (np.abs(self.sub[inner]) + np.abs(self.sup[inner]))
        if np.any(self.diag[inner] <= 0) or np.any(excess < 0.5 * self.r):
            raise AssertionError("interior row lost diagonal dominance")

    def _banded_template(self):
        """Banded (2,2) matrix for the all-PDE-row configuration.

        rhs_mask marks nodes whose right-hand side comes from the caller
        (True) as opposed to being fixed by a boundary row (False).
        """
        n = self.n
        ab = np.zeros((5, n))
        ab[2, :] = self.diag
        ab[1, 1:] = self.sup[:-1]
        ab[3, :-1] = self.sub[1:]
        rhs_mask = np.ones(n, dtype=bool)
        if self.row_kind[0] == _ROW_EXTRAP:
            ab[2, 0] = 1.0
            ab[1, 1] = -2.0
            ab[0, 2] = 1.0
            rhs_mask[0] = False
        elif self.row_kind[0] == _ROW_DIRICHLET:
            ab[2, 0] = 1.0
            ab[1, 1] = 0.0
            rhs_mask[0] = False
        if self.row_kind[n - 1] == _ROW_EXTRAP:
            ab[2, n - 1] = 1.0
            ab[3, n - 2] = -2.0
            ab[4, n - 3] = 1.0
            rhs_mask[n - 1] = False
        elif self.row_kind[n - 1] == _ROW_DIRICHLET:
            ab[2, n - 1] = 1.0
            ab[3, n - 2] = 0.0
            rhs_mask[n - 1] = False
        return ab, rhs_mask

    def boundary_rhs(self) -> np.ndarray:
        """Right-hand side entries of the boundary rows (0 where PDE)."""
        rhs = np.zeros(self.n)
        for k in (0, self.n - 1):
            if self.row_kind[k] == _ROW_DIRICHLET:
                rhs[k] = self.dirichlet_values[k]
        return rhs

    def apply_pde(self, v: np.ndarray) -> np.ndarray:
        """(rI - A) v on PDE rows; NaN on boundary-condition rows."""
        n = self.n
        out = np.full(n, np.nan)
        out[1:-1] = (self.sub[1:-1] * v[:-2] + self.diag[1:-1] * v[1:-1]
                     + self.sup[1:-1] * v[2:])
        if self.row_kind[0] == _ROW_PDE:
            out[0] = self.diag[0] * v[0] + self.sup[0] * v[1]
        if self.row_kind[n - 1] == _ROW_PDE:
            out[n - 1] = self.sub[n - 1] * v[n - 2] + self.diag[n - 1] * v[n - 1]
        return out

    def solve(self, rhs_pde: np.ndarray, active: Optional[np.ndarray] = None,
              obstacle: Optional[np.ndarray] = None) -> np.ndarray:
        """Solve the row system: obstacle-pinned rows where ``active``,
        boundary rows as configured, PDE rows elsewhere."""
        ab = self._ab_base.copy()
        rhs = np.where(self._rhs_mask, rhs_pde, self.boundary_rhs())
        if active is not None and np.any(active):
            idx = np.flatnonzero(active)
            ab[2, idx] = 1.0
            up = idx[idx < self.n - 1]
            ab[1, up + 1] = 0.0
            lo = idx[idx > 0]
            ab[3, lo - 1] = 0.0
            rhs[idx] = obstacle[idx]
        return solve_banded((2, 2), ab, rhs)


def discretize_generator(model: DiffusionModel, grid: Grid, r: float,
                         boundary: Boundary = Boundary()) -> TridiagOperator:
    """Assemble (rI - A) with upwind drift and central diffusion differences.

    The drift difference direction follows the sign of the drift at each
    node, which keeps every interior row an M-matrix row for any r > 0.  At
    a boundary node with zero volatility and non-outward drift the
    (degenerate) PDE row is kept; otherwise the configured boundary row is
    installed.
    """
    if r <= 0:
        raise ValueError("discount rate must be positive")
    x = grid.nodes
    n = grid.n_nodes
    b = np.asarray(evaluate(model.drift, x), dtype=float)
    s2 = np.asarray(evaluate(model.vol, x), dtype=float) ** 2
    h = np.diff(x)
    hm, hp = h[:-1], h[1:]

    sub = np.zeros(n)
    diag = np.zeros(n)
    sup = np.zeros(n)
    a = 0.5 * s2[1:-1]
    lower = 2.0 * a / (hm * (hm + hp)) + np.maximum(-b[1:-1], 0.0) / hm
    upper = 2.0 * a / (hp * (hm + hp)) + np.maximum(b[1:-1], 0.0) / hp
    sub[1:-1] = -lower
    sup[1:-1] = -upper
    diag[1:-1] = r + lower + upper

    row_kind = np.full(n, _ROW_PDE, dtype=np.int8)
    dirichlet_values = np.full(n, np.nan)
    if boundary.kind == "dirichlet":
        row_kind[0] = row_kind[-1] = _ROW_DIRICHLET
        dirichlet_values[0] = float(evaluate(boundary.lo, float(x[0])))
        dirichlet_values[-1] = float(evaluate(boundary.hi, float(x[-1])))
        diag[0] = diag[-1] = 1.0
    else:
        if s2[0] == 0.0 and b[0] >= 0.0:
            up = b[0] / h[0]
            diag[0] = r + up
            sup[0] = -up
        else:
            row_kind[0] = _ROW_EXTRAP
            diag[0] = 1.0
        if s2[-1] == 0.0 and b[-1] <= 0.0:
            lo = -b[-1] / h[-1]
            diag[-1] = r + lo
            sub[-1] = -lo
        else:
            row_kind[-1] = _ROW_EXTRAP
            diag[-1] = 1.0
    return TridiagOperator(grid, r, sub, diag, sup, row_kind, dirichlet_values)


@dataclass(frozen=True)
class ValueField:
    """Value samples, one row per mode, on a common grid."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != self.grid.n_nodes:
            raise ValueError("values must have shape (n_modes, n_nodes)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("value field contains non-finite entries")

    @property
    def n_modes(self) -> int:
        return self.values.shape[0]

    def at(self, i: int, x: float) -> float:
        """Linear interpolation of mode i at state x."""
        return float(np.interp(x, self.grid.nodes, self.values[i]))


@dataclass(frozen=True)
class SolveConfig:
    outer_tol: float = 1e-8
    max_outer: int = 500
    max_policy_iters: int = 200
    penalty_schedule: tuple = DEFAULT_PENALTY_SCHEDULE
    boundary: Boundary = field(default_factory=Boundary)

    def __post_init__(self):
        if self.outer_tol <= 0:
            raise ValueError("outer_tol must be positive")
        sched = np.asarray(self.penalty_schedule, dtype=float)
        if len(sched) == 0 or np.any(sched <= 0) or np.any(np.diff(sched) <= 0):
            raise ValueError("penalty_schedule must be positive and strictly increasing")


@dataclass(frozen=True)
class ResidualReport:
    """Discrete complementarity diagnostics over interior nodes.

    ``complementarity[i]`` is sup |min(v_i - obstacle_i, (rI-A)v_i - psi_i)|
    and ``obstacle_violation[i]`` is sup max(obstacle_i - v_i, 0).
    """

    complementarity: tuple
    obstacle_violation: tuple

    @property
    def max_complementarity(self) -> float:
        return max(self.complementarity)

    @property
    def max_violation(self) -> float:
        return max(self.obstacle_violation)


@dataclass(frozen=True)
class SolveReport:
    field: ValueField
    outer_iterations: int
    sup_diffs: tuple
    monotone: bool
    converged: bool
    residual: ResidualReport
    scheme: str


@dataclass(frozen=True)
class ObstacleResult:
    values: np.ndarray
    iterations: int
    converged: bool
    active: np.ndarray


def solve_unconstrained(op: TridiagOperator, psi: np.ndarray) -> np.ndarray:
    """No-switching value: the linear system (rI - A) v = psi."""
    return op.solve(np.asarray(psi, dtype=float))


def _policy_assignment(op, v, psi, obstacle):
    """Pick, per PDE node, the branch of min(v - h, (rI-A)v - psi) attained.

    Ties go to the PDE row: at a tie either row solves the node exactly, and
    keeping the PDE row avoids pinning whole regions of exact ties (e.g. a
    zero profit against a zero obstacle), which would make the active set
    crawl one node per iteration instead of jumping.
    """
    resid = op.apply_pde(v) - psi
    gap = v - obstacle
    active = op.pde_mask & np.isfinite(obstacle) & (gap < resid)
    return active


def solve_obstacle(op: TridiagOperator, psi: np.ndarray, obstacle: np.ndarray,
                   warm: Optional[np.ndarray] = None,
                   max_policy_iters: int = 200) -> ObstacleResult:
    """Policy (Howard) iteration for min(v - obstacle, (rI-A)v - psi) = 0.

    Each step solves a linear system with rows pinned to the obstacle on the
    current active set, then re-derives the set.  Terminates when the set is
    stable; a value-based stop (sup change below 1e-13 of scale) guards
    against single-node chatter at the free boundary, where either row
    yields the same values.
    """
    psi = np.asarray(psi, dtype=float)
    obstacle = np.asarray(obstacle, dtype=float)
    v = warm if warm is not None else solve_unconstrained(op, psi)
    active = _policy_assignment(op, v, psi, obstacle)
    for it in range(1, max_policy_iters + 1):
        v_new = op.solve(psi, active, obstacle)
        new_active = _policy_assignment(op, v_new, psi, obstacle)
        if np.array_equal(new_active, active):
            return ObstacleResult(v_new, it, True, new_active)
        delta = float(np.max(np.abs(v_new - v)))
        if delta <= 1e-13 * max(1.0, float(np.max(np.abs(v_new)))):
            return ObstacleResult(v_new, it, True, new_active)
        v, active = v_new, new_active
    return ObstacleResult(v, max_policy_iters, False, active)


def _sample_problem(problem: SwitchingProblem, x: np.ndarray):
    m = problem.n_modes
    psis = np.stack([np.asarray(evaluate(p, x), dtype=float)
                     for p in problem.profits])
    costs = [[None] * m for _ in range(m)]
    for i in range(m):
        for j in range(m):
            if i != j:
                costs[i][j] = np.asarray(evaluate(problem.costs[i][j], x), dtype=float)
    return psis, costs


def _obstacle_for_mode(values: np.ndarray, costs, i: int):
    """max_{j != i}(-g_ij + v_j) nodewise, with the attaining j (lowest wins
    ties).  Returns (-inf, None) when there is a single mode."""
    m, n = values.shape
    if m == 1:
        return np.full(n, -np.inf), None
    cand = np.full((m, n), -np.inf)
    for j in range(m):
        if j != i:
            cand[j] = values[j] - costs[i][j]
    best = np.argmax(cand, axis=0)
    return cand[best, np.arange(n)], best


def _check_preconditions(problem: SwitchingProblem, grid: Grid):
    report = validate(problem, grid.x_min, grid.x_max)
    if not report.h1_ok or not report.h4_ok:
        raise ValueError(
            "problem fails validation (H1/H4): " + "; ".join(report.messages))


def picard_solve(problem: SwitchingProblem, grid: Grid,
                 cfg: SolveConfig = SolveConfig()) -> SolveReport:
    """Monotone fixed-point scheme over per-mode obstacle problems.

    Iteration 1 is the no-switching solve; each further iteration solves,
    for every mode, the single-obstacle problem whose obstacle is built
    from the previous sweep (all modes read the same previous iterate, so
    the per-mode solves are order-independent).  Stops when the sweep
    changes no value by more than ``outer_tol`` in sup norm.
    """
    _check_preconditions(problem, grid)
    op = discretize_generator(problem.model, grid, problem.discount_rate,
                              cfg.boundary)
    psis, costs = _sample_problem(problem, grid.nodes)
    m = problem.n_modes

    v = np.stack([solve_unconstrained(op, psis[i]) for i in range(m)])
    outer_iterations = 1
    sup_diffs = []
    monotone = True
    converged = (m == 1)
    while not converged and outer_iterations < cfg.max_outer:
        v_next = np.empty_like(v)
        for i in range(m):
            obstacle, _ = _obstacle_for_mode(v, costs, i)
            result = solve_obstacle(op, psis[i], obstacle, warm=v[i].copy(),
                                    max_policy_iters=cfg.max_policy_iters)
            v_next[i] = result.values
        diff = float(np.max(np.abs(v_next - v)))
        slack = 1e-12 * max(1.0, float(np.max(np.abs(v))))
        if float(np.min(v_next - v)) < -slack:
            monotone = False
        sup_diffs.append(diff)
        v = v_next
        outer_iterations += 1
        if diff < cfg.outer_tol:
            converged = True

    field = ValueField(v, grid)
    residual = system_residual(field, problem, op)
    return SolveReport(field, outer_iterations, tuple(sup_diffs), monotone,
                       converged, residual, "picard")


class _PenaltyAssembler:
    """Static sparse structure of the coupled system, shared across penalty
    stages; only the penalty entries change between iterations."""

    def __init__(self, op: TridiagOperator, psis: np.ndarray):
        m, n = psis.shape
        self.op, self.m, self.n = op, m, n
        rows, cols, vals = [], [], []
        rhs = np.empty(m * n)
        boundary_rhs = op.boundary_rhs()
        for i in range(m):
            off = i * n
            inner = np.arange(1, n - 1)
            rows += [off + inner, off + inner, off + inner]
            cols += [off + inner - 1, off + inner, off + inner + 1]
            vals += [op.sub[1:-1], op.diag[1:-1], op.sup[1:-1]]
            rhs[off + 1:off + n - 1] = psis[i][1:-1]
            for k in (0, n - 1):
                kind = op.row_kind[k]
                if kind == _ROW_PDE:
                    nb = 1 if k == 0 else n - 2
                    coef = op.sup[0] if k == 0 else op.sub[n - 1]
                    rows += [np.array([off + k, off + k])]
                    cols += [np.array([off + k, off + nb])]
                    vals += [np.array([op.diag[k], coef])]
                    rhs[off + k] = psis[i][k]
                elif kind == _ROW_EXTRAP:
                    base = 0 if k == 0 else n - 3
                    rows += [np.array([off + k] * 3)]
                    cols += [off + base + np.arange(3)]
                    vals += [np.array([1.0, -2.0, 1.0])]
                    rhs[off + k] = 0.0
                else:
                    rows += [np.array([off + k])]
                    cols += [np.array([off + k])]
                    vals += [np.array([1.0])]
                    rhs[off + k] = boundary_rhs[k]
        self.static_rows = np.concatenate(rows)
        self.static_cols = np.concatenate(cols)
        self.static_vals = np.concatenate(vals)
        self.static_rhs = rhs

    def solve(self, pen: float, active_list, best_list, costs):
        """One linearized solve with frozen active sets and switch targets."""
        m, n = self.m, self.n
        rows = [self.static_rows]
        cols = [self.static_cols]
        vals = [self.static_vals]
        rhs = self.static_rhs.copy()
        for i in range(m):
            idx = np.flatnonzero(active_list[i])
            if idx.size == 0:
                continue
            j = best_list[i][idx]
            off = i * n
            rows += [off + idx, off + idx]
            cols += [off + idx, j * n + idx]
            vals += [np.full(idx.size, pen), np.full(idx.size, -pen)]
            gvals = np.array([costs[i][jj][kk] for jj, kk in zip(j, idx)])
            rhs[off + idx] -= pen * gvals
        A = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(m * n, m * n))
        return spla.spsolve(A, rhs).reshape(m, n)


def _penalized_stage(assembler: _PenaltyAssembler, costs, pen: float,
                     start: np.ndarray, max_iters: int):
    """Solve the coupled penalized system for one penalty value by
    semismooth (active-set) iteration with a value-based chatter guard."""
    op = assembler.op
    m = assembler.m
    v = start

    def assignment(values):
        act, best = [], []
        for i in range(m):
            obstacle, b = _obstacle_for_mode(values, costs, i)
            act.append(op.pde_mask & (obstacle - values[i] > 0.0))
            best.append(b)
        return act, best

    active, best = assignment(v)
    for it in range(max_iters):
        v_new = assembler.solve(pen, active, best, costs)
        new_active, new_best = assignment(v_new)
        same = all(np.array_equal(a, b) for a, b in zip(active, new_active))
        same = same and all(
            a is b or np.array_equal(a[na], b[nb])
            for a, b, na, nb in zip(best, new_best, active, new_active))
        delta = float(np.max(np.abs(v_new - v)))
        v, active, best = v_new, new_active, new_best
        if same or delta <= 1e-13 * max(1.0, float(np.max(np.abs(v)))):
            return v, True
    return v, False


def penalized_solve(problem: SwitchingProblem, grid: Grid,
                    cfg: SolveConfig = SolveConfig()) -> SolveReport:
    """Penalty-scheme solve of the coupled system.

    For each penalty value n in the schedule the semismooth system
    r v_i - A v_i - psi_i - n (v_i - obstacle_i)^- = 0 is solved with all
    modes coupled, warm-starting from the previous stage.  The schedule
    stops as soon as two consecutive stages agree within ``outer_tol`` in
    sup norm; exhausting the schedule first is flagged as non-convergence.
    """
    _check_preconditions(problem, grid)
    op = discretize_generator(problem.model, grid, problem.discount_rate,
                              cfg.boundary)
    psis, costs = _sample_problem(problem, grid.nodes)
    m = problem.n_modes

    v = np.stack([solve_unconstrained(op, psis[i]) for i in range(m)])
    outer_iterations = 1
    sup_diffs = []
    monotone = True
    converged = (m == 1)
    if not converged:
        assembler = _PenaltyAssembler(op, psis)
        for pen in cfg.penalty_schedule:
            v_next, _ = _penalized_stage(
                assembler, costs, pen, v, max_iters=max(cfg.max_policy_iters, 30))
            diff = float(np.max(np.abs(v_next - v)))
            slack = 1e-12 * max(1.0, float(np.max(np.abs(v))))
            if float(np.min(v_next - v)) < -slack:
                monotone = False
            sup_diffs.append(diff)
            v = v_next
            outer_iterations += 1
            if diff < cfg.outer_tol:
                converged = True
                break

    field = ValueField(v, grid)
    residual = system_residual(field, problem, op)
    return SolveReport(field, outer_iterations, tuple(sup_diffs), monotone,
                       converged, residual, "penalized")


def system_residual(field: ValueField, problem: SwitchingProblem,
                    op: TridiagOperator) -> ResidualReport:
    """Complementarity residuals of a candidate field over interior nodes."""
    psis, costs = _sample_problem(problem, field.grid.nodes)
    inner = slice(1, field.grid.n_nodes - 1)
    comp, viol = [], []
    for i in range(field.n_modes):
        obstacle, _ = _obstacle_for_mode(field.values, costs, i)
        pde = op.apply_pde(field.values[i]) - psis[i]
        gap = field.values[i] - obstacle
        comp.append(float(np.max(np.abs(np.minimum(gap, pde)[inner]))))
        viol.append(float(np.max(np.maximum(-gap, 0.0)[inner])))
    return ResidualReport(tuple(comp), tuple(viol))
