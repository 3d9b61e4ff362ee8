"""Problem data for the multi-mode switching solver, plus assumption checks.

A :class:`SwitchingProblem` bundles a one-dimensional diffusion (drift and
volatility expressions), one running-profit expression per operating mode,
a matrix of mode-to-mode switching-cost expressions and a discount rate.

``validate`` machine-checks the four standing assumptions of the model:

* H1 - drift and volatility are affine-growth (syntactic degree <= 1),
  which gives Lipschitz continuity and linear growth;
* H2 - switching costs are strictly positive (sampled over the
  computational domain; the upper bound is only reported, see below);
* H3 - profits have polynomial growth with exponent <= gamma;
* H4 - the discount rate dominates the gamma-moment growth rate of the
  state process, ``moment_exponent(model, gamma) < r``.

H2 note: the theory also wants costs bounded above by a global constant,
but natural examples use costs like ``x^2 + 0.5`` that grow.  We therefore
enforce only the strictly-positive lower bound and report the sampled upper
bound, warning when a cost expression has positive growth degree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exprlang import Expr, evaluate, growth_degree, parse

__all__ = [
    "DiffusionModel",
    "SwitchingProblem",
    "ValidationReport",
    "affine_coefficients",
    "moment_exponent",
    "validate",
    "psi_value",
    "cost_value",
]


@dataclass(frozen=True)
class DiffusionModel:
    """State dynamics dX = drift(X) dt + vol(X) dW on the real line."""

    drift: Expr
    vol: Expr

    @classmethod
    def from_strings(cls, drift: str, vol: str) -> "DiffusionModel":
        return cls(parse(drift), parse(vol))


@dataclass(frozen=True)
class SwitchingProblem:
    """An m-mode switching problem: profits, switching costs, discounting.

    ``profits[i]`` is the running profit in mode i.  ``costs[i][j]`` is the
    cost of switching from mode i to mode j (entries with i == j are None
    and never read).  ``gamma`` is the polynomial growth exponent used by
    the discount-dominance check; it must be at least 2 and at least the
    growth degree of every profit expression.
    """

    model: DiffusionModel
    discount_rate: float
    profits: tuple
    costs: tuple
    gamma: int

    def __post_init__(self):
        m = len(self.profits)
        if m < 1:
            raise ValueError("need at least one mode")
        if self.discount_rate <= 0:
            raise ValueError("discount_rate must be positive")
        if len(self.costs) != m or any(len(row) != m for row in self.costs):
            raise ValueError("costs must be an m x m matrix")
        for i in range(m):
            for j in range(m):
                if i != j and self.costs[i][j] is None:
                    raise ValueError(f"missing switching cost for {i} -> {j}")
        max_deg = max(growth_degree(p) for p in self.profits)
        if self.gamma < max(2, max_deg):
            raise ValueError(
                f"gamma = {self.gamma} must be >= max(2, profit degree {max_deg})"
            )

    @property
    def n_modes(self) -> int:
        return len(self.profits)

    @staticmethod
    def default_gamma(profits) -> int:
        return max(2, max(growth_degree(p) for p in profits))


@dataclass(frozen=True)
class ValidationReport:
    h1_ok: bool
    h2_ok: bool
    h3_ok: bool
    h4_ok: bool
    moment_exponents: tuple  # ((q, C_q), ...) pairs
    cost_min: float
    cost_max: float
    messages: tuple

    @property
    def all_ok(self) -> bool:
        return self.h1_ok and self.h2_ok and self.h3_ok and self.h4_ok

    def exponent(self, q: int) -> float:
        for qq, c in self.moment_exponents:
            if qq == q:
                return c
        raise KeyError(q)


def affine_coefficients(expr: Expr):
    """Return (c0, c1) if ``expr`` is exactly the affine function c0 + c1*x.

    Detection is sampled: the syntactic degree must be <= 1 and the values
    at a fixed set of points (both signs, several magnitudes) must match
    the affine interpolant through x = 0 and x = 1 to relative 1e-12.
    Returns None otherwise (e.g. for ``|x| + 1``, degree 1 but kinked).
    """
    if growth_degree(expr) > 1:
        return None
    c0 = float(evaluate(expr, 0.0))
    c1 = float(evaluate(expr, 1.0)) - c0
    for x in (-1000.0, -7.5, -1.0, 0.5, 2.0, 333.0):
        want = c0 + c1 * x
        got = float(evaluate(expr, x))
        if abs(got - want) > 1e-12 * (1.0 + abs(want) + abs(got)):
            return None
    return c0, c1


def _linear_growth_constant(expr: Expr) -> float:
    """Smallest sampled C with |f(x)| <= C (1 + |x|), for degree <= 1 trees."""
    coeffs = affine_coefficients(expr)
    if coeffs is not None:
        c0, c1 = coeffs
        return max(abs(c0), abs(c1))
    xs = np.array([0.0, 0.5, -0.5, 1.0, -1.0, 10.0, -10.0, 1e3, -1e3, 1e6, -1e6])
    vals = np.abs(np.asarray([evaluate(expr, float(x)) for x in xs], dtype=float))
    return float(np.max(vals / (1.0 + np.abs(xs))))


def moment_exponent(model: DiffusionModel, q: int) -> float:
    """Growth-rate exponent C_q with E|X_t|^q <= C e^{C_q t} (1 + |x|^q).

    For purely linear coefficients drift = b1*x, vol = s1*x the state is
    geometric Brownian motion and the exponent is exact:

        C_q = q*b1 + q*(q-1)*s1^2 / 2.

    Otherwise a conservative Gronwall bound is returned with the linear
    growth constant C of the coefficients in place of (b1, s1):
    C_q = q*C + q*(q-1)*C^2/2.
    """
    if q < 2:
        raise ValueError("q must be at least 2")
    db = affine_coefficients(model.drift)
    dv = affine_coefficients(model.vol)
    if db is not None and dv is not None and db[0] == 0.0 and dv[0] == 0.0:
        b1, s1 = db[1], dv[1]
        return q * b1 + 0.5 * q * (q - 1) * s1 * s1
    if growth_degree(model.drift) > 1 or growth_degree(model.vol) > 1:
        raise ValueError("coefficients must have growth degree <= 1")
    c = _linear_growth_constant(model.drift) + _linear_growth_constant(model.vol)
    return q * c + 0.5 * q * (q - 1) * c * c


def validate(problem: SwitchingProblem, x_lo: float, x_hi: float,
             n_samples: int = 2001) -> ValidationReport:
    """Check H1-H4 on the computational domain [x_lo, x_hi].

    Failures are reported, never raised; the report is deterministic in its
    inputs (fixed uniform sampling of the cost expressions).
    """
    if not x_lo < x_hi:
        raise ValueError("x_lo must be < x_hi")
    messages = []
    m = problem.n_modes
    r = problem.discount_rate

    h1_ok = (growth_degree(problem.model.drift) <= 1
             and growth_degree(problem.model.vol) <= 1)
    if not h1_ok:
        messages.append(
            "H1 violated: drift/vol growth degree exceeds 1 (not affine-growth)")

    xs = np.linspace(x_lo, x_hi, n_samples)
    cost_min = math.inf
    cost_max = -math.inf
    if m == 1:
        h2_ok = True
        cost_min, cost_max = math.inf, -math.inf
        messages.append("H2 vacuous: single mode, no switching costs")
    else:
        h2_ok = True
        for i in range(m):
            for j in range(m):
                if i == j:
                    continue
                vals = np.asarray(evaluate(problem.costs[i][j], xs), dtype=float)
                lo, hi = float(np.min(vals)), float(np.max(vals))
                cost_min = min(cost_min, lo)
                cost_max = max(cost_max, hi)
                if lo <= 0.0:
                    h2_ok = False
                    messages.append(
                        f"H2 violated: cost {i}->{j} reaches {lo:g} on the domain")
                if growth_degree(problem.costs[i][j]) > 0:
                    messages.append(
                        f"H2 warning: cost {i}->{j} is unbounded in x; upper bound "
                        f"{hi:g} holds only on [{x_lo:g}, {x_hi:g}]")

    degs = [growth_degree(p) for p in problem.profits]
    h3_ok = all(d <= problem.gamma for d in degs)
    if not h3_ok:
        messages.append(
            f"H3 violated: profit degree {max(degs)} exceeds gamma = {problem.gamma}")

    exponents = []
    h4_ok = False
    if h1_ok:
        qs = sorted({2, problem.gamma})
        exponents = [(q, moment_exponent(problem.model, q)) for q in qs]
        c_gamma = dict(exponents)[problem.gamma]
        h4_ok = (-r + c_gamma) < 0.0
        if not h4_ok:
            messages.append(
                f"H4 violated: moment exponent C_gamma = {c_gamma:g} >= "
                f"discount rate r = {r:g} (need -r + C_gamma < 0)")
    else:
        messages.append("H4 not evaluated: H1 failed, no moment exponent available")

    return ValidationReport(
        h1_ok=h1_ok, h2_ok=h2_ok, h3_ok=h3_ok, h4_ok=h4_ok,
        moment_exponents=tuple(exponents),
        cost_min=cost_min, cost_max=cost_max,
        messages=tuple(messages),
    )


def psi_value(problem: SwitchingProblem, i: int, x: float) -> float:
    """Running profit of mode i at state x (modes are 0-based)."""
    if not 0 <= i < problem.n_modes:
        raise IndexError(f"mode {i} out of range")
    return float(evaluate(problem.profits[i], float(x)))


def cost_value(problem: SwitchingProblem, i: int, j: int, x: float) -> float:
    """Cost of switching from mode i to mode j at state x (0-based modes)."""
    m = problem.n_modes
    if not (0 <= i < m and 0 <= j < m):
        raise IndexError(f"mode pair ({i}, {j}) out of range")
    if i == j:
        raise ValueError("no cost is defined for staying in the same mode")
    return float(evaluate(problem.costs[i][j], float(x)))
