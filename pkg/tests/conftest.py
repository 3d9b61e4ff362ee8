"""Shared fixtures: the two reference problems and their solved fields."""

import pytest

from modeswitch import (SolveConfig, SwitchingProblem, DiffusionModel,
                        build_grid, parse, penalized_solve, picard_solve)

SQRT2 = "1.4142135623730951"

EXAMPLE1_CONFIG = f"""
[problem]  r = 100  gamma = 2
[model]    b = "x"  sigma = "{SQRT2}*x"
[mode.1]   psi = "0.5*x^2 - 0.3*x + 1"
[mode.2]   psi = "x^2 + 1"
[cost.1.2] g = "0.5*|x| + 0.1"
[cost.2.1] g = "|x| + 0.48"
[grid]     x_min = 0  x_max = 2  n_nodes = 2001  spacing = "uniform"
[solver]   scheme = "both"  outer_tol = 1e-8
"""

EXAMPLE2_CONFIG = f"""
[problem]  r = 100  gamma = 2
[model]    b = "x"  sigma = "{SQRT2}*x"
[mode.1]   psi = "x + 1"
[mode.2]   psi = "-x - 2"
[mode.3]   psi = "-x - 2"
[cost.1.2] g = "0.5*|x| + 1"
[cost.1.3] g = "x^2 + 0.5"
[cost.2.1] g = "|x| + 4"
[cost.2.3] g = "|x| + 5"
[cost.3.1] g = "0.001*|x| + 0.1"
[cost.3.2] g = "x^2 + |x| + 0.5"
[grid]     x_min = 0  x_max = 5  n_nodes = 2001  spacing = "uniform"
[solver]   scheme = "both"  outer_tol = 1e-8
"""


def gbm_model():
    return DiffusionModel.from_strings("x", f"{SQRT2}*x")


def make_problem(psi_sources, cost_sources, r=100.0, gamma=2, model=None):
    """cost_sources: {(i, j): source} with 0-based modes."""
    m = len(psi_sources)
    profits = tuple(parse(s) for s in psi_sources)
    costs = [[None] * m for _ in range(m)]
    for (i, j), src in cost_sources.items():
        costs[i][j] = parse(src)
    return SwitchingProblem(model=model or gbm_model(), discount_rate=r,
                            profits=profits,
                            costs=tuple(tuple(row) for row in costs),
                            gamma=gamma)


def example1_problem():
    return make_problem(
        ["0.5*x^2 - 0.3*x + 1", "x^2 + 1"],
        {(0, 1): "0.5*|x| + 0.1", (1, 0): "|x| + 0.48"})


def example2_problem():
    return make_problem(
        ["x + 1", "-x - 2", "-x - 2"],
        {(0, 1): "0.5*|x| + 1", (0, 2): "x^2 + 0.5",
         (1, 0): "|x| + 4", (1, 2): "|x| + 5",
         (2, 0): "0.001*|x| + 0.1", (2, 1): "x^2 + |x| + 0.5"})


def hand_dp_problem():
    """Two modes: idle (no profit) and running (unit profit), tiny symmetric
    switching cost.  The values are 0.009 and 0.010 in closed form."""
    return make_problem(["0", "1"], {(0, 1): "0.001", (1, 0): "0.001"})


@pytest.fixture(scope="session")
def ex1():
    return example1_problem()


@pytest.fixture(scope="session")
def ex2():
    return example2_problem()


@pytest.fixture(scope="session")
def ex1_grid():
    return build_grid(0.0, 2.0, 2001)


@pytest.fixture(scope="session")
def ex2_grid():
    return build_grid(0.0, 5.0, 2001)


@pytest.fixture(scope="session")
def ex1_picard(ex1, ex1_grid):
    return picard_solve(ex1, ex1_grid, SolveConfig())


@pytest.fixture(scope="session")
def ex1_penalized(ex1, ex1_grid):
    return penalized_solve(ex1, ex1_grid, SolveConfig())


@pytest.fixture(scope="session")
def ex2_picard(ex2, ex2_grid):
    return picard_solve(ex2, ex2_grid, SolveConfig())


@pytest.fixture(scope="session")
def ex2_penalized(ex2, ex2_grid):
    return penalized_solve(ex2, ex2_grid, SolveConfig())


@pytest.fixture(scope="session")
def hand_dp():
    return hand_dp_problem()
