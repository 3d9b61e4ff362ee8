import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from modeswitch import (Boundary, DiffusionModel, SolveConfig, build_grid,
                        discretize_generator, parse, penalized_solve,
                        picard_solve, solve_obstacle, solve_unconstrained,
                        system_residual)
from modeswitch.fd_solver import ValueField, _ROW_EXTRAP, _ROW_PDE
from modeswitch.lattice import LatticeConfig, build_lattice, horizon_for_tolerance, snell_stop

from conftest import example1_problem, gbm_model, make_problem


# ---------------------------------------------------------------------------
# grids

def test_build_grid_uniform():
    grid = build_grid(0.0, 2.0, 5)
    np.testing.assert_allclose(grid.nodes, [0.0, 0.5, 1.0, 1.5, 2.0])


def test_build_grid_logarithmic():
    grid = build_grid(1.0, 4.0, 3, "logarithmic")
    np.testing.assert_allclose(grid.nodes, [1.0, 2.0, 4.0])


def test_build_grid_rejects_bad_input():
    with pytest.raises(ValueError):
        build_grid(0.0, 2.0, 2)
    with pytest.raises(ValueError):
        build_grid(0.0, 2.0, 5, "logarithmic")
    with pytest.raises(ValueError):
        build_grid(2.0, 0.0, 5)


# ---------------------------------------------------------------------------
# generator discretization

def test_zero_model_rows_are_pure_discounting():
    op = discretize_generator(DiffusionModel.from_strings("0", "0"),
                              build_grid(-1.0, 1.0, 9), 100.0)
    np.testing.assert_array_equal(op.sub, 0.0)
    np.testing.assert_array_equal(op.sup, 0.0)
    np.testing.assert_allclose(op.diag, 100.0)
    assert np.all(op.row_kind == _ROW_PDE)


def test_degenerate_origin_row():
    # both coefficients vanish at x = 0, so the first row reduces to r v(0)
    op = discretize_generator(gbm_model(), build_grid(0.0, 2.0, 11), 100.0)
    assert op.row_kind[0] == _ROW_PDE
    assert op.sup[0] == 0.0 and op.diag[0] == 100.0
    # the far boundary needs a truncation row
    assert op.row_kind[-1] == _ROW_EXTRAP


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2), st.floats(0, 2),
       st.floats(0.1, 100.0), st.sampled_from([11, 32, 101]))
def test_interior_rows_are_m_matrix_rows(b0, b1, s0, s1, r, n_nodes):
    model = DiffusionModel.from_strings(f"{b0} + {b1}*x".replace("+ -", "- "),
                                        f"{s0} + {s1}*x".replace("+ -", "- "))
    op = discretize_generator(model, build_grid(-2.0, 3.0, n_nodes), r)
    inner = slice(1, n_nodes - 1)
    assert np.all(op.sub[inner] <= 0)
    assert np.all(op.sup[inner] <= 0)
    excess = op.diag[inner] - np.abs(op.sub[inner]) - np.abs(op.sup[inner])
    assert np.all(op.diag[inner] > 0)
    assert np.all(excess >= 0.5 * r)


# ---------------------------------------------------------------------------
# unconstrained solve

def test_constant_profit_closed_form():
    op = discretize_generator(gbm_model(), build_grid(0.0, 2.0, 501), 100.0)
    v = solve_unconstrained(op, np.ones(501))
    np.testing.assert_allclose(v, 0.01, atol=1e-12)


def test_linear_profit_closed_form():
    grid = build_grid(0.0, 4.0, 2001)
    op = discretize_generator(gbm_model(), grid, 100.0)
    v = solve_unconstrained(op, grid.nodes.copy())
    mid = slice(200, 1801)
    rel = np.abs(v[mid] - grid.nodes[mid] / 99.0) / (grid.nodes[mid] / 99.0)
    assert np.max(rel) < 1e-3


def test_quadratic_profit_closed_form_dirichlet():
    grid = build_grid(0.0, 4.0, 2001)
    closed = parse("0.010416666666666666*x^2")  # x^2 / 96
    op = discretize_generator(gbm_model(), grid, 100.0,
                              Boundary("dirichlet", closed, closed))
    v = solve_unconstrained(op, grid.nodes ** 2)
    mid = slice(200, 1801)
    rel = np.abs(v[mid] - grid.nodes[mid] ** 2 / 96.0) / (grid.nodes[mid] ** 2 / 96.0)
    assert np.max(rel) < 1e-3


# ---------------------------------------------------------------------------
# single-obstacle solve

def test_inactive_obstacle_reproduces_unconstrained_exactly():
    grid = build_grid(0.0, 2.0, 301)
    op = discretize_generator(gbm_model(), grid, 100.0)
    psi = grid.nodes ** 2 + 1
    base = solve_unconstrained(op, psi)
    result = solve_obstacle(op, psi, np.full(301, -1e9))
    assert result.converged and result.iterations == 1
    np.testing.assert_array_equal(result.values, base)


def test_fully_active_constant_obstacle():
    grid = build_grid(0.0, 2.0, 301)
    op = discretize_generator(gbm_model(), grid, 100.0)
    result = solve_obstacle(op, np.zeros(301), np.full(301, 0.25))
    assert result.converged
    np.testing.assert_allclose(result.values, 0.25, atol=1e-12)


def test_obstacle_matches_lattice_stopping_value():
    # running profit 0, stop reward max(x - 1, 0), geometric dynamics:
    # compare the grid solve at x = 1 with the lattice stopping value
    grid = build_grid(0.0, 4.0, 2001)
    op = discretize_generator(gbm_model(), grid, 100.0)
    reward = np.maximum(grid.nodes - 1.0, 0.0)
    result = solve_obstacle(op, np.zeros(2001), reward)
    assert result.converged
    fd_value = float(np.interp(1.0, grid.nodes, result.values))

    problem = make_problem(["x^2"], {})  # only supplies model/r/gamma for the horizon
    horizon = horizon_for_tolerance(problem, 1.0, 1e-8)
    lat = build_lattice(gbm_model(), LatticeConfig(1.0, horizon, 2000))
    lattice_value = snell_stop(lat, parse("0"), parse("|x - 1|*0.5 + 0.5*x - 0.5"), 100.0)
    assert fd_value == pytest.approx(lattice_value, rel=0.01)


# ---------------------------------------------------------------------------
# coupled solves

def test_picard_single_mode_is_unconstrained():
    problem = make_problem(["x^2 + 1"], {})
    grid = build_grid(0.0, 2.0, 501)
    report = picard_solve(problem, grid)
    assert report.outer_iterations == 1
    assert report.converged and report.monotone
    op = discretize_generator(problem.model, grid, 100.0)
    np.testing.assert_array_equal(
        report.field.values[0], solve_unconstrained(op, grid.nodes ** 2 + 1))


def test_picard_symmetric_modes_never_switch():
    problem = make_problem(["1", "1"], {(0, 1): "0.1", (1, 0): "0.1"})
    report = picard_solve(problem, build_grid(0.0, 2.0, 501))
    assert report.converged
    np.testing.assert_allclose(report.field.values, 0.01, atol=1e-10)


def test_picard_example1_dominates_single_mode(ex1_picard, ex1, ex1_grid):
    # switching can only improve on staying in one mode: the discrete
    # single-mode solve is a nodewise lower bound
    op = discretize_generator(ex1.model, ex1_grid, ex1.discount_rate)
    from modeswitch.exprlang import evaluate
    for i in range(2):
        solo = solve_unconstrained(op, np.asarray(evaluate(ex1.profits[i],
                                                           ex1_grid.nodes)))
        assert np.all(ex1_picard.field.values[i] >= solo - 1e-12)
    # and the closed form x^2/96 + 0.01 holds away from the truncation
    # boundary (the boundary commits an error decaying like (x/2)^10 inward)
    x = ex1_grid.nodes
    core = slice(200, 1501)
    lower = x ** 2 / 96.0 + 0.01
    assert np.all(ex1_picard.field.values[1][core] >= lower[core] - 2e-4)


def test_penalized_single_mode_identical_for_every_penalty():
    problem = make_problem(["x^2 + 1"], {})
    grid = build_grid(0.0, 2.0, 501)
    report = penalized_solve(problem, grid)
    assert report.converged
    op = discretize_generator(problem.model, grid, 100.0)
    np.testing.assert_array_equal(
        report.field.values[0], solve_unconstrained(op, grid.nodes ** 2 + 1))


def test_penalized_symmetric_modes():
    problem = make_problem(["1", "1"], {(0, 1): "0.1", (1, 0): "0.1"})
    report = penalized_solve(problem, build_grid(0.0, 2.0, 501))
    assert report.converged
    np.testing.assert_allclose(report.field.values, 0.01, atol=1e-10)


def test_solver_rejects_invalid_problem():
    bad = make_problem(["x^2 + 1"], {}, r=3.0)  # discount dominated by growth
    with pytest.raises(ValueError):
        picard_solve(bad, build_grid(0.0, 2.0, 301))


def test_max_outer_caps_iterations():
    problem = example1_problem()
    report = picard_solve(problem, build_grid(0.0, 2.0, 301),
                          SolveConfig(max_outer=1))
    assert not report.converged
    assert report.outer_iterations == 1


# ---------------------------------------------------------------------------
# invariants on the reference problems

def test_monotone_iterates(ex1_picard, ex2_picard):
    assert ex1_picard.monotone
    assert ex2_picard.monotone


def test_obstacle_feasibility(ex2_picard, ex2):
    values = ex2_picard.field.values
    x = ex2_picard.field.grid.nodes
    from modeswitch.exprlang import evaluate
    for i in range(3):
        best = np.full_like(x, -np.inf)
        for j in range(3):
            if j != i:
                best = np.maximum(best, values[j] - evaluate(ex2.costs[i][j], x))
        assert np.all(values[i] >= best - 1e-8)


def test_sandwich_bounds(ex2_picard, ex2, ex2_grid):
    op = discretize_generator(ex2.model, ex2_grid, ex2.discount_rate)
    from modeswitch.exprlang import evaluate
    psis = np.stack([evaluate(p, ex2_grid.nodes) for p in ex2.profits])
    upper = solve_unconstrained(op, np.max(psis, axis=0))
    for i in range(3):
        lower = solve_unconstrained(op, psis[i])
        assert np.all(ex2_picard.field.values[i] >= lower - 1e-8)
        assert np.all(ex2_picard.field.values[i] <= upper + 1e-8)


def test_scheme_agreement(ex1_picard, ex1_penalized, ex2_picard, ex2_penalized):
    for picard, penalized in ((ex1_picard, ex1_penalized),
                              (ex2_picard, ex2_penalized)):
        scale = 1.0 + float(np.max(np.abs(picard.field.values)))
        gap = float(np.max(np.abs(picard.field.values - penalized.field.values)))
        assert gap <= 1e-7 * scale


def test_residual_of_converged_fields(ex1_picard, ex2_picard):
    for report in (ex1_picard, ex2_picard):
        scale = 1.0 + float(np.max(np.abs(report.field.values)))
        assert report.residual.max_complementarity < 1e-7 * scale
        assert report.residual.max_violation < 1e-9 * scale


def test_residual_flags_wrong_field(ex1, ex1_grid):
    op = discretize_generator(ex1.model, ex1_grid, ex1.discount_rate)
    zero = ValueField(np.zeros((2, ex1_grid.n_nodes)), ex1_grid)
    report = system_residual(zero, ex1, op)
    # at x = 1 the equation residual is -psi_1(1) = -1.2, dominating the min
    assert report.max_complementarity > 1.0


def test_residual_exact_constant_single_mode():
    zero = DiffusionModel.from_strings("0", "0")
    problem = make_problem(["3"], {}, model=zero)
    grid = build_grid(0.0, 2.0, 101)
    op = discretize_generator(problem.model, grid, 100.0)
    field = ValueField(np.tile(solve_unconstrained(op, np.full(101, 3.0)), (1, 1)),
                       grid)
    report = system_residual(field, problem, op)
    assert report.max_complementarity < 1e-12
    assert report.max_violation == 0.0


def test_polynomial_growth_across_nested_domains(ex1):
    sups = []
    for hi in (2.0, 4.0, 8.0):
        grid = build_grid(0.0, hi, 1001)
        report = picard_solve(ex1, grid)
        ratio = np.abs(report.field.values) / (1.0 + grid.nodes ** 2)
        sups.append(float(np.max(ratio)))
    assert max(sups) <= 1.5 * min(sups)


def test_example2_has_switching_region(ex2_picard, ex2):
    # mode 3 touches its obstacle (switch to mode 1) on the right of the domain
    values = ex2_picard.field.values
    x = ex2_picard.field.grid.nodes
    from modeswitch.exprlang import evaluate
    obstacle = np.maximum(values[0] - evaluate(ex2.costs[2][0], x),
                          values[1] - evaluate(ex2.costs[2][1], x))
    active = np.abs(values[2] - obstacle) <= 1e-8
    assert active.any()
    assert x[active].min() > 3.0  # deep in the interior, not a boundary artifact
