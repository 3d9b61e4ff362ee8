"""Closed-form sanity checks for the grid solver and the lattice.

Every identity here is computable by hand, which makes this the place to
start when something looks off:

* constant profit c        ->  v = c / r             (pure discounting)
* linear profit x, GBM     ->  v = x / (r - b1)
* quadratic profit x^2     ->  v = x^2 / (r - 2 b1 - s1^2)
* stop reward max(x-1, 0)  ->  perpetual-option formula with exponent
                               beta solving beta^2 = r / (s1^2 / 2)

Run:  python demos/01_closed_form_checks.py
"""

import numpy as np

from modeswitch import (Boundary, DiffusionModel, LatticeConfig, build_grid,
                        build_lattice, discretize_generator,
                        horizon_for_tolerance, parse, snell_stop,
                        solve_obstacle, solve_unconstrained)
from modeswitch.problem import SwitchingProblem

R = 100.0
GBM = DiffusionModel.from_strings("x", "1.4142135623730951*x")  # drift x, vol sqrt(2) x


def check(label, got, want, rel_tol):
    rel = abs(got - want) / max(abs(want), 1e-300)
    flag = "ok " if rel <= rel_tol else "BAD"
    print(f"  [{flag}] {label:42s} got {got:.8g}  expected {want:.8g}  rel {rel:.2e}")


def main():
    print("constant profit on three different grids")
    for grid in (build_grid(-3.0, 7.0, 501),
                 build_grid(0.0, 2.0, 2001),
                 build_grid(0.1, 10.0, 301, "logarithmic")):
        op = discretize_generator(GBM, grid, R)
        v = solve_unconstrained(op, np.ones(grid.n_nodes))
        check(f"psi = 1 on [{grid.x_min:g}, {grid.x_max:g}]",
              float(v[grid.n_nodes // 2]), 1.0 / R, 1e-10)

    print("\nlinear and quadratic profits on [0, 4] (2001 nodes)")
    grid = build_grid(0.0, 4.0, 2001)
    op = discretize_generator(GBM, grid, R)
    v = solve_unconstrained(op, grid.nodes.copy())
    check("psi = x, value at x = 2", float(np.interp(2.0, grid.nodes, v)),
          2.0 / 99.0, 1e-4)
    # the quadratic check pins the ends to the known ansatz so only the
    # interior scheme is being measured
    ansatz = parse("0.010416666666666666*x^2")  # x^2 / 96
    op_d = discretize_generator(GBM, grid, R, Boundary("dirichlet", ansatz, ansatz))
    v = solve_unconstrained(op_d, grid.nodes ** 2)
    check("psi = x^2, value at x = 2", float(np.interp(2.0, grid.nodes, v)),
          4.0 / 96.0, 1e-4)

    print("\nperpetual stopping option, reward max(x - 1, 0)")
    # value-matching/smooth-pasting: boundary at 10/9, value (1/9)(9/10)^10 at x=1
    reward = np.maximum(grid.nodes - 1.0, 0.0)
    result = solve_obstacle(op, np.zeros(grid.n_nodes), reward)
    closed = (1.0 / 9.0) * (9.0 / 10.0) ** 10
    check("grid solve at x = 1",
          float(np.interp(1.0, grid.nodes, result.values)), closed, 5e-3)

    problem = SwitchingProblem(model=GBM, discount_rate=R,
                               profits=(parse("x^2"),), costs=((None,),), gamma=2)
    horizon = horizon_for_tolerance(problem, 1.0, 1e-8)
    lat = build_lattice(GBM, LatticeConfig(1.0, horizon, 2000))
    lattice_value = snell_stop(lat, parse("0"),
                               parse("0.5*|x - 1| + 0.5*x - 0.5"), R)
    check("lattice stopping value at x = 1", lattice_value, closed, 5e-3)

    print("\nlattice annuity (psi = 1): truncation plus one-sided quadrature")
    one = SwitchingProblem(model=GBM, discount_rate=R,
                           profits=(parse("1"),), costs=((None,),), gamma=2)
    from modeswitch import switching_dp
    values = switching_dp(build_lattice(GBM, LatticeConfig(1.0, horizon, 2000)), one)
    check("annuity at the root", values.root_value(0), 1.0 / R, 1e-2)


if __name__ == "__main__":
    main()
