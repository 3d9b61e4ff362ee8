"""Two-mode plant, end to end through the library API.

Builds the two-mode problem (quadratic profits, kinked costs, geometric
dynamics, r = 100), machine-checks the standing assumptions, solves the
coupled system with both schemes, cross-checks a few spots against the
lattice oracle and draws the two value curves.

On this domain the costs are so large relative to the value spread that
switching never pays: both value functions coincide with their single-mode
values and the switching regions are empty.  See demo 03 for a problem
with a live switching region.

Run:  python demos/02_two_mode_plant.py      (figure in demos/output/)
"""

from pathlib import Path

import numpy as np

from modeswitch import (LatticeConfig, SolveConfig, build_grid, build_lattice,
                        extract_regions, horizon_for_tolerance, parse,
                        penalized_solve, picard_solve, switching_dp, validate)
from modeswitch.problem import DiffusionModel, SwitchingProblem

OUT = Path(__file__).parent / "output"


def two_mode_problem():
    model = DiffusionModel.from_strings("x", "1.4142135623730951*x")
    return SwitchingProblem(
        model=model,
        discount_rate=100.0,
        profits=(parse("0.5*x^2 - 0.3*x + 1"), parse("x^2 + 1")),
        costs=((None, parse("0.5*|x| + 0.1")),
               (parse("|x| + 0.48"), None)),
        gamma=2,
    )


def main():
    problem = two_mode_problem()
    grid = build_grid(0.0, 2.0, 2001)

    report = validate(problem, grid.x_min, grid.x_max)
    print("assumption checks:",
          f"H1={report.h1_ok} H2={report.h2_ok} H3={report.h3_ok} H4={report.h4_ok}")
    for q, c in report.moment_exponents:
        print(f"  moment exponent C_{q} = {c:g} vs discount rate 100")

    picard = picard_solve(problem, grid, SolveConfig())
    penalized = penalized_solve(problem, grid, SolveConfig())
    gap = float(np.max(np.abs(picard.field.values - penalized.field.values)))
    print(f"\nfixed-point scheme : {picard.outer_iterations} outer iterations, "
          f"monotone={picard.monotone}")
    print(f"penalty scheme     : {penalized.outer_iterations} stages")
    print(f"scheme agreement   : sup gap {gap:.2e}")
    print(f"residuals          : {picard.residual.max_complementarity:.2e} "
          f"(complementarity), {picard.residual.max_violation:.2e} (violation)")

    regions = extract_regions(picard.field, problem)
    table = regions.interval_table()
    print(f"switching regions  : {table if table else 'empty (costs dominate)'}")

    print("\nlattice cross-check (independent discretization):")
    for x0 in (0.5, 1.0, 1.5):
        horizon = horizon_for_tolerance(problem, x0, 1e-8)
        lat = build_lattice(problem.model, LatticeConfig(x0, horizon, 2000))
        tree = switching_dp(lat, problem)
        for i in range(2):
            fd = picard.field.at(i, x0)
            rel = abs(tree.root_value(i) - fd) / fd
            print(f"  x0={x0:3.1f} mode {i + 1}: grid {fd:.6f}  "
                  f"tree {tree.root_value(i):.6f}  rel {rel:.2e}")

    OUT.mkdir(exist_ok=True)
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(grid.nodes, picard.field.values[0], label="v1 (mode 1)")
    ax.plot(grid.nodes, picard.field.values[1], label="v2 (mode 2)")
    ax.set_xlabel("x")
    ax.set_ylabel("value")
    ax.set_title("Two-mode plant: value functions")
    ax.legend()
    fig.tight_layout()
    fig.savefig(OUT / "two_mode_values.png", dpi=120)
    print(f"\nfigure written to {OUT / 'two_mode_values.png'}")


if __name__ == "__main__":
    main()
