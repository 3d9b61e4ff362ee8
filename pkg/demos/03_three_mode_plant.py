"""Three-mode plant with a live switching region.

Modes 2 and 3 run at a loss for large x, but mode 3 can jump back to the
profitable mode 1 almost for free (cost 0.001 |x| + 0.1) while mode 2 pays
|x| + 4.  The result: for x beyond about 4 the third value function touches
its obstacle and the optimal action in mode 3 is an immediate switch to
mode 1.  This demo prints the region, plots the three curves, and verifies
the region against the complementarity slack of the solver.

Run:  python demos/03_three_mode_plant.py     (figure in demos/output/)
"""

from pathlib import Path

import numpy as np

from modeswitch import (SolveConfig, build_grid, extract_regions,
                        penalized_solve, picard_solve, parse)
from modeswitch.exprlang import evaluate
from modeswitch.problem import DiffusionModel, SwitchingProblem

OUT = Path(__file__).parent / "output"


def three_mode_problem():
    model = DiffusionModel.from_strings("x", "1.4142135623730951*x")
    g = {(0, 1): "0.5*|x| + 1", (0, 2): "x^2 + 0.5",
         (1, 0): "|x| + 4", (1, 2): "|x| + 5",
         (2, 0): "0.001*|x| + 0.1", (2, 1): "x^2 + |x| + 0.5"}
    costs = [[None] * 3 for _ in range(3)]
    for (i, j), src in g.items():
        costs[i][j] = parse(src)
    return SwitchingProblem(
        model=model,
        discount_rate=100.0,
        profits=(parse("x + 1"), parse("-x - 2"), parse("-x - 2")),
        costs=tuple(tuple(row) for row in costs),
        gamma=2,
    )


def main():
    problem = three_mode_problem()
    grid = build_grid(0.0, 5.0, 2001)

    picard = picard_solve(problem, grid, SolveConfig())
    penalized = penalized_solve(problem, grid, SolveConfig())
    print(f"fixed-point sweeps: {picard.outer_iterations}, "
          f"penalty stages: {penalized.outer_iterations}")
    print("sup-diffs per sweep:", " ".join(f"{d:.2e}" for d in picard.sup_diffs))
    print(f"scheme agreement: "
          f"{float(np.max(np.abs(picard.field.values - penalized.field.values))):.2e}")

    regions = extract_regions(picard.field, problem)
    print("\nswitch intervals (1-based modes):")
    for i, j, x_start, x_end in regions.interval_table():
        print(f"  mode {i + 1} -> mode {j + 1} on [{x_start:g}, {x_end:g}]")

    # the region is exactly where the value sits on its obstacle
    x = grid.nodes
    v = picard.field.values
    obstacle3 = np.maximum(v[0] - evaluate(problem.costs[2][0], x),
                           v[1] - evaluate(problem.costs[2][1], x))
    slack = v[2] - obstacle3
    inside = regions.actions[2] >= 0
    print(f"\nmode-3 obstacle slack: max inside region {np.max(slack[inside]):.2e}, "
          f"min outside {np.min(slack[~inside]):.2e}")

    OUT.mkdir(exist_ok=True)
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, (ax, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    for i, style in ((0, "-"), (1, "--"), (2, ":")):
        ax.plot(x, v[i], style, label=f"v{i + 1}")
    ax.set_xlabel("x")
    ax.set_ylabel("value")
    ax.set_title("Three-mode plant: value functions")
    ax.legend()
    ax2.plot(x, slack, label="v3 - obstacle")
    ax2.axhline(0.0, color="k", lw=0.5)
    ax2.set_xlabel("x")
    ax2.set_title("Mode-3 slack (zero on the switch region)")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(OUT / "three_mode_values.png", dpi=120)
    print(f"figure written to {OUT / 'three_mode_values.png'}")


if __name__ == "__main__":
    main()
