"""Strategy extraction and Monte Carlo evaluation.

Two experiments:

1. A hand-checkable two-mode problem (idle mode with zero profit, running
   mode with unit profit, cost 0.001 each way).  The optimal strategy from
   the idle mode is a single immediate switch, worth 0.010 - 0.001 = 0.009;
   the simulator must reproduce exactly one switch at t = 0 on every path.

2. The three-mode plant of demo 03, started in mode 3 at x0 = 4.5, inside
   the switching region.  Paths switch to mode 1 at once (and occasionally
   the simulation shows no further switches since mode 1 never pays to
   leave).  The Monte Carlo payoff matches the grid value at x0 within a
   few standard errors, and the decay table of the discounted switch times
   is printed.

Run:  python demos/04_strategy_monte_carlo.py
"""

import importlib
import numpy as np

from modeswitch import (build_grid, estimate_payoff, extract_regions,
                        horizon_for_tolerance, parse, picard_solve,
                        run_strategy, simulate_paths, tau_decay)
from modeswitch.problem import DiffusionModel, SwitchingProblem

three_mode = importlib.import_module("03_three_mode_plant")


def hand_dp_problem():
    model = DiffusionModel.from_strings("x", "1.4142135623730951*x")
    return SwitchingProblem(
        model=model, discount_rate=100.0,
        profits=(parse("0"), parse("1")),
        costs=((None, parse("0.001")), (parse("0.001"), None)),
        gamma=2)


def show(problem, grid, x0, start_mode, n_paths, seed):
    report = picard_solve(problem, grid)
    regions = extract_regions(report.field, problem)
    horizon = horizon_for_tolerance(problem, x0, 1e-8)
    paths = simulate_paths(problem.model, x0, 1e-4, horizon, n_paths, seed)
    stats = run_strategy(paths, regions, problem, start_mode)
    estimate = estimate_payoff(stats, problem)
    value = report.field.at(start_mode, x0)
    print(f"  grid value v{start_mode + 1}({x0:g}) = {value:.6f}")
    print(f"  Monte Carlo payoff    = {estimate.mean:.6f} "
          f"+- {estimate.std_error:.1e} ({n_paths} paths)")
    print(f"  switches per path     : mean {float(np.mean(stats.switch_counts)):.3f}, "
          f"max {int(np.max(stats.switch_counts))}")
    print(f"  clamped lookups       : {stats.clamp_fraction:.2%}")
    rows = [row for row in tau_decay(stats, n_max=10) if row[1] > 0]
    if rows:
        print("  discounted switch-time decay:")
        print("     n   mean e^(-r tau_n)   n * mean")
        for n, mean, scaled in rows:
            print(f"    {n:2d}   {mean:17.6g}   {scaled:.6g}")
    return stats


def main():
    print("hand-checkable two-mode problem (expected value 0.009, one switch)")
    problem = hand_dp_problem()
    stats = show(problem, build_grid(0.0, 2.0, 401), x0=1.0, start_mode=0,
                 n_paths=20_000, seed=99)
    assert int(np.max(stats.switch_counts)) == 1

    print("\nthree-mode plant started inside the switching region")
    show(three_mode.three_mode_problem(), build_grid(0.0, 5.0, 2001),
         x0=4.5, start_mode=2, n_paths=20_000, seed=7)


if __name__ == "__main__":
    main()
