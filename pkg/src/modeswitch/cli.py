"""Pipeline orchestration and the ``modeswitch`` command line tool.

``modeswitch run <config> [--out DIR] [--scheme ...] [--seed N]`` executes
validate -> solve -> residual check -> optional lattice cross-check ->
optional strategy simulation, and writes:

* ``values.csv``   - x, one value column per mode, one best-target column
  per mode (0 = continue, otherwise the 1-based target mode);
* ``regions.csv``  - maximal switch intervals per (from, to) pair;
* ``report.txt``   - validation summary, iteration counts, residual norms,
  oracle deltas, strategy payoff vs value, clamp fraction;
* ``status``       - single line OK | VALIDATION | NONCONVERGED | CHECKFAIL;
* ``plot.gp``      - optional gnuplot script referencing values.csv.

Exit codes: 0 success, 2 validation failure, 3 non-convergence, 4 check
failure (residual, cross-scheme, oracle or strategy outside tolerance).
Artifacts computed before a failure are still written.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import exprlang
from .config import ConfigError, RunSpec, load_config
from .fd_solver import (Boundary, SolveConfig, build_grid, penalized_solve,
                        picard_solve)
from .lattice import LatticeConfig, build_lattice, horizon_for_tolerance, switching_dp
from .problem import DiffusionModel, SwitchingProblem, validate
from .strategy import estimate_payoff, extract_regions, run_strategy, simulate_paths, tau_decay

__all__ = ["build_problem", "run", "export_csv", "main"]

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NONCONVERGED = 3
EXIT_CHECKFAIL = 4

# check thresholds, scaled by (1 + sup |v|)
RESIDUAL_REL_TOL = 1e-6
VIOLATION_REL_TOL = 1e-8
SCHEME_AGREEMENT_FACTOR = 10.0  # times outer_tol
CLAMP_WARN_FRACTION = 0.01


def build_problem(spec: RunSpec) -> SwitchingProblem:
    m = spec.n_modes
    profits = tuple(exprlang.parse(p) for p in spec.psi)
    costs = [[None] * m for _ in range(m)]
    for (i, j), src in spec.cost.items():
        costs[i][j] = exprlang.parse(src)
    gamma = spec.gamma
    if gamma is None:
        gamma = SwitchingProblem.default_gamma(profits)
    model = DiffusionModel.from_strings(spec.drift, spec.vol)
    return SwitchingProblem(model=model, discount_rate=spec.r,
                            profits=profits, costs=tuple(tuple(row) for row in costs),
                            gamma=gamma)


def _solve_config(spec: RunSpec) -> SolveConfig:
    if spec.boundary == "dirichlet":
        boundary = Boundary("dirichlet", exprlang.parse(spec.dirichlet_lo),
                            exprlang.parse(spec.dirichlet_hi))
    else:
        boundary = Boundary()
    return SolveConfig(outer_tol=spec.outer_tol, max_outer=spec.max_outer,
                       max_policy_iters=spec.max_policy_iters,
                       penalty_schedule=tuple(spec.penalty_schedule),
                       boundary=boundary)


def _fmt(v: float) -> str:
    return f"{v:.12g}"


def export_csv(field, regions, grid, directory: Path):
    """Write values.csv and regions.csv (12 significant digits, grid order)."""
    m = field.n_modes
    values_path = directory / "values.csv"
    header = ["x"] + [f"v{i + 1}" for i in range(m)] \
        + [f"best_target_{i + 1}" for i in range(m)]
    lines = [",".join(header)]
    for k, x in enumerate(grid.nodes):
        row = [_fmt(x)]
        row += [_fmt(field.values[i, k]) for i in range(m)]
        row += [str(int(regions.actions[i, k]) + 1 if regions.actions[i, k] >= 0 else 0)
                for i in range(m)]
        lines.append(",".join(row))
    values_path.write_text("\n".join(lines) + "\n")

    regions_path = directory / "regions.csv"
    lines = ["from_mode,to_mode,x_start,x_end"]
    for (i, j, x_start, x_end) in regions.interval_table():
        lines.append(f"{i + 1},{j + 1},{_fmt(x_start)},{_fmt(x_end)}")
    regions_path.write_text("\n".join(lines) + "\n")


def _write_plot_script(directory: Path, m: int):
    lines = [
        "# gnuplot script for the value curves",
        'set datafile separator ","',
        "set key left top",
        'set xlabel "x"',
        'set ylabel "value"',
    ]
    plots = [f'"values.csv" using 1:{i + 2} with lines title "v{i + 1}"'
             for i in range(m)]
    lines.append("plot " + ", \\\n     ".join(plots))
    (directory / "plot.gp").write_text("\n".join(lines) + "\n")


class _Report:
    def __init__(self):
        self.lines = []

    def add(self, text=""):
        self.lines.append(text)

    def write(self, directory: Path):
        (directory / "report.txt").write_text("\n".join(self.lines) + "\n")


def _finish(directory: Path, report: _Report, status: str, code: int) -> int:
    report.add()
    report.add(f"status: {status}")
    report.write(directory)
    (directory / "status").write_text(status + "\n")
    return code


def run(spec: RunSpec, out_dir=None) -> int:
    """Execute the full pipeline; returns the process exit code."""
    directory = Path(out_dir if out_dir is not None
                     else (spec.output_directory or "."))
    directory.mkdir(parents=True, exist_ok=True)
    report = _Report()
    report.add("modeswitch run report")
    report.add("=====================")

    problem = build_problem(spec)
    m = problem.n_modes
    report.add(f"modes: {m}   discount rate: {spec.r:g}   "
               f"growth exponent: {problem.gamma}")
    report.add(f"grid: [{spec.x_min:g}, {spec.x_max:g}], {spec.n_nodes} nodes, "
               f"{spec.spacing}")

    # 1. validation gate
    vr = validate(problem, spec.x_min, spec.x_max)
    report.add()
    report.add("validation")
    report.add(f"  H1 (affine-growth coefficients): {'ok' if vr.h1_ok else 'FAILED'}")
    report.add(f"  H2 (positive switching costs)  : {'ok' if vr.h2_ok else 'FAILED'}"
               f"   sampled cost range [{vr.cost_min:g}, {vr.cost_max:g}]")
    report.add(f"  H3 (profit growth <= gamma)    : {'ok' if vr.h3_ok else 'FAILED'}")
    report.add(f"  H4 (discount dominance)        : {'ok' if vr.h4_ok else 'FAILED'}")
    for q, c in vr.moment_exponents:
        report.add(f"    moment exponent C_{q} = {c:g} (discount rate {spec.r:g})")
    for msg in vr.messages:
        report.add(f"  note: {msg}")
    if not vr.all_ok:
        return _finish(directory, report, "VALIDATION", EXIT_VALIDATION)

    # 2. solve
    grid = build_grid(spec.x_min, spec.x_max, spec.n_nodes, spec.spacing)
    cfg = _solve_config(spec)
    reports = {}
    report.add()
    report.add("solver")
    for scheme in (("picard", "penalized") if spec.scheme == "both" else (spec.scheme,)):
        solver = picard_solve if scheme == "picard" else penalized_solve
        sr = solver(problem, grid, cfg)
        reports[scheme] = sr
        report.add(f"  {scheme}: outer iterations {sr.outer_iterations}, "
                   f"converged {sr.converged}, monotone {sr.monotone}")
        if sr.sup_diffs:
            report.add(f"    sup-diffs per sweep: "
                       + " ".join(f"{d:.3e}" for d in sr.sup_diffs))
        if not sr.converged:
            # keep whatever was computed: the last iterate is still a field
            partial = (reports.get("picard") or sr).field
            export_csv(partial, extract_regions(partial, problem), grid, directory)
            return _finish(directory, report, "NONCONVERGED", EXIT_NONCONVERGED)

    primary = reports.get("picard") or reports[spec.scheme]
    field = primary.field
    regions = extract_regions(field, problem)
    export_csv(field, regions, grid, directory)
    if spec.emit_plots:
        _write_plot_script(directory, m)

    checks_ok = True

    # 3. residual checks
    scale = 1.0 + float(np.max(np.abs(field.values)))
    report.add()
    report.add("complementarity residuals (interior nodes)")
    for scheme, sr in reports.items():
        comp = sr.residual.max_complementarity
        viol = sr.residual.max_violation
        ok = (comp < RESIDUAL_REL_TOL * scale) and (viol < VIOLATION_REL_TOL * scale)
        checks_ok &= ok
        report.add(f"  {scheme}: residual {comp:.3e} (tol {RESIDUAL_REL_TOL * scale:.3e}), "
                   f"obstacle violation {viol:.3e} (tol {VIOLATION_REL_TOL * scale:.3e})"
                   f" -> {'ok' if ok else 'FAILED'}")

    if len(reports) == 2:
        gap = float(np.max(np.abs(reports["picard"].field.values
                                  - reports["penalized"].field.values)))
        agree_tol = SCHEME_AGREEMENT_FACTOR * spec.outer_tol * scale
        ok = gap <= agree_tol
        checks_ok &= ok
        report.add(f"  scheme agreement: sup gap {gap:.3e} (tol {agree_tol:.3e})"
                   f" -> {'ok' if ok else 'FAILED'}")

    # 4. lattice oracle probes
    if spec.oracle_enabled:
        eps = spec.oracle_eps if spec.oracle_eps is not None else spec.outer_tol
        report.add()
        report.add(f"lattice oracle (eps {eps:g}, n_steps {spec.oracle_n_steps}, "
                   f"tail constant {spec.oracle_tail_constant:g})")
        for x0 in spec.oracle_probes:
            horizon = horizon_for_tolerance(problem, x0, eps,
                                            spec.oracle_tail_constant)
            lat = build_lattice(problem.model,
                                LatticeConfig(x0, horizon, spec.oracle_n_steps,
                                              spec.oracle_tail_constant))
            lv = switching_dp(lat, problem)
            for i in range(m):
                fd_val = field.at(i, x0)
                lat_val = lv.root_value(i)
                rel = abs(lat_val - fd_val) / max(abs(fd_val), 1e-300)
                ok = rel <= spec.oracle_rel_tol
                checks_ok &= ok
                report.add(f"  x0={x0:g} mode {i + 1}: fd {fd_val:.6g}, "
                           f"lattice {lat_val:.6g}, rel delta {rel:.3e}"
                           f" -> {'ok' if ok else 'FAILED'}")

    # 5. strategy simulation
    if spec.strategy_enabled:
        eps = spec.oracle_eps if spec.oracle_eps is not None else spec.outer_tol
        horizon = horizon_for_tolerance(problem, spec.strategy_x0, eps,
                                        spec.oracle_tail_constant)
        paths = simulate_paths(problem.model, spec.strategy_x0, spec.strategy_dt,
                               horizon, spec.strategy_n_paths, spec.strategy_seed)
        stats = run_strategy(paths, regions, problem, spec.strategy_start_mode)
        estimate = estimate_payoff(stats, problem)
        value = field.at(spec.strategy_start_mode, spec.strategy_x0)
        allowance = 3.0 * estimate.std_error + spec.strategy_allowance * abs(value)
        gap = abs(estimate.mean - value)
        ok = gap <= allowance
        checks_ok &= ok
        report.add()
        report.add(f"strategy simulation (x0 {spec.strategy_x0:g}, start mode "
                   f"{spec.strategy_start_mode + 1}, {spec.strategy_n_paths} paths, "
                   f"dt {spec.strategy_dt:g}, horizon {horizon:.6g}, "
                   f"seed {spec.strategy_seed})")
        report.add(f"  payoff {estimate.mean:.6g} +- {estimate.std_error:.2e} (std err), "
                   f"value {value:.6g}, |gap| {gap:.3e} (tol {allowance:.3e})"
                   f" -> {'ok' if ok else 'FAILED'}")
        report.add(f"  mean switches per path: "
                   f"{float(np.mean(stats.switch_counts)):.4g}")
        report.add(f"  clamp fraction: {stats.clamp_fraction:.4g}"
                   + ("  WARNING: above 1%, consider enlarging the domain"
                      if stats.clamp_fraction > CLAMP_WARN_FRACTION else ""))
        decay = tau_decay(stats, n_max=20)
        if any(row[1] > 0 for row in decay):
            report.add("  switch-time decay (n, mean e^{-r tau_n}, n * mean):")
            for n, mean, scaled in decay:
                if mean > 0:
                    report.add(f"    {n:2d}  {mean:.6g}  {scaled:.6g}")

    if not checks_ok:
        return _finish(directory, report, "CHECKFAIL", EXIT_CHECKFAIL)
    return _finish(directory, report, "OK", EXIT_OK)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="modeswitch",
        description="Solve multi-mode switching problems on a 1-D diffusion.")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run the pipeline described by a config file")
    run_p.add_argument("config", help="path to the run configuration file")
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--scheme", default=None,
                       choices=["picard", "penalized", "both"],
                       help="override the solver scheme")
    run_p.add_argument("--seed", default=None, type=int,
                       help="override the strategy simulation seed")
    args = parser.parse_args(argv)

    try:
        spec = load_config(args.config)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    overrides = {}
    if args.scheme is not None:
        overrides["scheme"] = args.scheme
    if args.seed is not None:
        overrides["strategy_seed"] = args.seed
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    return run(spec, out_dir=args.out)


if __name__ == "__main__":
    sys.exit(main())
