"""Solver suite for infinite-horizon multi-mode switching on a 1-D diffusion.

The package computes the coupled value functions of an m-mode switching
problem (running profits per mode, strictly positive switching costs,
discounted at rate r) by a monotone finite-difference scheme and a penalty
scheme, cross-validates them against a trinomial-lattice dynamic program,
extracts the switching regions, and evaluates the induced strategy by
Monte Carlo simulation.
"""

from .exprlang import ParseError, evaluate, growth_degree, parse, to_source
from .problem import (DiffusionModel, SwitchingProblem, ValidationReport,
                      cost_value, moment_exponent, psi_value, validate)
from .fd_solver import (Boundary, Grid, ObstacleResult, ResidualReport,
                        SolveConfig, SolveReport, TridiagOperator, ValueField,
                        build_grid, discretize_generator, penalized_solve,
                        picard_solve, solve_obstacle, solve_unconstrained,
                        system_residual)
from .lattice import (Lattice, LatticeConfig, LatticeValues, build_lattice,
                      horizon_for_tolerance, snell_stop, switching_dp)
from .strategy import (PathSet, PayoffEstimate, StrategyStats, SwitchingRegions,
                       estimate_payoff, extract_regions, run_strategy,
                       simulate_paths, tau_decay)
from .config import ConfigError, RunSpec, load_config, parse_config_text
from .cli import build_problem, export_csv, run

__version__ = "0.1.0"
