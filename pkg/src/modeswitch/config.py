"""Run configuration: sectioned key = value files parsed into a RunSpec.

Format (documented in the README): dotted section headers in brackets,
``key = value`` pairs, ``#`` comments.  Values are numbers, booleans
(``true``/``false``), bare words, or double-quoted strings (used for all
expressions).  Newlines are not significant: a line may carry a header and
several pairs.  Parsing is fail-closed: unknown sections or keys, duplicate
keys, missing required keys and malformed expressions are all errors.

Example::

    [problem]  r = 100  gamma = 2
    [model]    b = "x"  sigma = "1.4142135623730951*x"
    [mode.1]   psi = "0.5*x^2 - 0.3*x + 1"
    [mode.2]   psi = "x^2 + 1"
    [cost.1.2] g = "0.5*|x| + 0.1"
    [cost.2.1] g = "|x| + 0.48"
    [grid]     x_min = 0  x_max = 2  n_nodes = 2001  spacing = "uniform"
    [solver]   scheme = "both"  outer_tol = 1e-8

Mode numbers in section names are 1-based, as are the mode columns of the
emitted CSV files; the Python API is 0-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import exprlang
from .fd_solver import DEFAULT_PENALTY_SCHEDULE

__all__ = ["ConfigError", "RunSpec", "load_config", "parse_config_text"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunSpec:
    """Everything one pipeline run needs, as parsed (expressions as text)."""

    r: float
    gamma: Optional[int]
    drift: str
    vol: str
    psi: tuple                  # m expression strings
    cost: dict                  # (i, j) 0-based -> expression string
    x_min: float
    x_max: float
    n_nodes: int
    spacing: str = "uniform"
    scheme: str = "both"
    outer_tol: float = 1e-8
    max_outer: int = 500
    max_policy_iters: int = 200
    penalty_schedule: tuple = DEFAULT_PENALTY_SCHEDULE
    boundary: str = "zero-curvature"
    dirichlet_lo: Optional[str] = None
    dirichlet_hi: Optional[str] = None
    oracle_enabled: bool = False
    oracle_eps: Optional[float] = None
    oracle_n_steps: int = 2000
    oracle_probes: tuple = ()
    oracle_tail_constant: float = 1.0
    oracle_rel_tol: float = 0.02
    strategy_enabled: bool = False
    strategy_x0: Optional[float] = None
    strategy_start_mode: int = 0
    strategy_n_paths: int = 100_000
    strategy_dt: float = 1e-4
    strategy_seed: int = 0
    strategy_allowance: float = 0.01
    output_directory: Optional[str] = None
    emit_plots: bool = False

    @property
    def n_modes(self) -> int:
        return len(self.psi)


# ---------------------------------------------------------------------------
# tokenizer / raw parse

def _tokenize(text: str):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c == "[":
            j = text.find("]", i)
            if j < 0:
                raise ConfigError(f"unterminated section header at offset {i}")
            tokens.append(("section", text[i + 1:j].strip(), i))
            i = j + 1
            continue
        if c == "=":
            tokens.append(("equals", "=", i))
            i += 1
            continue
        if c == '"':
            j = text.find('"', i + 1)
            if j < 0:
                raise ConfigError(f"unterminated string at offset {i}")
            tokens.append(("string", text[i + 1:j], i))
            i = j + 1
            continue
        j = i
        while j < n and text[j] not in ' \t\r\n#[]="':
            j += 1
        tokens.append(("atom", text[i:j], i))
        i = j
    return tokens


def _raw_entries(text: str):
    """Yield ((section, key), value_token) in file order; duplicates rejected."""
    tokens = _tokenize(text)
    entries = {}
    section = None
    i = 0
    while i < len(tokens):
        kind, value, offset = tokens[i]
        if kind == "section":
            section = value
            i += 1
            continue
        if kind != "atom":
            raise ConfigError(f"expected a key at offset {offset}, got {value!r}")
        if section is None:
            raise ConfigError(f"key {value!r} before any [section] (offset {offset})")
        if i + 2 >= len(tokens) or tokens[i + 1][0] != "equals":
            raise ConfigError(f"expected '=' after key {value!r} (offset {offset})")
        vkind, vval, voff = tokens[i + 2]
        if vkind not in ("atom", "string"):
            raise ConfigError(f"expected a value for key {value!r} (offset {voff})")
        full = (section, value)
        if full in entries:
            raise ConfigError(f"duplicate key {section}.{value}")
        entries[full] = (vkind, vval)
        i += 3
    return entries


# ---------------------------------------------------------------------------
# schema

def _as_float(section, key, v):
    kind, val = v
    try:
        return float(val)
    except ValueError:
        raise ConfigError(f"{section}.{key}: expected a number, got {val!r}") from None


def _as_int(section, key, v):
    f = _as_float(section, key, v)
    if f != int(f):
        raise ConfigError(f"{section}.{key}: expected an integer, got {v[1]!r}")
    return int(f)


def _as_bool(section, key, v):
    kind, val = v
    low = val.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"{section}.{key}: expected true/false, got {val!r}")


def _as_expr_string(section, key, v):
    kind, val = v
    try:
        exprlang.parse(val)
    except exprlang.ParseError as exc:
        raise ConfigError(f"{section}.{key}: bad expression {val!r}: {exc}") from None
    return val


def _as_string(section, key, v, allowed=None):
    val = v[1]
    if allowed is not None and val not in allowed:
        raise ConfigError(f"{section}.{key}: expected one of {sorted(allowed)}, got {val!r}")
    return val


def _as_float_list(section, key, v):
    parts = [p for p in v[1].split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"{section}.{key}: expected a comma-separated list of numbers")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{section}.{key}: expected numbers, got {v[1]!r}") from None


_MISSING = object()


def parse_config_text(text: str) -> RunSpec:
    entries = _raw_entries(text)
    taken = set()

    def pick(section, key, conv, default=_MISSING, **kw):
        full = (section, key)
        taken.add(full)
        if full not in entries:
            if default is _MISSING:
                raise ConfigError(f"missing required key {section}.{key}")
            return default
        return conv(section, key, entries[full], **kw)

    # modes and costs are discovered from section names
    mode_ids = set()
    cost_ids = set()
    for section, key in entries:
        parts = section.split(".")
        if parts[0] == "mode":
            if len(parts) != 2 or not parts[1].isdigit():
                raise ConfigError(f"bad mode section [{section}]")
            mode_ids.add(int(parts[1]))
        elif parts[0] == "cost":
            if len(parts) != 3 or not (parts[1].isdigit() and parts[2].isdigit()):
                raise ConfigError(f"bad cost section [{section}]")
            cost_ids.add((int(parts[1]), int(parts[2])))
        elif parts[0] not in ("problem", "model", "grid", "solver", "oracle",
                              "strategy", "output"):
            raise ConfigError(f"unknown section [{section}]")

    if not mode_ids:
        raise ConfigError("no [mode.N] sections found")
    m = max(mode_ids)
    if mode_ids != set(range(1, m + 1)):
        raise ConfigError(f"mode sections must be numbered 1..{m} without gaps")

    psi = tuple(pick(f"mode.{k}", "psi", _as_expr_string) for k in range(1, m + 1))

    cost = {}
    for (ci, cj) in sorted(cost_ids):
        if ci == cj:
            raise ConfigError(f"[cost.{ci}.{cj}]: diagonal switching cost is not allowed")
        if not (1 <= ci <= m and 1 <= cj <= m):
            raise ConfigError(f"[cost.{ci}.{cj}]: mode index out of range 1..{m}")
        cost[(ci - 1, cj - 1)] = pick(f"cost.{ci}.{cj}", "g", _as_expr_string)
    if m >= 2:
        for i in range(1, m + 1):
            for j in range(1, m + 1):
                if i != j and (i - 1, j - 1) not in cost:
                    raise ConfigError(f"missing section [cost.{i}.{j}]")

    spec = RunSpec(
        r=pick("problem", "r", _as_float),
        gamma=pick("problem", "gamma", _as_int, default=None),
        drift=pick("model", "b", _as_expr_string),
        vol=pick("model", "sigma", _as_expr_string),
        psi=psi,
        cost=cost,
        x_min=pick("grid", "x_min", _as_float),
        x_max=pick("grid", "x_max", _as_float),
        n_nodes=pick("grid", "n_nodes", _as_int),
        spacing=pick("grid", "spacing", _as_string, default="uniform",
                     allowed={"uniform", "logarithmic"}),
        scheme=pick("solver", "scheme", _as_string, default="both",
                    allowed={"picard", "penalized", "both"}),
        outer_tol=pick("solver", "outer_tol", _as_float, default=1e-8),
        max_outer=pick("solver", "max_outer", _as_int, default=500),
        max_policy_iters=pick("solver", "max_policy_iters", _as_int, default=200),
        penalty_schedule=pick("solver", "penalty_schedule", _as_float_list,
                              default=DEFAULT_PENALTY_SCHEDULE),
        boundary=pick("solver", "boundary", _as_string, default="zero-curvature",
                      allowed={"zero-curvature", "dirichlet"}),
        dirichlet_lo=pick("solver", "dirichlet_lo", _as_expr_string, default=None),
        dirichlet_hi=pick("solver", "dirichlet_hi", _as_expr_string, default=None),
        oracle_enabled=pick("oracle", "enabled", _as_bool, default=False),
        oracle_eps=pick("oracle", "eps", _as_float, default=None),
        oracle_n_steps=pick("oracle", "n_steps", _as_int, default=2000),
        oracle_probes=pick("oracle", "probes", _as_float_list, default=()),
        oracle_tail_constant=pick("oracle", "tail_constant", _as_float, default=1.0),
        oracle_rel_tol=pick("oracle", "rel_tol", _as_float, default=0.02),
        strategy_enabled=pick("strategy", "enabled", _as_bool, default=False),
        strategy_x0=pick("strategy", "x0", _as_float, default=None),
        strategy_start_mode=pick("strategy", "start_mode", _as_int, default=1) - 1,
        strategy_n_paths=pick("strategy", "n_paths", _as_int, default=100_000),
        strategy_dt=pick("strategy", "dt", _as_float, default=1e-4),
        strategy_seed=pick("strategy", "seed", _as_int, default=0),
        strategy_allowance=pick("strategy", "allowance", _as_float, default=0.01),
        output_directory=pick("output", "directory", _as_string, default=None),
        emit_plots=pick("output", "emit_plots", _as_bool, default=False),
    )

    unknown = [f"{s}.{k}" for (s, k) in entries if (s, k) not in taken]
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")

    _cross_validate(spec)
    return spec


def _cross_validate(spec: RunSpec):
    if spec.x_min >= spec.x_max:
        raise ConfigError("grid.x_min must be < grid.x_max")
    if spec.n_nodes < 3:
        raise ConfigError("grid.n_nodes must be at least 3")
    if spec.r <= 0:
        raise ConfigError("problem.r must be positive")
    if spec.boundary == "dirichlet" and (spec.dirichlet_lo is None
                                         or spec.dirichlet_hi is None):
        raise ConfigError("dirichlet boundary needs solver.dirichlet_lo and "
                          "solver.dirichlet_hi")
    if spec.oracle_enabled and not spec.oracle_probes:
        raise ConfigError("oracle.probes is required when the oracle is enabled")
    if spec.strategy_enabled:
        if spec.strategy_x0 is None:
            raise ConfigError("strategy.x0 is required when the strategy is enabled")
        if not 0 <= spec.strategy_start_mode < spec.n_modes:
            raise ConfigError("strategy.start_mode out of range")
        if not 0 <= spec.strategy_seed < 2 ** 63:
            raise ConfigError("strategy.seed must be a non-negative 63-bit integer")


def load_config(path) -> RunSpec:
    """Parse the config file at ``path`` into a RunSpec (fail-closed)."""
    return parse_config_text(Path(path).read_text())
