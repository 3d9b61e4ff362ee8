import pytest

from modeswitch import (ConfigError, build_grid, parse_config_text,
                        picard_solve)
from modeswitch.cli import (EXIT_CHECKFAIL, EXIT_NONCONVERGED, EXIT_OK,
                            EXIT_VALIDATION, build_problem, export_csv, main)
from modeswitch.strategy import extract_regions

from conftest import EXAMPLE1_CONFIG, EXAMPLE2_CONFIG, make_problem


# ---------------------------------------------------------------------------
# config parsing

def test_example1_config_parses():
    spec = parse_config_text(EXAMPLE1_CONFIG)
    assert spec.n_modes == 2
    assert spec.r == 100.0
    assert spec.gamma == 2
    assert spec.cost[(0, 1)] == "0.5*|x| + 0.1"
    assert spec.scheme == "both"
    assert spec.outer_tol == 1e-8


def test_example2_config_parses():
    spec = parse_config_text(EXAMPLE2_CONFIG)
    assert spec.n_modes == 3
    assert len(spec.cost) == 6


def test_missing_sigma_names_the_key():
    broken = EXAMPLE1_CONFIG.replace('sigma = "1.4142135623730951*x"', "")
    with pytest.raises(ConfigError, match="model.sigma"):
        parse_config_text(broken)


def test_diagonal_cost_rejected():
    with pytest.raises(ConfigError, match="diagonal"):
        parse_config_text(EXAMPLE1_CONFIG + '\n[cost.1.1] g = "1"\n')


def test_unknown_key_fails_closed():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text(EXAMPLE1_CONFIG + "\n[solver] fancy_mode = 3\n")


def test_unknown_section_fails_closed():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config_text(EXAMPLE1_CONFIG + "\n[extras] a = 1\n")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text(EXAMPLE1_CONFIG + "\n[problem] r = 50\n")


def test_missing_cost_pair_rejected():
    broken = EXAMPLE1_CONFIG.replace('[cost.2.1] g = "|x| + 0.48"', "")
    with pytest.raises(ConfigError, match="cost.2.1"):
        parse_config_text(broken)


def test_bad_expression_carries_offset():
    broken = EXAMPLE1_CONFIG.replace('"x^2 + 1"', '"x^2 +"')
    with pytest.raises(ConfigError, match="offset"):
        parse_config_text(broken)


def test_mode_gap_rejected():
    broken = EXAMPLE1_CONFIG.replace("[mode.2]", "[mode.3]")
    with pytest.raises(ConfigError, match="numbered"):
        parse_config_text(broken)


# ---------------------------------------------------------------------------
# csv export

def test_export_csv_shapes(tmp_path):
    problem = make_problem(["1", "1"], {(0, 1): "0.1", (1, 0): "0.1"})
    grid = build_grid(0.0, 2.0, 5)
    report = picard_solve(problem, grid)
    regions = extract_regions(report.field, problem)
    export_csv(report.field, regions, grid, tmp_path)

    lines = (tmp_path / "values.csv").read_text().strip().splitlines()
    assert len(lines) == 6  # header + 5 grid rows
    assert lines[0] == "x,v1,v2,best_target_1,best_target_2"
    assert all(len(line.split(",")) == 5 for line in lines)
    # all-continue field: best-target columns are all 0
    assert all(line.split(",")[3:] == ["0", "0"] for line in lines[1:])
    regions_lines = (tmp_path / "regions.csv").read_text().strip().splitlines()
    assert regions_lines == ["from_mode,to_mode,x_start,x_end"]


def test_export_csv_three_modes(tmp_path, ex2_picard, ex2):
    regions = extract_regions(ex2_picard.field, ex2)
    export_csv(ex2_picard.field, regions, ex2_picard.field.grid, tmp_path)
    header = (tmp_path / "values.csv").read_text().splitlines()[0]
    assert header == "x,v1,v2,v3,best_target_1,best_target_2,best_target_3"
    rows = (tmp_path / "regions.csv").read_text().strip().splitlines()[1:]
    assert rows, "the three-mode example has a nonempty switching region"
    from_mode, to_mode, x_start, x_end = rows[0].split(",")
    assert (from_mode, to_mode) == ("3", "1")
    assert float(x_start) > 3.0


# ---------------------------------------------------------------------------
# pipeline and exit codes

def _fast_example1(**extra):
    text = EXAMPLE1_CONFIG.replace("n_nodes = 2001", "n_nodes = 301")
    for section, line in extra.items():
        text += f"\n[{section}] {line}\n"
    return text


def test_run_ok_with_artifacts(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(_fast_example1())
    code = main(["run", str(cfg), "--out", str(tmp_path / "out")])
    assert code == EXIT_OK
    out = tmp_path / "out"
    assert (out / "values.csv").exists()
    assert (out / "regions.csv").exists()
    assert (out / "status").read_text().strip() == "OK"
    report = (out / "report.txt").read_text()
    for needle in ("validation", "solver", "residual", "status: OK"):
        assert needle in report


def test_run_validation_gate_exit_2(tmp_path):
    text = _fast_example1().replace("r = 100", "r = 3")
    cfg = tmp_path / "gate.cfg"
    cfg.write_text(text)
    code = main(["run", str(cfg), "--out", str(tmp_path / "out")])
    assert code == EXIT_VALIDATION
    report = (tmp_path / "out" / "report.txt").read_text()
    assert "H4" in report and "FAILED" in report
    assert (tmp_path / "out" / "status").read_text().strip() == "VALIDATION"


def test_run_nonconvergence_exit_3(tmp_path):
    cfg = tmp_path / "short.cfg"
    cfg.write_text(_fast_example1().replace(
        "outer_tol = 1e-8", "outer_tol = 1e-8  max_outer = 1"))
    code = main(["run", str(cfg), "--out", str(tmp_path / "out")])
    assert code == EXIT_NONCONVERGED
    assert (tmp_path / "out" / "status").read_text().strip() == "NONCONVERGED"


def test_run_checkfail_exit_4(tmp_path):
    # an absurdly tight oracle tolerance forces a cross-check failure
    text = _fast_example1(oracle='enabled = true  probes = "1.0"  n_steps = 200  rel_tol = 1e-9')
    cfg = tmp_path / "checks.cfg"
    cfg.write_text(text)
    code = main(["run", str(cfg), "--out", str(tmp_path / "out")])
    assert code == EXIT_CHECKFAIL
    assert (tmp_path / "out" / "status").read_text().strip() == "CHECKFAIL"
    # artifacts are still written
    assert (tmp_path / "out" / "values.csv").exists()


def test_cli_scheme_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(_fast_example1())
    out = tmp_path / "out"
    code = main(["run", str(cfg), "--out", str(out), "--scheme", "picard"])
    assert code == EXIT_OK
    report = (out / "report.txt").read_text()
    assert "picard" in report and "penalized" not in report


def test_cli_missing_config_reports_error(tmp_path, capsys):
    code = main(["run", str(tmp_path / "nope.cfg")])
    assert code == 1
    assert "not found" in capsys.readouterr().err


def test_build_problem_infers_gamma():
    spec = parse_config_text(EXAMPLE1_CONFIG.replace("gamma = 2", ""))
    problem = build_problem(spec)
    assert problem.gamma == 2
