import os
import subprocess
import sys

import numpy as np
import pytest

from hjbpi.cli import (
    EXIT_BLOWUP,
    EXIT_INVARIANT,
    EXIT_OK,
    EXIT_VALIDATION,
    ExperimentConfig,
    InlineProblemSpec,
    parse_config,
    run_experiment,
    serialize_config,
)
from hjbpi.errors import (
    CFLValidationError,
    ConfigParseError,
    MonotonicityError,
    NumericalBlowupError,
)

MINIMAL = """
# minimal experiment
benchmark: eikonal-cos
scheme.h: 0.1
scheme.T: 1.0
mode: solve
"""


def run_cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "hjbpi", *args], cwd=cwd,
                          capture_output=True, text=True)


def read_summary(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            key, _, value = line.partition(":")
            out[key.strip()] = value.strip()
    return out


class TestParseConfig:
    def test_minimal_defaults(self):
        config = parse_config(MINIMAL)
        assert config.benchmark == "eikonal-cos"
        assert config.mode == "solve"
        assert config.tau is None and config.N is None
        assert config.resolved_N() == 1.0
        assert config.resolved_tau() == 0.05

    def test_cfl_violation_rejected_at_parse(self):
        text = MINIMAL + "scheme.tau: 0.2\n"
        with pytest.raises(CFLValidationError):
            parse_config(text)

    def test_unknown_key_carries_line(self):
        with pytest.raises(ConfigParseError) as err:
            parse_config("benchmark: zero\nscheme.h: 0.1\nwibble: 3\n")
        assert err.value.line_no == 3 and err.value.key == "wibble"

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigParseError):
            parse_config("benchmark: zero\nbenchmark: zero\nscheme.h: 0.1\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigParseError):
            parse_config("benchmark: zero\nscheme.h: fast\n")

    def test_benchmark_xor_inline_problem(self):
        with pytest.raises(Exception):
            parse_config("scheme.h: 0.1\n")
        with pytest.raises(Exception):
            parse_config("benchmark: zero\nproblem.dynamics: control\nscheme.h: 0.1\n")

    def test_inline_problem_forms(self):
        text = (
            "problem.dimension: 1\nproblem.box: 0.0, 6.283185307179586\n"
            "problem.periodic: true\nproblem.dynamics: unit\n"
            "problem.running_cost: zero\nproblem.terminal_cost: sin\n"
            "problem.control_samples: 1\nproblem.f_sup_bound: 1.0\n"
            "scheme.h: 0.1\nmode: solve\n")
        config = parse_config(text)
        assert config.problem.dynamics == "unit"
        assert config.problem.box == (0.0, 2 * np.pi)


def random_config(rng):
    benchmark = rng.choice(["eikonal-cos", "quadratic-lq", "transport-sin", "zero"])
    h = float(rng.choice([0.2, 0.1, 0.05]))
    config = ExperimentConfig(
        mode=str(rng.choice(["solve", "pi", "h-study", "tau-study", "legendre-pi",
                             "probes"])),
        benchmark=str(benchmark),
        h=h,
        tau=None if rng.random() < 0.5 else h / float(rng.integers(3, 8)),
        N=None if rng.random() < 0.7 else float(rng.integers(1, 3)),
        T=float(rng.choice([0.5, 1.0])),
        output_dir=f"out{rng.integers(100)}",
        seed=int(rng.integers(1000)),
        threads=int(rng.integers(0, 4)),
        pi_max_iterations=int(rng.integers(1, 200)),
        pi_stop_tolerance=float(rng.choice([1e-8, 1e-10])),
        pi_record_every=int(rng.integers(1, 20)),
        pi_initial_policy=str(rng.choice(["benchmark-default", "first-control",
                                          "argmin-of-c"])),
        study_h_values=None if rng.random() < 0.5 else (0.2, 0.1, 0.05, 0.025),
        study_tau_values=None if rng.random() < 0.5 else (0.02, 0.01),
        legendre_M=float(rng.choice([1.0, 2.0])),
        probe_points=None if rng.random() < 0.5 else (1.0, 2.0),
        probe_h_values=None,
    )
    return config


def test_serialize_parse_roundtrip_100_random_configs():
    rng = np.random.default_rng(2024)
    count = 0
    while count < 100:
        config = random_config(rng)
        try:
            parse_config(serialize_config(config))
        except CFLValidationError:
            continue  # random triple violated the step bound; draw again
        assert parse_config(serialize_config(config)) == config
        count += 1


def test_roundtrip_with_inline_problem():
    config = ExperimentConfig(
        mode="solve",
        problem=InlineProblemSpec(dynamics="unit", running_cost="zero",
                                  terminal_cost="sin", box=(0.0, 2 * np.pi),
                                  control_samples=1),
        h=0.1)
    assert parse_config(serialize_config(config)) == config


class TestRunExperiment:
    def test_solve_zero_writes_zero_solution(self, tmp_path):
        config = ExperimentConfig(mode="solve", benchmark="zero", h=0.1,
                                  output_dir=str(tmp_path / "out"))
        assert run_experiment(config) == EXIT_OK
        rows = (tmp_path / "out" / "solution.csv").read_text().strip().splitlines()
        assert rows[0] == "t,linear_index,x_0,value,control_index"
        assert all(row.split(",")[3] == "0.0" for row in rows[1:])

    def test_pi_summary_reports_contraction(self, tmp_path):
        config = ExperimentConfig(mode="pi", benchmark="quadratic-lq", h=0.05,
                                  output_dir=str(tmp_path / "out"))
        assert run_experiment(config) == EXIT_OK
        summary = read_summary(tmp_path / "out" / "summary.txt")
        assert float(summary["rho"]) <= 0.75
        assert float(summary["final_sup_error"]) <= 1e-8
        assert (tmp_path / "out" / "pi_run.csv").exists()

    def test_h_study_outputs(self, tmp_path):
        config = ExperimentConfig(mode="h-study", benchmark="transport-sin", h=0.1,
                                  study_h_values=(0.2, 0.1, 0.05, 0.025),
                                  output_dir=str(tmp_path / "out"))
        assert run_experiment(config) == EXIT_OK
        assert (tmp_path / "out" / "study.csv").exists()
        assert (tmp_path / "out" / "study.dat").read_text().startswith("# h sup_error")
        import json

        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["fitted_order"] >= 0.9

    def test_missing_study_values_is_validation_error(self, tmp_path):
        config = ExperimentConfig(mode="h-study", benchmark="zero", h=0.1,
                                  output_dir=str(tmp_path / "out"))
        assert run_experiment(config) == EXIT_VALIDATION

    def test_tau_study_outputs(self, tmp_path):
        config = ExperimentConfig(mode="tau-study", benchmark="eikonal-cos", h=0.1,
                                  study_tau_values=(1 / 21, 1 / 42, 1 / 84),
                                  output_dir=str(tmp_path / "out"))
        assert run_experiment(config) == EXIT_OK
        summary = read_summary(tmp_path / "out" / "summary.txt")
        assert summary["distances_decreasing"] == "True"
        assert (tmp_path / "out" / "study.csv").exists()

    def test_legendre_pi_outputs(self, tmp_path):
        config = ExperimentConfig(mode="legendre-pi", benchmark="eikonal-cos", h=0.1,
                                  output_dir=str(tmp_path / "out"))
        assert run_experiment(config) == EXIT_OK
        summary = read_summary(tmp_path / "out" / "summary.txt")
        assert float(summary["final_sup_error"]) <= 1e-8
        header = (tmp_path / "out" / "legendre_run.csv").read_text().splitlines()[0]
        assert header.endswith("legendre_resolution")

    def test_inline_problem_solve_matches_benchmark(self, tmp_path):
        inline = ExperimentConfig(
            mode="solve",
            problem=InlineProblemSpec(dynamics="unit", running_cost="zero",
                                      terminal_cost="sin", box=(0.0, 2 * np.pi),
                                      periodic=True, control_samples=1,
                                      f_sup_bound=1.0),
            h=0.1, output_dir=str(tmp_path / "inline"))
        named = ExperimentConfig(mode="solve", benchmark="transport-sin", h=0.1,
                                 output_dir=str(tmp_path / "named"))
        assert run_experiment(inline) == EXIT_OK
        assert run_experiment(named) == EXIT_OK
        a = (tmp_path / "inline" / "solution.csv").read_bytes()
        b = (tmp_path / "named" / "solution.csv").read_bytes()
        assert a == b

    def test_probes_outputs(self, tmp_path):
        config = ExperimentConfig(mode="probes", benchmark="eikonal-cos", h=0.1,
                                  probe_points=(2.0,),
                                  probe_h_values=(0.1, 0.05),
                                  output_dir=str(tmp_path / "out"))
        assert run_experiment(config) == EXIT_OK
        summary = read_summary(tmp_path / "out" / "summary.txt")
        assert summary["stabilized_2.0"] == "True"

    def test_blowup_maps_to_exit_3(self, tmp_path, monkeypatch):
        from hjbpi import cli

        def boom(config, outdir):
            raise NumericalBlowupError("synthetic blowup")

        monkeypatch.setitem(cli._MODE_RUNNERS, "solve", boom)
        config = ExperimentConfig(mode="solve", benchmark="zero", h=0.1,
                                  output_dir=str(tmp_path / "out"))
        assert run_experiment(config) == EXIT_BLOWUP

    def test_monotonicity_breach_maps_to_exit_4(self, tmp_path, monkeypatch):
        from hjbpi import cli

        def breach(config, outdir):
            raise MonotonicityError("synthetic ordering violation")

        monkeypatch.setitem(cli._MODE_RUNNERS, "pi", breach)
        config = ExperimentConfig(mode="pi", benchmark="zero", h=0.1,
                                  output_dir=str(tmp_path / "out"))
        assert run_experiment(config) == EXIT_INVARIANT


class TestCommandLine:
    def test_solve_subcommand(self, tmp_path):
        (tmp_path / "exp.cfg").write_text(MINIMAL)
        result = run_cli(["solve", "--config", "exp.cfg", "--output", "artifacts"],
                         cwd=tmp_path)
        assert result.returncode == EXIT_OK, result.stderr
        assert (tmp_path / "artifacts" / "solution.csv").exists()

    def test_subcommand_overrides_config_mode(self, tmp_path):
        (tmp_path / "exp.cfg").write_text(MINIMAL)  # says solve
        result = run_cli(["pi", "--config", "exp.cfg", "--output", "artifacts"],
                         cwd=tmp_path)
        assert result.returncode == EXIT_OK, result.stderr
        summary = read_summary(tmp_path / "artifacts" / "summary.txt")
        assert summary["mode"] == "pi"

    def test_cfl_violation_exits_2(self, tmp_path):
        (tmp_path / "exp.cfg").write_text(MINIMAL + "scheme.tau: 0.2\n")
        result = run_cli(["solve", "--config", "exp.cfg"], cwd=tmp_path)
        assert result.returncode == EXIT_VALIDATION
        assert "h/(2 tau)" in result.stderr or "N <=" in result.stderr

    def test_missing_config_exits_2(self, tmp_path):
        result = run_cli(["solve", "--config", "nope.cfg"], cwd=tmp_path)
        assert result.returncode == EXIT_VALIDATION

    def test_identical_runs_are_bitwise_identical(self, tmp_path):
        (tmp_path / "exp.cfg").write_text(MINIMAL)
        # thread count must not influence results either
        for out, threads in (("a", "1"), ("b", "4")):
            result = run_cli(["solve", "--config", "exp.cfg", "--output", out,
                              "--seed", "7", "--threads", threads], cwd=tmp_path)
            assert result.returncode == EXIT_OK, result.stderr
        names = [n for n in os.listdir(tmp_path / "a") if n != "config.txt"]
        assert "solution.csv" in names
        for name in names:
            with open(tmp_path / "a" / name, "rb") as fa, \
                    open(tmp_path / "b" / name, "rb") as fb:
                assert fa.read() == fb.read(), name
