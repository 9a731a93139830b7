import json

import pytest
from click.testing import CliRunner

import zlab.acceptance
from zlab.acceptance import CriterionResult
from zlab.cli import main
from zlab.harness import preset_data

FAST = {"grid": {"n": [8, 16, 32], "gamma": [1.0, 2.0, 4.0], "s": [1.0]}}


@pytest.fixture
def runner():
    return CliRunner()


def write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_preset_to_stdout(runner, tmp_path):
    result = runner.invoke(main, ["zeno", "--preset", "zeno_projective", "--config", write(tmp_path, FAST)])
    assert result.exit_code == 0, result.output
    assert "control,measured,bound,s" in result.output
    assert "# assertion bound>=measured: true" in result.output


def test_config_file_and_out(runner, tmp_path):
    cfg = write(tmp_path, {**preset_data("zeno_contraction"), **FAST})
    out = tmp_path / "run" / "zeno.csv"
    result = runner.invoke(main, ["zeno", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert out.read_text().startswith("# generated ")


def test_kind_argument_overrides(runner, tmp_path):
    out = tmp_path / "b.csv"
    result = runner.invoke(main, ["bounds", "--preset", "zeno_contraction", "--config", write(tmp_path, FAST), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "contraction_proof_bound" in out.read_text()


def test_seed_option(runner, tmp_path):
    data = {"instance": {"dimension": 3, "dim_I": 1, "random": {"index": 0}}, "grid": {"n": [8], "s": [1.0]}}
    cfg = write(tmp_path, data)
    a = runner.invoke(main, ["bounds", "--config", cfg, "--seed", "1"])
    b = runner.invoke(main, ["bounds", "--config", cfg, "--seed", "2"])
    assert a.exit_code == 0 and b.exit_code == 0
    assert a.output.splitlines()[3:] != b.output.splitlines()[3:]


def test_invariant_failure_exit_1(runner, tmp_path):
    cfg = write(tmp_path, {"grid": {"gamma": [64.0]}})
    result = runner.invoke(main, ["adiabatic", "--preset", "adiabatic_unitary", "--config", cfg])
    assert result.exit_code == 1


@pytest.mark.parametrize(
    "args",
    [
        ["zeno"],
        ["zeno", "--config", "/nonexistent/cfg.json"],
    ],
)
def test_config_errors_exit_2(runner, args):
    assert runner.invoke(main, args).exit_code == 2


def test_schema_error_exit_2(runner, tmp_path):
    cfg = write(tmp_path, {"instance": {"dimension": 99}})
    result = runner.invoke(main, ["zeno", "--preset", "zeno_projective", "--config", cfg])
    assert result.exit_code == 2
    assert "instance.dimension" in result.output


def test_bad_threads_exit_2(runner, tmp_path, monkeypatch):
    monkeypatch.setenv("ZLAB_THREADS", "zero")
    result = runner.invoke(main, ["zeno", "--preset", "zeno_projective", "--config", write(tmp_path, FAST)])
    assert result.exit_code == 2


def test_numerical_failure_exit_3(runner, tmp_path):
    data = preset_data("zeno_projective")
    data["instance"]["operator"] = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.5, 0.0]]]
    result = runner.invoke(main, ["zeno", "--config", write(tmp_path, {**data, **FAST})])
    assert result.exit_code == 3


def test_selftest_reports_lines(runner, monkeypatch):
    fake = [CriterionResult(1, "one", True, "ok"), CriterionResult(2, "two", False, "miss")]

    def run_all(report=None):
        for r in fake:
            report(r)
        return fake

    monkeypatch.setattr(zlab.acceptance, "run_all", run_all)
    result = runner.invoke(main, ["selftest"])
    assert result.exit_code == 1
    assert "criterion  1 [PASS] one: ok" in result.output
    assert "1/2 criteria passed" in result.output
