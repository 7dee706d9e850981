"""CLI contract: subcommands, flags, exit codes, output files."""

import json

import pytest
from click.testing import CliRunner

from mcusim.cli import main

from test_scenario import minimal_document


@pytest.fixture
def runner():
    return CliRunner()


def write_scenario(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestRun:
    def test_clean_run_exits_zero(self, runner, tmp_path):
        path = write_scenario(tmp_path, minimal_document())
        result = runner.invoke(main, ["run", path])
        assert result.exit_code == 0
        report = json.loads(result.output)
        assert report["termination"] == "completed"

    def test_packaged_scenario_by_name(self, runner):
        result = runner.invoke(main, ["run", "table3_reconstruction"])
        assert result.exit_code == 0

    def test_violations_exit_three(self, runner):
        result = runner.invoke(main, ["run", "plc", "--toggle", "modbus_attack=true"])
        assert result.exit_code == 3

    def test_missing_file_exits_one(self, runner):
        result = runner.invoke(main, ["run", "/nonexistent/scenario.json"])
        assert result.exit_code == 1

    def test_schema_error_exits_one(self, runner, tmp_path):
        doc = minimal_document()
        del doc["kernel"]
        path = write_scenario(tmp_path, doc)
        result = runner.invoke(main, ["run", path])
        assert result.exit_code == 1
        assert "error" in result.output

    def test_zero_ticks_flag(self, runner, tmp_path):
        path = write_scenario(tmp_path, minimal_document())
        result = runner.invoke(main, ["run", path, "--ticks", "0"])
        assert result.exit_code == 0
        report = json.loads(result.output)
        assert report["termination"] == "tick_limit"
        assert report["counters"]["context_switches"] == 0

    def test_out_flag_writes_file(self, runner, tmp_path):
        path = write_scenario(tmp_path, minimal_document())
        out = tmp_path / "report.json"
        result = runner.invoke(main, ["run", path, "--out", str(out)])
        assert result.exit_code == 0
        assert json.loads(out.read_text())["scenario"] == "mini"
        assert result.output == ""

    def test_trace_flag_adds_trace(self, runner, tmp_path):
        path = write_scenario(tmp_path, minimal_document())
        result = runner.invoke(main, ["run", path, "--trace"])
        report = json.loads(result.output)
        assert "trace" in report and report["trace"]

    def test_mode_override_flag(self, runner, tmp_path):
        path = write_scenario(tmp_path, minimal_document())
        result = runner.invoke(main, ["run", path, "--mode", "fmpu_compat"])
        report = json.loads(result.output)
        assert report["mode"] == "fmpu_compat"

    def test_bad_toggle_syntax_is_input_error(self, runner, tmp_path):
        path = write_scenario(tmp_path, minimal_document())
        result = runner.invoke(main, ["run", path, "--toggle", "attack=maybe"])
        assert result.exit_code == 1

    def test_illegal_descriptor_is_input_error(self, runner, tmp_path):
        doc = minimal_document()
        doc["tasks"][0]["stack"] = {"base": "0x20000410", "size": 256}
        path = write_scenario(tmp_path, doc)
        result = runner.invoke(main, ["run", path])
        assert result.exit_code == 1

    def test_byte_identical_outputs(self, runner, tmp_path):
        path = write_scenario(tmp_path, minimal_document())
        first = runner.invoke(main, ["run", path, "--trace"]).output
        second = runner.invoke(main, ["run", path, "--trace"]).output
        assert first == second


class TestCheck:
    def test_clean_scenario_exits_zero(self, runner, tmp_path):
        path = write_scenario(tmp_path, minimal_document())
        assert runner.invoke(main, ["check", path]).exit_code == 0

    def test_controller_overlap_exits_two_and_names_rule(self, runner, tmp_path):
        doc = minimal_document()
        doc["tasks"][0]["user_regions"] = [
            {"base": "0x40001000", "size": 1024, "access": "rw"}
        ]
        path = write_scenario(tmp_path, doc)
        result = runner.invoke(main, ["check", path])
        assert result.exit_code == 2
        assert "dma-controller-overlap" in result.output

    def test_compat_same_overlap_warns_exit_zero(self, runner, tmp_path):
        doc = minimal_document(mode="fmpu_compat")
        doc["tasks"][0]["user_regions"] = [
            {"base": "0x40001000", "size": 1024, "access": "rw"}
        ]
        path = write_scenario(tmp_path, doc)
        result = runner.invoke(main, ["check", path])
        assert result.exit_code == 0
        report = json.loads(result.output)
        assert report["warnings"] >= 1


class TestMetrics:
    def test_emits_exposure_document(self, runner, tmp_path):
        path = write_scenario(tmp_path, minimal_document())
        result = runner.invoke(main, ["metrics", path])
        assert result.exit_code == 0
        report = json.loads(result.output)
        assert {row["variant"] for row in report["exposure"]} == {"standard", "worst_case"}

    def test_mode_override(self, runner):
        result = runner.invoke(
            main, ["metrics", "table3_reconstruction", "--mode", "fmpu_compat"]
        )
        report = json.loads(result.output)
        worst = [r for r in report["exposure"] if r["variant"] == "worst_case"]
        assert all(r["dma_controller_exposed"] for r in worst)
