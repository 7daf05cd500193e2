import json

from click.testing import CliRunner
import pytest

from kpeaks.cli import main


@pytest.fixture
def run(tmp_path, monkeypatch):
    monkeypatch.delenv("KPEAKS_OUT_DIR", raising=False)
    runner = CliRunner()

    def invoke(*args):
        log_file = str(tmp_path / "kpeaks.log")
        out_dir = str(tmp_path / "out")
        return runner.invoke(main, ["-l", log_file, "-o", out_dir, "-P", *args])

    return invoke


def manifest_of(tmp_path):
    path = tmp_path / "out" / "run-manifest.json"
    return json.loads(path.read_text(encoding="utf-8"))


def test_version():
    result = CliRunner().invoke(main, ["version"])
    assert result.exit_code == 0
    assert result.output == "kpeaks v0.1.0\n"


def test_help_without_subcommand(tmp_path):
    result = CliRunner().invoke(main, ["-l", str(tmp_path / "kpeaks.log")])
    assert result.exit_code == 0
    assert "Meet kpeaks" in result.output
    assert "limit-system" in result.output


def test_config_shows_merged_values(run):
    result = run("-p", "single_well_quadratic", "config")
    assert result.exit_code == 0
    assert "'KPEAKS_PRESET': 'single_well_quadratic'" in result.output


def test_unknown_preset(run):
    result = run("-p", "four_wells", "config")
    assert result.exit_code == 2
    assert "Valid presets" in result.output


def test_unknown_key_writes_a_failed_manifest(run, tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("KPEAKS_NOPE=1\n", encoding="utf-8")
    result = run("-c", str(path), "groundstate")
    assert result.exit_code == 2
    assert result.output.startswith("Error:")
    manifest = manifest_of(tmp_path)
    assert manifest["status"] == "failed"
    assert manifest["failing_stage"] == "setup"
    assert manifest["error"]["type"] == "UnknownConfigKey"


def test_groundstate(run, tmp_path):
    result = run("-p", "single_well_quadratic", "groundstate")
    assert result.exit_code == 0, result.output
    assert "lam=1: u(0)=4.33" in result.output
    assert (tmp_path / "out" / "groundstate_lam1.csv").exists()
    manifest = manifest_of(tmp_path)
    assert manifest["status"] == "ok"
    assert manifest["command"] == "groundstate"
    assert all(check["passed"] for check in manifest["checks"])


def test_limit_system_with_imposed_b_bar(run, tmp_path):
    path = tmp_path / "b_bar.cfg"
    path.write_text("KPEAKS_SCHEMA=1\nKPEAKS_B_BAR=0\n", encoding="utf-8")
    result = run("-c", str(path), "limit-system")
    assert result.exit_code == 0, result.output
    summary_path = tmp_path / "out" / "limit_system.json"
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    assert summary["c"] == 1.0
    assert summary["self_consistent"] is False
    assert (tmp_path / "out" / "w_profile_2.csv").exists()


def test_pohozaev_constant_potential(run, tmp_path):
    result = run("-p", "constant", "-T", "limit=1e-8", "pohozaev")
    assert result.exit_code == 0, result.output
    assert (tmp_path / "out" / "pohozaev.csv").exists()
    checks = {check["name"]: check for check in manifest_of(tmp_path)["checks"]}
    assert checks["pohozaev_constant_potential"]["passed"]


def test_failing_solver_exit_code(run, tmp_path):
    path = tmp_path / "coarse.cfg"
    path.write_text(
        "KPEAKS_SCHEMA=1\nKPEAKS_GRID_N=9\nKPEAKS_EPS=0.1\n", encoding="utf-8"
    )
    result = run("-c", str(path), "coercivity")
    assert result.exit_code == 3
    manifest = manifest_of(tmp_path)
    assert manifest["error"]["type"] == "UnresolvedPeak"
