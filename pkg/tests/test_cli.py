import json
import subprocess
import sys

import pytest

from fisherq.cli import main
from fisherq.config import SCHEMA, parse_config
from fisherq.errors import ConfigError
from fisherq.scenarios import BUNDLED_DIR, list_scenarios

MINIMAL = """
name = tiny
[grid]
points = 64
lengths = 10
[propagator]
dt = 0.01
steps = 4
"""

BUNDLED = {"free_packet", "harmonic_coherent", "larmor", "stern_gerlach", "ab_ring", "two_particle", "classical_harmonic"}


def write(tmp_path, text, name="case.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert set(cfg) == set(SCHEMA)
    assert cfg["grid.points"] == (64,)
    assert cfg["propagator.scheme"] == "crank-nicolson"
    assert cfg["seed"] == 0


@pytest.mark.parametrize(
    "extra, message",
    [
        ("bogus = 1", "unknown key"),
        ("[grid]\npoints = 32", "duplicate"),
        ("[propagator]\nscheme = euler", "not one of"),
        ("just words", "expected"),
        ("[output]\nevery = often", "cannot read"),
    ],
)
def test_bad_configs_are_rejected(extra, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(MINIMAL + extra)


def test_bad_expression_is_rejected():
    with pytest.raises(ConfigError, match="cannot parse expression"):
        parse_config("potential = x^^2\n" + MINIMAL)


@pytest.mark.parametrize("dt", ["0", "-0.01"])
def test_non_positive_step_is_rejected(dt):
    with pytest.raises(ConfigError, match="dt"):
        parse_config(MINIMAL.replace("dt = 0.01", f"dt = {dt}"))


def test_missing_required_key():
    with pytest.raises(ConfigError, match="missing"):
        parse_config("name = x\n")


def test_comments_and_sections():
    cfg = parse_config("# header\n" + MINIMAL + "[initial]  # trailing\ncenter = 1.5, 2\n")
    assert cfg["initial.center"] == (1.5, 2.0)


def test_run_bundled_scenario(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "harmonic_coherent", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["passed"] and manifest["name"] == "harmonic_coherent"
    assert len(manifest["config_sha256"]) == 64
    assert {"numpy", "scipy", "python"} <= set(manifest["versions"])
    header = (out / "timeseries.csv").read_text().splitlines()[0].split(",")
    assert "ehrenfest_force" in header
    residual_header = (out / "residuals.csv").read_text().splitlines()[0]
    assert residual_header == "t,residual_continuity,residual_hj,residual_theta,residual_phi,mask_fraction"
    assert any(name.endswith(".fqf") for name in manifest["files"])
    assert b"\r\n" not in (out / "timeseries.csv").read_bytes()


def test_runs_are_bitwise_reproducible(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["run", "harmonic_coherent", "--out", str(out)]) == 0
    files = json.loads((outs[0] / "manifest.json").read_text())["files"]
    for name in files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_thread_count_does_not_change_results(tmp_path):
    for n in (1, 4):
        subprocess.run(
            [sys.executable, "-m", "fisherq.cli", "run", "stern_gerlach", "--out", str(tmp_path / str(n)), "--threads", str(n)],
            check=True, capture_output=True,
        )
    for name in ("forces.csv", "checks.csv"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "4" / name).read_bytes()


def test_wrong_coupling_scenario_fails_its_check(tmp_path, capsys):
    assert main(["run", "larmor_wrong_g", "--out", str(tmp_path)]) == 1
    assert "FAIL" in capsys.readouterr().err


def test_bad_step_exits_two(tmp_path, capsys):
    path = write(tmp_path, MINIMAL.replace("dt = 0.01", "dt = 0"))
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "dt" in capsys.readouterr().err


def test_missing_scenario_exits_two(tmp_path):
    assert main(["run", "no_such_scenario", "--out", str(tmp_path)]) == 2


def test_solver_failure_exits_three(tmp_path):
    text = "potential = 1000*sin(20*x)*x^2\n" + MINIMAL.replace("dt = 0.01", "dt = 1") + "tol = 1e-300\n"
    assert main(["run", str(write(tmp_path, text)), "--out", str(tmp_path / "o")]) == 3


def test_unknown_suite_exits_two(tmp_path, capsys):
    assert main(["verify", "bogus", "--out", str(tmp_path)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_bad_arguments_exit_two(capsys):
    assert main([]) == 2
    assert main(["list-scenarios", "--threads", "0"]) == 2
    assert main(["run"]) == 2


def test_bundled_scenario_list(capsys):
    names = {name for name, _, _ in list_scenarios()}
    assert BUNDLED <= names
    assert main(["list-scenarios"]) == 0
    printed = capsys.readouterr().out
    assert all(name in printed for name in BUNDLED)


def test_empty_user_directory_adds_nothing(tmp_path):
    assert len(list_scenarios(str(tmp_path))) == len(list_scenarios())


def test_user_directory_adds_valid_configs(tmp_path, monkeypatch, capsys):
    write(tmp_path, MINIMAL.replace("name = tiny", "name = mine"), "mine.cfg")
    write(tmp_path, "not a config", "broken.cfg")
    assert len(list_scenarios(str(tmp_path))) == len(list_scenarios()) + 1
    monkeypatch.setenv("FISHERQ_SCENARIO_DIR", str(tmp_path))
    assert main(["list-scenarios"]) == 0
    assert "mine" in capsys.readouterr().out
    assert main(["run", "mine", "--out", str(tmp_path / "o")]) == 0


def test_bundled_files_parse():
    for path in sorted(BUNDLED_DIR.glob("*.cfg")):
        parse_config(path.read_text(), str(path))
