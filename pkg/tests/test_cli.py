"""
Command line tests.

Proves:
  - a run prints the written paths and exits 0
  - command line overrides reach the scenario
  - configuration and usage problems exit 1, runtime and output failures exit 2
"""
import json

import pytest

from ipac.harness import Scenario, save_scenario
from leo_ipac import build_parser, main, resolve_scenario


def test_doppler_run(tmp_path, capsys):
    assert main(["doppler", "--out", str(tmp_path)]) == 0
    printed = capsys.readouterr().out.split()
    assert printed == [str(tmp_path / "doppler.csv"), str(tmp_path / "doppler.meta")]


def test_overrides_reach_the_scenario(tmp_path):
    path = save_scenario(Scenario(array_n=8), tmp_path / "base.scenario")
    args = build_parser().parse_args(["se-sweep", "--scenario", str(path), "--seed", "7",
                                      "--trials", "30", "--workers", "2"])
    scenario = resolve_scenario(args)
    assert scenario.array_n == 8
    assert scenario.seed == 7
    assert scenario.se_trials == scenario.rmse_trials == 30
    assert scenario.workers == 2


def test_seed_lands_in_metadata(tmp_path):
    assert main(["link-budget", "--out", str(tmp_path), "--seed", "11"]) == 0
    meta = json.loads((tmp_path / "link-budget.meta").read_text())
    assert meta["seed"] == 11


def test_bad_scenario_file_exits_1(tmp_path):
    path = tmp_path / "bad.scenario"
    path.write_text("carrier = 28e9\n")
    assert main(["doppler", "--scenario", str(path), "--out", str(tmp_path)]) == 1


def test_bad_override_exits_1(tmp_path):
    assert main(["doppler", "--trials", "0", "--out", str(tmp_path)]) == 1


def test_unwritable_output_exits_2(tmp_path):
    blocker = tmp_path / "taken"
    blocker.write_text("not a directory")
    assert main(["doppler", "--out", str(blocker)]) == 2


@pytest.mark.parametrize("argv", [
    ["beam-sweep"],
    ["doppler", "--seed", "abc"],
    ["doppler", "--trials", "many"],
    ["doppler", "--workers", "1.5"],
    [],
])
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "error" in capsys.readouterr().err


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
    assert "doppler" in capsys.readouterr().out
