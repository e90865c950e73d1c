import json
import os
from pathlib import Path
import subprocess
import sys

import pytest

from hankel_arma import cli
from hankel_arma.cli import (EXIT_OK, EXIT_SCALE, EXIT_USAGE, EXIT_VALIDATION, SEED_ENV, build_parser, main,
                             resolve)

FIXTURES = Path(__file__).parent / "fixtures"
TRAJ = str(FIXTURES / "arma21_trajectory.csv")
ARMA21 = ["--a", "1.0", "-0.6", "--b", "-0.5"]

# small settings that keep every subcommand fast
SUBCOMMANDS = {
    "simulate": ["--a", "0.5", "--T", "300", "--seed", "7"],
    "hankel": ["--traj", TRAJ, "--t", "4"],
    "estimate": ["--traj", TRAJ, "--t", "6", "--lambda", "50"],
    "bounds": ["--a", "0.3", "--t", "5", "--T", "10000", "--eta", "100"],
    "mc-sigmah": ["--t", "2", "--T", "7", "--replicates", "2000"],
    "mc-width": ["--t", "4", "--r", "1", "--replicates", "2000"],
    "mc-norms": ["--t", "3", "--replicates", "2000"],
    "experiment": ["--a", "0.5", "--t", "4", "--T", "300", "--replicates", "4", "--calibration-replicates", "10"],
}


def _run(tmp_path, name, args):
    out = tmp_path / name
    assert main(args + ["--out", str(out)]) == EXIT_OK
    return out


def _data_files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}


def test_simulate_twice_byte_identical(tmp_path):
    args = ["simulate", "--p", "1", "--a", "0.5", "--T", "1000", "--seed", "7"]
    a = _run(tmp_path, "a", args)
    b = _run(tmp_path, "b", args)
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
    assert len((a / "trajectory.csv").read_text().splitlines()) == 1002


@pytest.mark.parametrize("name", sorted(SUBCOMMANDS))
def test_every_subcommand_deterministic(tmp_path, name):
    args = [name] + SUBCOMMANDS[name]
    a = _data_files(_run(tmp_path, "a", args))
    b = _data_files(_run(tmp_path, "b", args))
    assert a == b
    assert "config.json" in a
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["command"] == name
    assert man["config_hash"] == cli.config_hash(json.loads(a["config.json"]))
    assert set(man) >= {"seed", "versions", "timestamp", "outputs"}


def test_realize_from_estimate(tmp_path):
    est = _run(tmp_path, "est", ["estimate", "--traj", TRAJ, "--t", "8", "--eta", "160"])
    out = _run(tmp_path, "real", ["realize", "--estimate", str(est / "L_hat.csv"), "--p-hat", "2"])
    rep = json.loads((out / "realization.json").read_text())
    assert rep["p_hat"] == 2 and rep["model"]["dim"] == 2 and len(rep["model"]["A"]) == 4


def test_estimate_fixture(tmp_path):
    ref = json.loads((FIXTURES / "arma21_estimate.json").read_text())
    out = _run(tmp_path, "e", ["estimate", "--traj", TRAJ] + ARMA21 + ["--t", "8", "--eta", "auto", "--nu", "2.0"])
    got = json.loads((out / "estimate.json").read_text())
    assert got["p_hat"] == ref["p_hat"] == 2
    assert got["eta"] == pytest.approx(ref["eta"], rel=1e-12)
    assert got["residual_fro"] == pytest.approx(ref["residual_fro"], rel=1e-9)
    assert got["singular_values"][:2] == pytest.approx(ref["singular_values"][:2], rel=1e-9)
    assert len(got["singular_values"]) == 8


def test_bounds_optimize_fixture(tmp_path):
    ref = json.loads((FIXTURES / "bounds_ar1_t5_T10000.json").read_text())
    out = _run(tmp_path, "b", ["bounds", "--a", "0.3", "--t", "5", "--T", "10000", "--eta", "100",
                               "--xi", "optimize"])
    got = json.loads((out / "bounds.json").read_text())
    assert got["xi_optimized"] is True
    assert got["xi"] == pytest.approx(ref["xi"], rel=1e-9)
    assert got["Lambda"] == pytest.approx(ref["Lambda"], rel=1e-12)


@pytest.mark.parametrize("name", sorted(cli.COMMANDS))
def test_help_lists_defaults(name, capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args([name, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    sub = next(a for a in build_parser()._subparsers._group_actions[0].choices.items() if a[0] == name)[1]
    for action in sub._actions:
        if action.option_strings and action.dest != "help":
            assert action.option_strings[0] in text
            if action.default is not None:
                assert "(default:" in text
    assert text.count("(default:") >= sum(1 for a in sub._actions if a.option_strings and a.dest != "help")


def test_exit_codes(tmp_path):
    assert main(["nonsense"]) == EXIT_USAGE
    assert main(["simulate", "--a", "1.5", "--out", str(tmp_path / "x")]) == EXIT_VALIDATION
    assert main(["simulate", "--p", "2", "--a", "0.5", "--out", str(tmp_path / "x")]) == EXIT_VALIDATION
    assert main(["hankel", "--traj", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "x")]) == EXIT_VALIDATION
    assert main(["mc-width", "--t", "9", "--r", "1", "--out", str(tmp_path / "x")]) == EXIT_SCALE
    assert main(["mc-sigmah", "--t", "5", "--T", "200", "--out", str(tmp_path / "x")]) == EXIT_SCALE
    assert main(["experiment", "--a", "0.5", "--replicates", "500", "--out", str(tmp_path / "x")]) == EXIT_SCALE


def test_estimate_infeasible_eta_reported(tmp_path):
    out = _run(tmp_path, "e", ["estimate", "--traj", TRAJ, "--t", "8", "--eta", "1.0"])
    got = json.loads((out / "estimate.json").read_text())
    assert got["infeasible"] is True and got["floor"] > 1.0


def test_seed_precedence(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"seed": 3, "T": 50, "a": [0.5]}))
    base = ["simulate", "--config", str(cfg_file)]
    assert resolve(base, {})["seed"] == 3
    assert resolve(base, {SEED_ENV: "5"})["seed"] == 5
    assert resolve(base + ["--seed", "9"], {SEED_ENV: "5"})["seed"] == 9
    assert resolve(["simulate"], {})["seed"] == 0
    cfg = resolve(base, {})
    assert cfg["T"] == 50 and cfg["a"] == [0.5]
    assert resolve(base + ["--T", "60"], {})["T"] == 60


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nope": 1}))
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x")]) == EXIT_VALIDATION
    assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "x")]) \
        == EXIT_VALIDATION
    env = dict(os.environ, **{SEED_ENV: "abc"})
    with pytest.raises(cli.ConfigError):
        resolve(["simulate"], env)


def test_config_echo_reproduces_run(tmp_path):
    a = _run(tmp_path, "a", ["simulate", "--a", "0.4", "--b", "0.2", "--T", "100", "--seed", "4"])
    echo = tmp_path / "a" / "config.json"
    b = _run(tmp_path, "b", ["simulate", "--config", str(echo)])
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "hankel_arma", "mc-norms", "--t", "2", "--replicates", "100",
                        "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "m" / "norms.json").exists()
