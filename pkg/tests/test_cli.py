"""CLI entry points: exit codes, overrides, rerun checksums."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from qmetro import artifacts as art
from qmetro.cli import main

BOUNDS = """\
schema = 1
[model]
preset = "qubit-frequency"
gamma_minus = 0.0
[dynamics]
t1 = 2.0
steps = 50
[task]
name = "bounds"
"""

BAYES = """\
schema = 1
[model]
preset = "qubit-phase"
[dynamics]
t1 = 1.0
steps = 20
[task]
name = "bayes"
x_true = 0.7853981633974483
rounds = 40
seed = 7
[task.prior]
type = "uniform"
range = [0.0, 1.5707963267948966]
points = 50
"""

ADAPT = """\
schema = 1
[model]
preset = "qubit-phase"
[dynamics]
t1 = 1.0
steps = 20
[task]
name = "adapt"
pre_rounds = 10
x_opt = 0.0
[task.prior]
type = "uniform"
range = [-0.7853981633974483, 2.356194490192345]
points = 50
"""

MINTIME_UNREACHABLE = """\
schema = 1
[model]
preset = "qubit-frequency"
gamma_minus = 0.0
with_controls = true
[dynamics]
t1 = 1.0
steps = 20
[algorithm]
name = "GRAPE"
max_episode = 2
[task]
name = "mintime"
target = 100.0
search = "forward"
"""


@pytest.fixture()
def runner():
    return CliRunner()


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_bounds_success_and_summary(tmp_path, runner):
    cfg = write(tmp_path, "bounds.toml", BOUNDS)
    out = str(tmp_path / "run")
    res = runner.invoke(main, ["bounds", "--config", cfg, "--output-dir", out])
    assert res.exit_code == 0, res.output
    assert "QFI" in res.output
    assert art.read_f(out + "/f.csv")[0] == pytest.approx(4.0, abs=1e-8)


def test_config_error_exits_2(tmp_path, runner):
    cfg = write(tmp_path, "bad.toml", BOUNDS.replace("schema = 1", "schema = 9"))
    res = runner.invoke(main, ["bounds", "--config", cfg])
    assert res.exit_code == 2
    assert "config error" in res.output


def test_task_mismatch_exits_2(tmp_path, runner):
    cfg = write(tmp_path, "bounds.toml", BOUNDS)
    res = runner.invoke(main, ["copt", "--config", cfg])
    assert res.exit_code == 2
    assert "declares task" in res.output


def test_numerical_error_exits_3(tmp_path, runner):
    # blind measurement and no pinned working point: the x_opt search sees a
    # singular CFIM at every grid point
    cfg_text = ADAPT.replace("x_opt = 0.0\n", "") + """
[objective]
M = [[[[0.5, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.5, 0.0]]], [[[0.5, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.5, 0.0]]]]
"""
    cfg = write(tmp_path, "blind.toml", cfg_text)
    ypath = str(tmp_path / "y.csv")
    art.write_y(ypath, [0, 1, 0])
    res = runner.invoke(
        main,
        ["adapt", "replay", "--config", cfg, "--outcomes", ypath,
         "--output-dir", str(tmp_path / "out")],
    )
    assert res.exit_code == 3, res.output
    assert "numerical error" in res.output


def test_mintime_unreached_exits_4(tmp_path, runner):
    cfg = write(tmp_path, "mt.toml", MINTIME_UNREACHABLE)
    res = runner.invoke(
        main, ["mintime", "--config", cfg, "--output-dir", str(tmp_path / "out")]
    )
    assert res.exit_code == 4
    assert "not reached" in res.output
    # artifacts still land for inspection
    assert (tmp_path / "out" / "manifest.json").exists()


def test_rerun_writes_identical_artifacts(tmp_path, runner):
    cfg = write(tmp_path, "bayes.toml", BAYES)
    for sub in ("a", "b"):
        res = runner.invoke(
            main, ["bayes", "--config", cfg, "--output-dir", str(tmp_path / sub)]
        )
        assert res.exit_code == 0, res.output
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["artifacts"] == mb["artifacts"]
    assert ma["config_sha256"] == mb["config_sha256"]


def test_seed_override_lands_in_manifest(tmp_path, runner):
    cfg = write(tmp_path, "bayes.toml", BAYES)
    res = runner.invoke(
        main,
        ["bayes", "--config", cfg, "--seed", "99", "--output-dir", str(tmp_path / "s")],
    )
    assert res.exit_code == 0, res.output
    m = json.loads((tmp_path / "s" / "manifest.json").read_text())
    assert m["seed"] == 99
    ys = art.read_y(str(tmp_path / "s" / "y.csv"))
    res0 = runner.invoke(
        main, ["bayes", "--config", cfg, "--output-dir", str(tmp_path / "d")]
    )
    assert res0.exit_code == 0
    assert not np.array_equal(ys, art.read_y(str(tmp_path / "d" / "y.csv")))


def test_save_all_flag(tmp_path, runner):
    cfg = write(tmp_path, "bayes.toml", BAYES)
    res = runner.invoke(
        main,
        ["bayes", "--config", cfg, "--save-all", "--output-dir", str(tmp_path / "s")],
    )
    assert res.exit_code == 0, res.output
    assert len(art.read_pout(str(tmp_path / "s" / "pout.csv"))) == 40


def test_adapt_replay_offsets(tmp_path, runner):
    cfg = write(tmp_path, "adapt.toml", ADAPT)
    ypath = str(tmp_path / "y_in.csv")
    rng = np.random.default_rng(11)
    art.write_y(ypath, rng.integers(0, 2, size=30))
    out = str(tmp_path / "out")
    res = runner.invoke(
        main,
        ["adapt", "replay", "--config", cfg, "--outcomes", ypath, "--output-dir", out],
    )
    assert res.exit_code == 0, res.output
    assert "u next" in res.output
    xout = art.read_xout(out + "/xout.csv")
    assert xout.shape == (30, 2)
    assert np.all(xout[:10, 1] == 0.0)
    assert np.any(xout[10:, 1] != 0.0)
    # replayed y.csv echoes the input stream
    assert np.array_equal(art.read_y(out + "/y.csv"), art.read_y(ypath))


def test_adapt_replay_rerun_is_bit_identical(tmp_path, runner):
    cfg = write(tmp_path, "adapt.toml", ADAPT)
    ypath = str(tmp_path / "y_in.csv")
    art.write_y(ypath, np.random.default_rng(4).integers(0, 2, size=20))
    sums = []
    for sub in ("a", "b"):
        out = str(tmp_path / sub)
        res = runner.invoke(
            main,
            ["adapt", "replay", "--config", cfg, "--outcomes", ypath,
             "--output-dir", out],
        )
        assert res.exit_code == 0, res.output
        sums.append({
            name: art.sha256_file(f"{out}/{name}")
            for name in ("y.csv", "xout.csv", "pout.csv")
        })
    assert sums[0] == sums[1]


def test_missing_config_file(runner):
    res = runner.invoke(main, ["bounds", "--config", "/does/not/exist.toml"])
    assert res.exit_code != 0


def test_help_lists_all_tasks(runner):
    res = runner.invoke(main, ["--help"])
    assert res.exit_code == 0
    for name in ("bounds", "bayes", "copt", "sopt", "mopt", "compopt",
                 "mintime", "adapt", "serve"):
        assert name in res.output
