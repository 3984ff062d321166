import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from tcl_rl.cli import EXIT_INPUT, EXIT_USAGE, main


def run(tmp_path, *args, out="out"):
    target = tmp_path / out
    code = main([*args, "--out", str(target)])
    return code, target


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def check_csv(path):
    rows = read_rows(path)
    header = rows[0]
    assert all(not h.replace("_", "").replace(".", "").isdigit() for h in header)
    assert all(len(r) == len(header) for r in rows)
    for r in rows[1:]:
        for cell in r:
            assert "," not in cell
    return rows


def test_simulate_baseline(tmp_path):
    code, out = run(tmp_path, "simulate", "--profile", "constant:1.2", "--horizon", "200", "--step", "1", "--baseline")
    assert code == 0
    rows = check_csv(out / "trajectory.csv")
    assert len(rows) == 201
    header = rows[0]
    assert header[:5] == ["time", "apl", "rpl", "voltage", "k"]
    assert "theta_20" in header and "switch_1" in header
    assert float(rows[1][1]) == pytest.approx(1.4)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["seed"] == 0


def test_simulate_deterministic(tmp_path):
    args = ["simulate", "--k", "0.5", "--stochastic", "--seed", "7"]
    run(tmp_path, *args, out="a")
    run(tmp_path, *args, out="b")
    assert (tmp_path / "a/trajectory.csv").read_bytes() == (tmp_path / "b/trajectory.csv").read_bytes()


def test_sweep_default_rows(tmp_path):
    code, out = run(tmp_path, "sweep")
    assert code == 0
    rows = check_csv(out / "sweep.csv")
    assert [r[0] for r in rows[1:]] == ["baseline", "0.5", "1", "2", "3", "4", "5", "6", "7"]
    assert sum(r[-1] == "1" for r in rows[1:]) == 1


def test_sweep_singleton(tmp_path):
    code, out = run(tmp_path, "sweep", "--ks", "0.5")
    assert code == 0
    assert len(read_rows(out / "sweep.csv")) == 3


def test_sweep_history_feeds_training(tmp_path):
    code, sweep = run(tmp_path, "sweep", "--stochastic", "--samples", "4", out="sweep")
    assert code == 0
    hist = sweep / "apl_history.txt"
    for binning in ("fd", "quantile:10"):
        code, out = run(
            tmp_path, "train", "--stochastic", "--episodes", "3", "--tests", "2", "--repeats", "1",
            "--binning", binning, "--historical", str(hist), out=binning.replace(":", "_"),
        )
        assert code == 0
        assert (out / "qtable_r0.txt").exists()


def test_train_outputs(tmp_path):
    code, out = run(tmp_path, "train", "--stochastic", "--episodes", "200", "--tests", "3", "--repeats", "2")
    assert code == 0
    curve = check_csv(out / "training_curve.csv")
    assert len(curve) == 201
    assert curve[0][:2] == ["episode", "smoothed_mean"]
    tests = check_csv(out / "test_mse.csv")
    assert len(tests) == 1 + 2 * 3
    q = np.loadtxt(out / "qtable_r1.txt")
    assert q.shape == (10, 5)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["n_train_episodes"] == 200


def test_train_defaults_follow_protocol(tmp_path):
    from tcl_rl.cli import build_parser, config_from_args

    args = build_parser().parse_args(["train"])
    cfg = config_from_args(args)
    assert (cfg.n_train_episodes, cfg.n_repeats, cfg.n_test_episodes) == (100, 5, 50)
    assert (cfg.horizon, cfg.control_step, cfg.start_time) == (200, 1, 0)
    args = build_parser().parse_args(["train", "--start", "175", "--horizon", "200"])
    cfg = config_from_args(args)
    assert (cfg.start_time, cfg.start_time + cfg.horizon) == (175, 375)


def test_start_window(tmp_path):
    code, out = run(tmp_path, "simulate", "--start", "175", "--horizon", "200", "--k", "1")
    rows = read_rows(out / "trajectory.csv")
    assert float(rows[1][0]) == 175 and float(rows[-1][0]) == 374


def test_evaluate_replays_training(tmp_path):
    common = ["--stochastic", "--episodes", "4", "--tests", "3", "--repeats", "2"]
    code, tr = run(tmp_path, "train", *common, out="train")
    assert code == 0
    code, ev = run(tmp_path, "evaluate", *common, "--qtables", str(tr), out="eval")
    assert code == 0
    assert (tr / "test_mse.csv").read_bytes() == (ev / "test_mse.csv").read_bytes()


def test_evaluate_generalization_rows(tmp_path):
    common = ["--stochastic", "--episodes", "3", "--tests", "2", "--repeats", "1", "--samples", "3"]
    run(tmp_path, "train", *common, out="train")
    code, ev = run(tmp_path, "evaluate", *common, "--qtables", str(tmp_path / "train"),
                   "--test-horizon", "400", "--ks", "0.5,7", out="eval")
    assert code == 0
    rows = read_rows(ev / "test_mse.csv")
    labels = {r[0] for r in rows[1:]}
    assert "rl" in labels and any(l.startswith("k=") for l in labels)


def test_evaluate_zero_table_is_first_action(tmp_path):
    qfile = tmp_path / "zero.txt"
    np.savetxt(qfile, np.zeros((10, 5)))
    code, ev = run(tmp_path, "evaluate", "--tests", "1", "--qtable", str(qfile))
    assert code == 0
    from tcl_rl.experiment import ExperimentConfig, FixedK, run_episode

    expected = run_episode(FixedK(0.1), ExperimentConfig()).mse
    rows = read_rows(ev / "test_mse.csv")
    assert float(rows[1][3]) == pytest.approx(expected, abs=0)


def test_evaluate_missing_table(tmp_path):
    code, _ = run(tmp_path, "evaluate", "--qtable", str(tmp_path / "nope.txt"))
    assert code == EXIT_INPUT
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2\n3\n")
    code, _ = run(tmp_path, "evaluate", "--qtable", str(bad))
    assert code == EXIT_INPUT
    wrong = tmp_path / "wrong.txt"
    np.savetxt(wrong, np.zeros((3, 5)))
    code, _ = run(tmp_path, "evaluate", "--qtable", str(wrong))
    assert code == EXIT_INPUT


def test_missing_historical_is_input_error(tmp_path):
    code, _ = run(tmp_path, "train", "--binning", "fd")
    assert code == EXIT_INPUT
    code, _ = run(tmp_path, "train", "--binning", "fd", "--historical", str(tmp_path / "none.txt"))
    assert code == EXIT_INPUT


@pytest.mark.parametrize("args", [
    ["simulate", "--horizon", "abc"],
    ["simulate", "--profile", "ramp:1"],
    ["simulate", "--vmin", "1.2"],
    ["train", "--binning", "equal:1,0,10"],
    ["bogus"],
    ["simulate", "--k", "1", "--baseline"],
])
def test_usage_errors(tmp_path, args):
    code, _ = run(tmp_path, *args)
    assert code == EXIT_USAGE


def test_config_file_flags_win(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# settings\nhorizon = 50\nk = 2\nstochastic = true\nseed = 3\n")
    code, out = run(tmp_path, "simulate", "--config", str(conf), "--seed", "4")
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["horizon"] == 50
    assert manifest["config"]["stochastic"] is True
    assert manifest["seed"] == 4
    assert len(read_rows(out / "trajectory.csv")) == 51
    conf.write_text("nonsense = 1\n")
    code, _ = run(tmp_path, "simulate", "--config", str(conf), out="bad")
    assert code == EXIT_USAGE


def test_rerun_byte_identical(tmp_path):
    code, first = run(tmp_path, "train", "--stochastic", "--episodes", "5", "--tests", "2", "--repeats", "2", out="first")
    assert code == 0
    assert main(["rerun", str(first / "manifest.json"), "--out", str(tmp_path / "second")]) == 0
    second = tmp_path / "second"
    for name in ("training_curve.csv", "test_mse.csv", "qtable_r0.txt", "qtable_r1.txt"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "tcl_rl", "simulate", "--horizon", "5", "--out", str(tmp_path / "m")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert len(read_rows(tmp_path / "m/trajectory.csv")) == 6
