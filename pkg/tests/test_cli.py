import json

import pytest

from reachrl.cli import main
from reachrl.evaluation import read_benchmark

FAST_HP = ["--hp", "rollout_len=64", "--hp", "minibatch_size=32", "--hp", "n_epochs=1"]


def run(argv):
    return main(argv)


def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0
    out = capsys.readouterr().out
    for sub in ("train", "evaluate", "benchmark", "tune", "plot", "list-envs"):
        assert sub in out


@pytest.mark.parametrize("sub", ["train", "evaluate", "benchmark", "tune", "plot"])
def test_subcommand_help_lists_flags(sub, capsys):
    assert run([sub, "--help"]) == 0
    assert "--workspace" in capsys.readouterr().out


def test_list_envs(capsys):
    assert run(["list-envs"]) == 0
    out = capsys.readouterr().out
    assert "reach-v1" in out and "reach-planar-v8" in out
    assert "RelativeJoint" in out and "Sparse" in out


def test_train_prints_exp_id_last(tmp_path, capsys):
    code = run([
        "train", "--algo", "random", "--env", "reach-planar-v1",
        "--n-timesteps", "300", "--n-seeds", "2", "--workspace", str(tmp_path),
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert out.strip().split("\n")[-1] == "exp_id=1"
    assert (tmp_path / "exp_1" / "seed_1" / "training_log.csv").is_file()


def test_train_missing_required_flag(tmp_path, capsys):
    code = run(["train", "--algo", "ppo", "--n-timesteps", "100", "--n-seeds", "1",
                "--workspace", str(tmp_path)])
    assert code == 1
    assert "usage" in capsys.readouterr().err.lower()
    assert list(tmp_path.iterdir()) == []


def test_unknown_flag_rejected(tmp_path, capsys):
    code = run(["train", "--algo", "random", "--env", "reach-planar-v1",
                "--n-timesteps", "100", "--n-seeds", "1",
                "--workspace", str(tmp_path), "--frobnicate", "9"])
    assert code == 1
    assert list(tmp_path.iterdir()) == []


@pytest.mark.parametrize(
    "mangled",
    [
        ["--algo", "nosuch"],               # unknown algorithm
        ["--env", "reach-v99"],             # unknown env
        ["--n-timesteps", "abc"],           # non-integer
        ["--n-seeds", "0"],                 # out of range
        ["--hp", "lr"],                     # malformed key=value
        ["--hp", "bogus=3"],                # unknown hyperparameter
    ],
)
def test_train_mangled_flags_exit_one(tmp_path, mangled, capsys):
    base = {
        "--algo": "random", "--env": "reach-planar-v1",
        "--n-timesteps": "100", "--n-seeds": "1",
    }
    argv = ["train", "--workspace", str(tmp_path)]
    overridden = mangled[0]
    for flag, value in base.items():
        if flag != overridden:
            argv += [flag, value]
    argv += mangled
    assert run(argv) == 1
    assert list(tmp_path.iterdir()) == [], "validation failures must not write"


def test_hp_override_lands_in_config(tmp_path, capsys):
    code = run([
        "train", "--algo", "ppo", "--env", "reach-planar-v1",
        "--n-timesteps", "64", "--n-seeds", "1", "--workspace", str(tmp_path),
        "--hp", "lr=0.001", *FAST_HP,
    ])
    assert code == 0
    doc = json.loads((tmp_path / "exp_1" / "config.json").read_text())
    assert doc["hyperparams"]["lr"] == 0.001
    assert doc["hyperparams"]["rollout_len"] == 64


def test_evaluate_writes_benchmark_row(tmp_path, capsys):
    run(["train", "--algo", "random", "--env", "reach-planar-v1",
         "--n-timesteps", "200", "--n-seeds", "2", "--workspace", str(tmp_path)])
    code = run(["evaluate", "--exp-id", "1", "--n-eval-episodes", "5",
                "--workspace", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "mean_return" in out and "success_ratio_50mm" in out
    rows = read_benchmark(tmp_path)
    assert len(rows) == 1 and rows[0]["exp_id"] == 1
    # re-evaluating upserts, not appends
    run(["evaluate", "--exp-id", "1", "--n-eval-episodes", "5", "--workspace", str(tmp_path)])
    assert len(read_benchmark(tmp_path)) == 1


def test_evaluate_missing_experiment(tmp_path, capsys):
    assert run(["evaluate", "--exp-id", "999", "--workspace", str(tmp_path)]) == 1


def test_evaluate_log_episode_artifacts(tmp_path, capsys):
    run(["train", "--algo", "random", "--env", "reach-planar-v1",
         "--n-timesteps", "100", "--n-seeds", "1", "--workspace", str(tmp_path)])
    code = run(["evaluate", "--exp-id", "1", "--n-eval-episodes", "2",
                "--log-episode", "--workspace", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "exp_1" / "episode_eval.csv").is_file()
    assert (tmp_path / "exp_1" / "episode_panels.svg").is_file()


def test_benchmark_one_bar(tmp_path, capsys):
    run(["train", "--algo", "random", "--env", "reach-planar-v1",
         "--n-timesteps", "100", "--n-seeds", "1", "--workspace", str(tmp_path)])
    run(["evaluate", "--exp-id", "1", "--n-eval-episodes", "3", "--workspace", str(tmp_path)])
    capsys.readouterr()
    code = run(["benchmark", "--exp-ids", "1", "--metric", "mean_return",
                "--workspace", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "benchmark_mean_return.svg" in out
    assert (tmp_path / "figures" / "benchmark_mean_return.svg").is_file()


def test_benchmark_bad_ids(tmp_path):
    assert run(["benchmark", "--exp-ids", "1,x", "--metric", "mean_return",
                "--workspace", str(tmp_path)]) == 1
    assert run(["benchmark", "--exp-ids", "7", "--metric", "mean_return",
                "--workspace", str(tmp_path)]) == 1


def test_plot_window_one_equals_raw_log(tmp_path, capsys):
    run(["train", "--algo", "random", "--env", "reach-planar-v1",
         "--n-timesteps", "500", "--n-seeds", "1", "--workspace", str(tmp_path)])
    code = run(["plot", "--exp-id", "1", "--window", "1", "--workspace", str(tmp_path)])
    assert code == 0
    from reachrl.agents import training_log_from_csv
    from reachrl.report import series_from_csv

    log = training_log_from_csv((tmp_path / "exp_1" / "seed_0" / "training_log.csv").read_text())
    series = series_from_csv((tmp_path / "exp_1" / "training_curves.data.csv").read_text())
    seed0 = next(s for s in series if s.label == "seed_0")
    assert list(seed0.ys) == [r.episode_return for r in log.rows]


def test_tune_single_trial_best_config(tmp_path, capsys):
    code = run([
        "tune", "--algo", "ppo", "--env", "reach-planar-v1", "--n-trials", "1",
        "--timesteps-per-trial", "128", "--checkpoints", "1", "--workspace", str(tmp_path),
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "best trial: 0" in out
    best = json.loads((tmp_path / "studies" / "study_1" / "best_config.json").read_text())
    trials_csv = (tmp_path / "studies" / "study_1" / "trials.csv").read_text()
    assert str(best["rollout_len"]) in trials_csv


def test_corrupt_benchmark_exits_two(tmp_path, capsys):
    run(["train", "--algo", "random", "--env", "reach-planar-v1",
         "--n-timesteps", "100", "--n-seeds", "1", "--workspace", str(tmp_path)])
    (tmp_path / "benchmark.csv").write_text("garbage,header\n1,2\n")
    code = run(["evaluate", "--exp-id", "1", "--n-eval-episodes", "2",
                "--workspace", str(tmp_path)])
    assert code == 2
    assert "runtime failure" in capsys.readouterr().err


def test_workspace_env_var_default(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("RL_REACH_WORKSPACE", str(tmp_path / "ws"))
    code = run(["train", "--algo", "random", "--env", "reach-planar-v1",
                "--n-timesteps", "100", "--n-seeds", "1"])
    assert code == 0
    assert (tmp_path / "ws" / "exp_1" / "config.json").is_file()
