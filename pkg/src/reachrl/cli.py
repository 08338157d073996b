"""Command-line interface: train, evaluate, benchmark, tune, plot, list-envs.

Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.  The
train subcommand prints ``exp_id=<n>`` as its final stdout line so shell
pipelines can chain train -> evaluate.  All output is plain UTF-8 text (no
color codes); every filesystem write stays under the workspace, which
defaults to $RL_REACH_WORKSPACE or ./experiments.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .agents import EVAL_SEED_OFFSET, SUPPORTED_ALGOS, policy_from_json
from .envs import registered_env_ids, registry_lookup
from .errors import LifecycleError, ReachError, ValidationError
from .experiment import (
    DEFAULT_WORKSPACE,
    STATUS_COMPLETE,
    create_experiment,
    load_experiment,
    run_experiment,
    seed_dir,
    seed_run_statuses,
)
from .evaluation import evaluate_experiment, log_episode
from .hypertune import default_space, run_study
from .report import DEFAULT_SMOOTHING_WINDOW, emit_benchmark_comparison, emit_episode_panels, emit_training_curves


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems instead of exiting with code 2."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _default_workspace() -> str:
    return os.environ.get("RL_REACH_WORKSPACE", DEFAULT_WORKSPACE)


def _parse_hp_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def _parse_hps(pairs: list[str] | None) -> dict:
    hyperparams = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ValidationError(f"--hp expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        hyperparams[key] = _parse_hp_value(value)
    return hyperparams


def build_parser() -> _Parser:
    parser = _Parser(prog="reachrl", description=__doc__.split("\n", 1)[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def add_workspace(p):
        p.add_argument(
            "--workspace", default=_default_workspace(),
            help="workspace directory (default: $RL_REACH_WORKSPACE or ./experiments)",
        )

    p = sub.add_parser("train", help="create and run a multi-seed experiment")
    p.add_argument("--algo", required=True, help=f"one of: {', '.join(SUPPORTED_ALGOS)}")
    p.add_argument("--env", required=True, help="registered environment ID")
    p.add_argument("--n-timesteps", required=True, type=int)
    p.add_argument("--n-seeds", required=True, type=int)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--parallel", type=int, default=1, help="max concurrent seed runs")
    p.add_argument(
        "--hp", action="append", metavar="KEY=VALUE",
        help="hyperparameter override (repeatable)",
    )
    add_workspace(p)

    p = sub.add_parser("evaluate", help="evaluate a trained experiment")
    p.add_argument("--exp-id", required=True, type=int)
    p.add_argument("--n-eval-episodes", type=int, default=100)
    p.add_argument("--stochastic", action="store_true", help="sample instead of mean actions")
    p.add_argument("--allow-partial", action="store_true", help="evaluate completed seeds of a failed experiment")
    p.add_argument("--log-episode", action="store_true", help="also emit one episode log and its panels")
    add_workspace(p)

    p = sub.add_parser("benchmark", help="compare experiments on one metric")
    p.add_argument("--exp-ids", required=True, help="comma-separated experiment IDs")
    p.add_argument("--metric", required=True)
    add_workspace(p)

    p = sub.add_parser("tune", help="run a hyperparameter study")
    p.add_argument("--algo", required=True)
    p.add_argument("--env", required=True)
    p.add_argument("--n-trials", required=True, type=int)
    p.add_argument("--timesteps-per-trial", required=True, type=int)
    p.add_argument("--checkpoints", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    add_workspace(p)

    p = sub.add_parser("plot", help="training curves for one experiment")
    p.add_argument("--exp-id", required=True, type=int)
    p.add_argument("--window", type=int, default=DEFAULT_SMOOTHING_WINDOW)
    add_workspace(p)

    p = sub.add_parser("list-envs", help="list the registered environment variants")

    return parser


def cmd_train(args) -> int:
    workspace = Path(args.workspace)
    record = create_experiment(
        workspace, args.algo, args.env, args.n_timesteps, args.n_seeds,
        base_seed=args.base_seed, hyperparams=_parse_hps(args.hp),
    )
    print(f"created experiment {record.exp_id} ({record.algo} on {record.env_id}, "
          f"{record.n_seeds} seeds x {record.n_timesteps} timesteps)")
    record = run_experiment(workspace, record.exp_id, parallelism=args.parallel)
    print(f"status: {record.status}")
    print(f"exp_id={record.exp_id}")
    return 0 if record.status == STATUS_COMPLETE else 2


def cmd_evaluate(args) -> int:
    workspace = Path(args.workspace)
    metrics, _ = evaluate_experiment(
        workspace, args.exp_id, n_episodes=args.n_eval_episodes,
        deterministic=not args.stochastic, allow_partial=args.allow_partial,
    )
    fields = [
        ("mean_return", metrics.mean_return),
        ("std_return", metrics.std_return),
        ("success_ratio_5mm", metrics.success_ratios[0]),
        ("success_ratio_10mm", metrics.success_ratios[1]),
        ("success_ratio_20mm", metrics.success_ratios[2]),
        ("success_ratio_50mm", metrics.success_ratios[3]),
        ("mean_final_distance_mm", metrics.mean_final_distance_mm),
        ("n_episodes_per_seed", metrics.n_episodes),
        ("n_seeds", metrics.n_seeds),
    ]
    for name, value in fields:
        text = f"{value:.6g}" if isinstance(value, float) else str(value)
        print(f"{name:<24} {text}")
    if args.log_episode:
        record = load_experiment(workspace, args.exp_id)
        completed = [
            k for k, s in seed_run_statuses(workspace, args.exp_id).items() if s == "complete"
        ]
        policy = policy_from_json(
            (seed_dir(workspace, args.exp_id, completed[0]) / "policy.json").read_text(encoding="utf-8")
        )
        episode = log_episode(policy, record.env_id, seed=record.base_seed + EVAL_SEED_OFFSET)
        exp_directory = workspace / f"exp_{args.exp_id}"
        from .evaluation import episode_log_to_csv
        from .ioutil import atomic_write_text

        csv_path = exp_directory / "episode_eval.csv"
        atomic_write_text(csv_path, episode_log_to_csv(episode))
        svg_path, _ = emit_episode_panels(episode, exp_directory)
        print(f"episode log: {csv_path}")
        print(f"episode panels: {svg_path}")
    return 0


def cmd_benchmark(args) -> int:
    try:
        exp_ids = [int(part) for part in args.exp_ids.split(",") if part]
    except ValueError:
        raise ValidationError(f"--exp-ids expects comma-separated integers, got {args.exp_ids!r}")
    if not exp_ids:
        raise ValidationError("--exp-ids is empty")
    svg_path, csv_path = emit_benchmark_comparison(Path(args.workspace), exp_ids, args.metric)
    print(f"benchmark chart: {svg_path}")
    print(f"benchmark data: {csv_path}")
    return 0


def cmd_tune(args) -> int:
    report = run_study(
        Path(args.workspace), args.algo.lower(), args.env,
        default_space(args.algo.lower()), args.n_trials,
        args.timesteps_per_trial, checkpoints=args.checkpoints, seed=args.seed,
    )
    for trial in report.trials:
        final = "" if trial.final_value is None else f" final={trial.final_value:.6g}"
        print(f"trial {trial.trial_id}: {trial.state}{final} config={trial.config}")
    print(f"best trial: {report.best.trial_id} (value {report.best.final_value:.6g})")
    print(f"study dir: {report.study_dir}")
    return 0


def cmd_plot(args) -> int:
    svg_path, csv_path = emit_training_curves(Path(args.workspace), args.exp_id, args.window)
    print(f"training curves: {svg_path}")
    print(f"curve data: {csv_path}")
    return 0


def cmd_list_envs(args) -> int:
    print(f"{'env_id':<18} {'action_mode':<14} {'obs_mode':<18} {'reward_type':<14} arm")
    for env_id in registered_env_ids():
        config = registry_lookup(env_id)
        print(
            f"{env_id:<18} {config.action_mode.value:<14} {config.obs_mode.value:<18} "
            f"{config.reward_type.value:<14} {config.arm.name}"
        )
    return 0


_COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
    "tune": cmd_tune,
    "plot": cmd_plot,
    "list-envs": cmd_list_envs,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(str(err), file=sys.stderr)
        return 1
    except SystemExit as err:  # --help exits 0 through here
        return int(err.code or 0)
    try:
        return _COMMANDS[args.subcommand](args)
    except (ValidationError, LifecycleError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (ReachError, OSError) as err:
        print(f"runtime failure: {err}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
