"""Deterministic policy evaluation, episode metadata logs, benchmark CSV.

Evaluation reruns fresh episodes with an explicitly seeded env (episode k is
reseeded with seed + k), aggregates metrics across seed runs, and upserts one
row per experiment into the append-only ``benchmark.csv``.  The episode log
captures the per-step quantities useful for debugging a new environment:
joint angles, end-effector and goal positions, action, reward, distance and
its finite differences.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agents import EVAL_SEED_OFFSET, PolicyArtifact, policy_from_json
from .envs import EnvConfig, config_to_json, make_env, registry_lookup
from .errors import CorruptDataError, LifecycleError, ValidationError
from .experiment import (
    ExperimentRecord,
    STATUS_COMPLETE,
    load_experiment,
    seed_dir,
    seed_run_statuses,
    total_train_walltime,
)
from .ioutil import atomic_write_text, exclusive_lock


@dataclass
class EpisodeRecord:
    episode_return: float
    final_distance_m: float
    success_flags: tuple[bool, ...]


def _check_dimensions(policy: PolicyArtifact, config: EnvConfig) -> None:
    if policy.net is not None:
        if policy.net.in_dim != config.obs_dim():
            raise ValidationError(
                f"policy expects obs dim {policy.net.in_dim}, env provides {config.obs_dim()}"
            )
        if policy.net.out_dim != config.n_joints:
            raise ValidationError(
                f"policy outputs {policy.net.out_dim} actions, env expects {config.n_joints}"
            )
    elif policy.n_actions != config.n_joints:
        raise ValidationError(
            f"policy outputs {policy.n_actions} actions, env expects {config.n_joints}"
        )


def evaluate_policy(
    policy: PolicyArtifact,
    env_id: str,
    n_episodes: int = 100,
    deterministic: bool = True,
    seed: int = 0,
    goal_override: np.ndarray | None = None,
) -> list[EpisodeRecord]:
    """Run n_episodes fresh episodes and record return, final distance, flags.

    Episode k reseeds the env with seed + k.  ``goal_override`` is a test and
    debugging hook that pins the goal after every reset, bypassing goal_box
    sampling entirely.
    """
    if n_episodes < 1:
        raise ValidationError(f"n_episodes must be >= 1, got {n_episodes}")
    config = registry_lookup(env_id)
    _check_dimensions(policy, config)
    env = make_env(config, seed=seed)
    act_rng = np.random.default_rng(seed)
    records = []
    for k in range(n_episodes):
        obs = env.reset(seed=seed + k)
        if goal_override is not None:
            obs = env.set_goal(goal_override, unchecked=True)
        episode_return = 0.0
        result = None
        for _ in range(config.episode_len):
            result = env.step(policy.act(obs, deterministic, act_rng))
            episode_return += result.reward
            obs = result.observation
        records.append(
            EpisodeRecord(episode_return, result.info["distance"], result.info["success_flags"])
        )
    return records


@dataclass
class EvalMetrics:
    mean_return: float
    std_return: float
    success_ratios: tuple[float, ...]  # one per threshold, monotone non-decreasing
    mean_final_distance_mm: float
    n_episodes: int  # per seed
    n_seeds: int


def aggregate_across_seeds(per_seed: list[list[EpisodeRecord]]) -> EvalMetrics:
    """Seed-averaged metrics.

    mean_return averages over all (seed, episode) pairs; std_return is the
    population standard deviation of the per-seed mean returns (0.0 for a
    single seed, by construction).
    """
    if not per_seed or any(not records for records in per_seed):
        raise ValidationError("need at least one seed with at least one episode")
    lengths = {len(records) for records in per_seed}
    if len(lengths) != 1:
        raise ValidationError(f"unequal episode counts across seeds: {sorted(lengths)}")
    all_records = [r for records in per_seed for r in records]
    seed_means = np.array(
        [np.mean([r.episode_return for r in records]) for records in per_seed]
    )
    n_thresholds = len(all_records[0].success_flags)
    ratios = tuple(
        float(np.mean([r.success_flags[i] for r in all_records]))
        for i in range(n_thresholds)
    )
    return EvalMetrics(
        mean_return=float(np.mean([r.episode_return for r in all_records])),
        std_return=float(np.std(seed_means)),
        success_ratios=ratios,
        mean_final_distance_mm=float(np.mean([r.final_distance_m for r in all_records]) * 1e3),
        n_episodes=len(per_seed[0]),
        n_seeds=len(per_seed),
    )


@dataclass
class EpisodeLog:
    """Per-step metadata for one evaluation episode (row t = after step t+1).

    velocity[0] is 0 and acceleration[0:2] are 0: the finite differences are
    defined between logged rows only.
    """

    env_id: str
    angles: np.ndarray  # (T, n)
    ee: np.ndarray  # (T, 3)
    goal: np.ndarray  # (T, 3)
    actions: np.ndarray  # (T, n)
    rewards: np.ndarray
    distances: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray

    @property
    def n_joints(self) -> int:
        return self.angles.shape[1]

    def __len__(self) -> int:
        return len(self.rewards)


def log_episode(policy: PolicyArtifact, env_id: str, seed: int = 0) -> EpisodeLog:
    """One fully-logged episode (logged actions are as applied, post-clamp)."""
    config = registry_lookup(env_id)
    _check_dimensions(policy, config)
    env = make_env(config, seed=seed)
    act_rng = np.random.default_rng(seed)
    obs = env.reset(seed=seed)
    angles, ee, goal, actions, rewards, distances = [], [], [], [], [], []
    for _ in range(config.episode_len):
        action = np.clip(policy.act(obs, True, act_rng), -1.0, 1.0)
        result = env.step(action)
        angles.append(env.arm_state.angles.copy())
        ee.append(env.arm_state.ee_position.copy())
        goal.append(env.goal.copy())
        actions.append(action)
        rewards.append(result.reward)
        distances.append(result.info["distance"])
        obs = result.observation
    distances = np.array(distances)
    velocities = np.zeros_like(distances)
    velocities[1:] = np.diff(distances)
    accelerations = np.zeros_like(distances)
    accelerations[2:] = np.diff(velocities)[1:]
    return EpisodeLog(
        env_id=env_id,
        angles=np.array(angles),
        ee=np.array(ee),
        goal=np.array(goal),
        actions=np.array(actions),
        rewards=np.array(rewards),
        distances=distances,
        velocities=velocities,
        accelerations=accelerations,
    )


def episode_log_header(n_joints: int) -> list[str]:
    return (
        ["step"]
        + [f"q{i + 1}" for i in range(n_joints)]
        + ["ee_x", "ee_y", "ee_z", "goal_x", "goal_y", "goal_z"]
        + [f"a{i + 1}" for i in range(n_joints)]
        + ["reward", "distance_m", "velocity", "acceleration"]
    )


def episode_log_to_csv(log: EpisodeLog) -> str:
    lines = [",".join(episode_log_header(log.n_joints))]
    for t in range(len(log)):
        values = (
            list(log.angles[t]) + list(log.ee[t]) + list(log.goal[t])
            + list(log.actions[t])
            + [log.rewards[t], log.distances[t], log.velocities[t], log.accelerations[t]]
        )
        lines.append(",".join([str(t)] + [repr(float(v)) for v in values]))
    return "\n".join(lines) + "\n"


BENCHMARK_HEADER = [
    "exp_id", "env_id", "algo", "n_timesteps", "n_seeds", "n_eval_episodes",
    "mean_return", "std_return",
    "success_ratio_5mm", "success_ratio_10mm", "success_ratio_20mm", "success_ratio_50mm",
    "mean_final_distance_mm", "train_walltime_s", "env_config_json", "hyperparams_json",
]

_BENCHMARK_INT_COLUMNS = {"exp_id", "n_timesteps", "n_seeds", "n_eval_episodes"}
_BENCHMARK_FLOAT_COLUMNS = {
    "mean_return", "std_return", "success_ratio_5mm", "success_ratio_10mm",
    "success_ratio_20mm", "success_ratio_50mm", "mean_final_distance_mm",
    "train_walltime_s",
}

BENCHMARK_NUMERIC_METRICS = tuple(
    c for c in BENCHMARK_HEADER if c in _BENCHMARK_INT_COLUMNS | _BENCHMARK_FLOAT_COLUMNS
)


def benchmark_rows_to_csv(rows: list[dict]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(BENCHMARK_HEADER)
    for row in sorted(rows, key=lambda r: r["exp_id"]):
        writer.writerow(
            [
                repr(row[c]) if c in _BENCHMARK_FLOAT_COLUMNS else row[c]
                for c in BENCHMARK_HEADER
            ]
        )
    return buffer.getvalue()


def benchmark_rows_from_csv(text: str, path: str = "benchmark.csv") -> list[dict]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CorruptDataError(f"{path}: empty file") from None
    if header != BENCHMARK_HEADER:
        raise CorruptDataError(f"{path}: unexpected header {header!r}")
    rows = []
    for i, cells in enumerate(reader, start=2):
        if not cells:
            continue
        if len(cells) != len(BENCHMARK_HEADER):
            raise CorruptDataError(f"{path}: line {i} has {len(cells)} fields")
        row = {}
        for name, cell in zip(BENCHMARK_HEADER, cells):
            try:
                if name in _BENCHMARK_INT_COLUMNS:
                    row[name] = int(cell)
                elif name in _BENCHMARK_FLOAT_COLUMNS:
                    row[name] = float(cell)
                else:
                    row[name] = cell
            except ValueError:
                raise CorruptDataError(
                    f"{path}: line {i}: bad value {cell!r} for column {name}"
                ) from None
        rows.append(row)
    return rows


def read_benchmark(workspace: Path) -> list[dict]:
    path = Path(workspace) / "benchmark.csv"
    if not path.is_file():
        return []
    return benchmark_rows_from_csv(path.read_text(encoding="utf-8"), str(path))


def metrics_to_benchmark_row(
    metrics: EvalMetrics, record: ExperimentRecord, train_walltime_s: float
) -> dict:
    config = registry_lookup(record.env_id)
    return {
        "exp_id": record.exp_id,
        "env_id": record.env_id,
        "algo": record.algo,
        "n_timesteps": record.n_timesteps,
        "n_seeds": metrics.n_seeds,
        "n_eval_episodes": metrics.n_episodes,
        "mean_return": metrics.mean_return,
        "std_return": metrics.std_return,
        "success_ratio_5mm": metrics.success_ratios[0],
        "success_ratio_10mm": metrics.success_ratios[1],
        "success_ratio_20mm": metrics.success_ratios[2],
        "success_ratio_50mm": metrics.success_ratios[3],
        "mean_final_distance_mm": metrics.mean_final_distance_mm,
        "train_walltime_s": train_walltime_s,
        "env_config_json": config_to_json(config),
        "hyperparams_json": json.dumps(record.hyperparams, separators=(",", ":")),
    }


def append_benchmark_row(
    workspace: Path,
    exp_id: int,
    metrics: EvalMetrics,
    record: ExperimentRecord,
    train_walltime_s: float = 0.0,
) -> None:
    """Insert-or-replace the benchmark row for one experiment (keyed on exp_id).

    Holds an exclusive advisory lock for the read-modify-write, so concurrent
    evaluators serialize instead of clobbering each other.
    """
    workspace = Path(workspace)
    path = workspace / "benchmark.csv"
    new_row = metrics_to_benchmark_row(metrics, record, train_walltime_s)
    with exclusive_lock(workspace / "benchmark.csv.lock"):
        rows = benchmark_rows_from_csv(path.read_text(encoding="utf-8"), str(path)) if path.is_file() else []
        rows = [r for r in rows if r["exp_id"] != exp_id] + [new_row]
        atomic_write_text(path, benchmark_rows_to_csv(rows))


def evaluate_experiment(
    workspace: Path,
    exp_id: int,
    n_episodes: int = 100,
    deterministic: bool = True,
    allow_partial: bool = False,
) -> tuple[EvalMetrics, list[list[EpisodeRecord]]]:
    """Evaluate every completed seed run of an experiment and aggregate.

    The eval env for seed run k is seeded with base_seed + k + 3000 (a fixed
    offset away from all training streams).
    """
    record = load_experiment(workspace, exp_id)
    if record.status != STATUS_COMPLETE and not allow_partial:
        raise LifecycleError(
            f"experiment {exp_id} has status {record.status}; "
            f"pass allow_partial to evaluate completed seeds anyway"
        )
    statuses = seed_run_statuses(workspace, exp_id)
    completed = [k for k, status in statuses.items() if status == "complete"]
    if not completed:
        raise ValidationError(f"experiment {exp_id} has no completed seed runs")
    per_seed = []
    for k in completed:
        policy = policy_from_json(
            (seed_dir(workspace, exp_id, k) / "policy.json").read_text(encoding="utf-8")
        )
        per_seed.append(
            evaluate_policy(
                policy, record.env_id, n_episodes, deterministic,
                seed=record.base_seed + k + EVAL_SEED_OFFSET,
            )
        )
    metrics = aggregate_across_seeds(per_seed)
    append_benchmark_row(
        workspace, exp_id, metrics, record,
        train_walltime_s=total_train_walltime(workspace, exp_id),
    )
    return metrics, per_seed
