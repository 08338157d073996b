"""Training entry points shared by every algorithm.

One integer seed fully determines a run; the trainer derives its streams
from it with fixed offsets: env seed = s, network init seed = s + 1000,
action/exploration noise seed = s + 2000 (evaluation envs use s + 3000).

A trainer owns its env, nets and rngs exclusively, so runs with different
seeds can execute concurrently with zero shared mutable state.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .envs import make_env, registry_lookup
from .errors import ValidationError
from .nets import Mlp, gaussian_sample, mlp_forward, mlp_from_dict, mlp_to_dict
from .ppo import PpoConfig, PpoTrainer
from .td3 import Td3Config, Td3Trainer

NET_SEED_OFFSET = 1000
NOISE_SEED_OFFSET = 2000
EVAL_SEED_OFFSET = 3000

SUPPORTED_ALGOS = ("ppo", "td3", "random")

TRAINING_LOG_HEADER = "timestep,episode,episode_return,episode_final_distance_m"


@dataclass
class LogRow:
    timestep: int
    episode: int
    episode_return: float
    episode_final_distance_m: float


@dataclass
class TrainingLog:
    """One row per completed training episode, timesteps strictly increasing."""

    rows: list[LogRow] = field(default_factory=list)

    def add(self, timestep, episode, episode_return, final_distance):
        self.rows.append(LogRow(int(timestep), int(episode), float(episode_return), float(final_distance)))


def training_log_to_csv(log: TrainingLog) -> str:
    lines = [TRAINING_LOG_HEADER]
    for r in log.rows:
        lines.append(
            f"{r.timestep},{r.episode},{r.episode_return!r},{r.episode_final_distance_m!r}"
        )
    return "\n".join(lines) + "\n"


def training_log_from_csv(text: str) -> TrainingLog:
    lines = text.strip("\n").split("\n")
    if lines[0] != TRAINING_LOG_HEADER:
        raise ValidationError(f"unexpected training log header: {lines[0]!r}")
    log = TrainingLog()
    for line in lines[1:]:
        if not line:
            continue
        t, e, ret, dist = line.split(",")
        log.add(int(t), int(e), float(ret), float(dist))
    return log


@dataclass
class RandomConfig:
    """The random-action baseline has no knobs beyond the step budget."""

    n_timesteps: int = 100_000

    def __post_init__(self):
        if self.n_timesteps < 1:
            raise ValidationError(f"n_timesteps must be >= 1, got {self.n_timesteps}")


@dataclass
class PolicyArtifact:
    """A trained policy in serialisable form.

    kind "gaussian": action ~ N(net(obs), exp(log_std)); deterministic = mean.
    kind "tanh": action = tanh(net(obs)) (deterministic actor).
    kind "random": uniform in [-1, 1]; deterministic = zero action.
    """

    kind: str
    net: Mlp | None = None
    log_std: np.ndarray | None = None
    n_actions: int = 0

    def act(self, obs, deterministic: bool = True, rng: np.random.Generator | None = None):
        if self.kind == "random":
            if deterministic:
                return np.zeros(self.n_actions)
            return rng.uniform(-1.0, 1.0, size=self.n_actions)
        if self.kind == "tanh":
            return np.tanh(mlp_forward(self.net, obs))
        mean = mlp_forward(self.net, obs)
        if deterministic:
            return mean
        action, _ = gaussian_sample(mean, self.log_std, rng)
        return action


def policy_to_dict(policy: PolicyArtifact) -> dict:
    doc = {"kind": policy.kind}
    if policy.net is not None:
        doc.update(mlp_to_dict(policy.net))
    else:
        doc.update({"layer_shapes": [], "weights": [], "biases": []})
    doc["log_std"] = [] if policy.log_std is None else policy.log_std.tolist()
    if policy.kind == "random":
        doc["n_actions"] = policy.n_actions
    return doc


def policy_from_dict(doc: dict) -> PolicyArtifact:
    kind = doc.get("kind", "gaussian")
    net = mlp_from_dict(doc) if doc["layer_shapes"] else None
    log_std = np.asarray(doc["log_std"], dtype=float) if doc["log_std"] else None
    if kind == "random":
        n_actions = int(doc["n_actions"])
    else:
        n_actions = net.out_dim
    return PolicyArtifact(kind=kind, net=net, log_std=log_std, n_actions=n_actions)


def policy_to_json(policy: PolicyArtifact) -> str:
    return json.dumps(policy_to_dict(policy)) + "\n"


def policy_from_json(text: str) -> PolicyArtifact:
    return policy_from_dict(json.loads(text))


_CONFIG_CLASSES = {"ppo": PpoConfig, "td3": Td3Config, "random": RandomConfig}


def make_algo_config(algo: str, n_timesteps: int, hyperparams: dict | None = None):
    """Build an algorithm config from defaults plus hyperparameter overrides."""
    if algo not in SUPPORTED_ALGOS:
        raise ValidationError(
            f"unknown algo {algo!r}; supported: {', '.join(SUPPORTED_ALGOS)}"
        )
    cls = _CONFIG_CLASSES[algo]
    hyperparams = dict(hyperparams or {})
    if "n_timesteps" in hyperparams:
        raise ValidationError("n_timesteps is set by the experiment, not a hyperparameter")
    valid = {f.name: f.type for f in dataclasses.fields(cls)}
    unknown = sorted(set(hyperparams) - set(valid))
    if unknown:
        raise ValidationError(
            f"unknown hyperparameters for {algo}: {', '.join(unknown)}; "
            f"valid: {', '.join(sorted(valid))}"
        )
    coerced = {}
    for name, value in hyperparams.items():
        coerced[name] = int(value) if valid[name] == "int" else float(value)
    return cls(n_timesteps=n_timesteps, **coerced)


def _train_random(env, config: RandomConfig, seed: int, log, on_step=None):
    rng = np.random.default_rng(seed + NOISE_SEED_OFFSET)
    act_dim = env.config.n_joints
    env.reset(seed=seed)
    episode_return = 0.0
    episode = 0
    for step in range(1, config.n_timesteps + 1):
        result = env.step(rng.uniform(-1.0, 1.0, size=act_dim))
        episode_return += result.reward
        if result.done:
            episode += 1
            log.add(step, episode, episode_return, result.info["distance"])
            episode_return = 0.0
            env.reset()
        if on_step is not None and not on_step(step):
            break
    return PolicyArtifact(kind="random", n_actions=act_dim)


def train(
    algo: str,
    env_id: str,
    seed: int,
    config=None,
    checkpoint_steps: tuple[int, ...] = (),
    checkpoint_fn: Callable[[int, PolicyArtifact], bool] | None = None,
) -> tuple[PolicyArtifact, TrainingLog]:
    """Run one fully deterministic training run and return its artifacts.

    ``checkpoint_fn(step, policy)`` fires when training crosses each step in
    ``checkpoint_steps``; returning False stops the run early (used by the
    hyperparameter study pruner).  Raises NumericError with the partial log
    attached if training diverges.
    """
    algo = algo.lower()
    if algo not in SUPPORTED_ALGOS:
        raise ValidationError(
            f"unknown algo {algo!r}; supported: {', '.join(SUPPORTED_ALGOS)}"
        )
    registry_lookup(env_id)
    if config is None:
        config = make_algo_config(algo, n_timesteps=100_000)
    log = TrainingLog()
    env = make_env(env_id, seed=seed)

    on_step = None
    if checkpoint_fn is not None and checkpoint_steps:
        pending = sorted(checkpoint_steps)

        def on_step(step, _pending=pending):
            while _pending and step >= _pending[0]:
                target = _pending.pop(0)
                if not checkpoint_fn(target, current_artifact()):
                    return False
            return True

    if algo == "random":
        current_artifact = lambda: PolicyArtifact(kind="random", n_actions=env.config.n_joints)
        artifact = _train_random(env, config, seed, log, on_step)
    elif algo == "ppo":
        trainer = PpoTrainer(env, config, seed)
        current_artifact = trainer.artifact
        trainer.train(log, on_step)
        artifact = trainer.artifact()
    else:
        trainer = Td3Trainer(env, config, seed)
        current_artifact = trainer.artifact
        trainer.train(log, on_step)
        artifact = trainer.artifact()
    return artifact, log
