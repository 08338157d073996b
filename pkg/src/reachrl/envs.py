"""The reach-task environment family.

An environment variant is a combination of action mode, observation mode and
reward type over one arm model.  Episodes are fixed-horizon: success never
terminates early, which keeps returns comparable across experiments.

Registered variants ("reach-v1".."reach-v8") use the 6-DOF arm; each has a
planar twin ("reach-planar-v1".."reach-planar-v8") on the 2-DOF arm for fast
desk-scale runs.  Distinct EnvInstance objects may run on distinct threads;
one instance is single-owner.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property

import numpy as np

from .arm import ArmModel, apply_joint_command, home_state, make_state, planar_arm, widowx_arm
from .errors import LifecycleError, ValidationError


class ActionMode(str, Enum):
    RELATIVE_JOINT = "RelativeJoint"
    ABSOLUTE_JOINT = "AbsoluteJoint"


class ObsMode(str, Enum):
    JOINTS_GOAL = "JointsGoal"
    JOINTS_GOAL_EE = "JointsGoalEE"
    JOINTS_GOAL_VECTOR = "JointsGoalVector"


class RewardType(str, Enum):
    DENSE_SQUARED = "DenseSquared"
    DENSE_LINEAR = "DenseLinear"
    DELTA_DISTANCE = "DeltaDistance"
    SPARSE = "Sparse"


DEFAULT_EPISODE_LEN = 100
DEFAULT_SUCCESS_THRESHOLDS_MM = (5.0, 10.0, 20.0, 50.0)

# Axis-aligned goal boxes, meters.  Inside the reachable ball of each arm.
SIX_DOF_GOAL_BOX = ((0.10, -0.15, 0.05), (0.25, 0.15, 0.25))
PLANAR_GOAL_BOX = ((0.10, -0.15, 0.0), (0.25, 0.15, 0.0))


@dataclass(frozen=True)
class EnvConfig:
    """One reach-task variant: everything needed to instantiate an episode."""

    env_id: str
    action_mode: ActionMode
    obs_mode: ObsMode
    reward_type: RewardType
    episode_len: int
    goal_box: tuple[tuple[float, float, float], tuple[float, float, float]]
    success_thresholds_mm: tuple[float, ...]
    arm: ArmModel

    def __post_init__(self):
        if self.episode_len < 1:
            raise ValidationError(f"episode_len must be >= 1, got {self.episode_len}")
        thresholds = self.success_thresholds_mm
        if any(t <= 0 for t in thresholds) or any(
            a >= b for a, b in zip(thresholds, thresholds[1:])
        ):
            raise ValidationError(
                f"success thresholds must be positive and strictly increasing, "
                f"got {thresholds}"
            )
        lo, hi = (np.asarray(v, dtype=float) for v in self.goal_box)
        if np.any(lo > hi):
            raise ValidationError(f"goal_box low corner exceeds high corner: {self.goal_box}")
        corners = np.array(
            [[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])]
        )
        radius = self.arm.reach_radius()
        if np.any(np.linalg.norm(corners, axis=1) > radius):
            raise ValidationError(
                f"goal_box must lie inside the arm's reachable ball (radius {radius:.3f} m)"
            )

    @property
    def n_joints(self) -> int:
        return self.arm.n_joints

    def obs_dim(self) -> int:
        extra = {ObsMode.JOINTS_GOAL: 3, ObsMode.JOINTS_GOAL_EE: 6, ObsMode.JOINTS_GOAL_VECTOR: 3}
        return self.n_joints + extra[self.obs_mode]

    @cached_property
    def joint_midpoints(self) -> np.ndarray:
        return 0.5 * (self.arm.lower_limits + self.arm.upper_limits)

    @cached_property
    def joint_half_ranges(self) -> np.ndarray:
        return 0.5 * (self.arm.upper_limits - self.arm.lower_limits)

    @cached_property
    def goal_low(self) -> np.ndarray:
        return np.array(self.goal_box[0], dtype=float)

    @cached_property
    def goal_high(self) -> np.ndarray:
        return np.array(self.goal_box[1], dtype=float)


def _make_registry() -> dict[str, EnvConfig]:
    combos = [
        (ActionMode.RELATIVE_JOINT, ObsMode.JOINTS_GOAL, RewardType.DENSE_SQUARED),
        (ActionMode.RELATIVE_JOINT, ObsMode.JOINTS_GOAL, RewardType.SPARSE),
        (ActionMode.RELATIVE_JOINT, ObsMode.JOINTS_GOAL_VECTOR, RewardType.DENSE_SQUARED),
        (ActionMode.RELATIVE_JOINT, ObsMode.JOINTS_GOAL_VECTOR, RewardType.SPARSE),
        (ActionMode.ABSOLUTE_JOINT, ObsMode.JOINTS_GOAL, RewardType.DENSE_SQUARED),
        (ActionMode.ABSOLUTE_JOINT, ObsMode.JOINTS_GOAL, RewardType.SPARSE),
        (ActionMode.ABSOLUTE_JOINT, ObsMode.JOINTS_GOAL_VECTOR, RewardType.DENSE_SQUARED),
        (ActionMode.ABSOLUTE_JOINT, ObsMode.JOINTS_GOAL_VECTOR, RewardType.SPARSE),
    ]
    six_dof = widowx_arm()
    planar = planar_arm()
    registry: dict[str, EnvConfig] = {}
    for i, (action_mode, obs_mode, reward_type) in enumerate(combos, start=1):
        registry[f"reach-v{i}"] = EnvConfig(
            env_id=f"reach-v{i}",
            action_mode=action_mode,
            obs_mode=obs_mode,
            reward_type=reward_type,
            episode_len=DEFAULT_EPISODE_LEN,
            goal_box=SIX_DOF_GOAL_BOX,
            success_thresholds_mm=DEFAULT_SUCCESS_THRESHOLDS_MM,
            arm=six_dof,
        )
        registry[f"reach-planar-v{i}"] = EnvConfig(
            env_id=f"reach-planar-v{i}",
            action_mode=action_mode,
            obs_mode=obs_mode,
            reward_type=reward_type,
            episode_len=DEFAULT_EPISODE_LEN,
            goal_box=PLANAR_GOAL_BOX,
            success_thresholds_mm=DEFAULT_SUCCESS_THRESHOLDS_MM,
            arm=planar,
        )
    return registry


_REGISTRY = _make_registry()


def registered_env_ids() -> tuple[str, ...]:
    return tuple(_REGISTRY)


def registry_lookup(env_id: str) -> EnvConfig:
    """Return the immutable config for a registered environment ID."""
    try:
        return _REGISTRY[env_id]
    except KeyError:
        valid = ", ".join(_REGISTRY)
        raise ValidationError(f"unknown env_id {env_id!r}; valid IDs: {valid}") from None


def decode_action(config: EnvConfig, action: np.ndarray, current_angles: np.ndarray) -> np.ndarray:
    """Turn a [-1, 1] action vector into a joint command in radians.

    RelativeJoint scales each component by the joint's max_step.  AbsoluteJoint
    maps the action onto the joint range and commands the difference from the
    current angles (the per-step cap is applied later by the arm).
    """
    action = np.asarray(action, dtype=float)
    n = config.n_joints
    if action.shape != (n,):
        raise ValidationError(f"expected action of length {n}, got shape {action.shape}")
    action = np.clip(action, -1.0, 1.0)
    if config.action_mode is ActionMode.RELATIVE_JOINT:
        return action * config.arm.max_steps
    target = config.joint_midpoints + action * config.joint_half_ranges
    return target - current_angles


def compute_reward(config: EnvConfig, distance: float, prev_distance: float) -> float:
    """Reward for ending a step at ``distance`` from the goal."""
    if distance < 0 or prev_distance < 0:
        raise ValidationError(
            f"distances must be non-negative, got {distance}, {prev_distance}"
        )
    kind = config.reward_type
    if kind is RewardType.DENSE_SQUARED:
        return -(distance**2)
    if kind is RewardType.DENSE_LINEAR:
        return -distance
    if kind is RewardType.DELTA_DISTANCE:
        return prev_distance - distance
    # Sparse: 0 inside the tightest success threshold, -1 outside.
    return 0.0 if distance < config.success_thresholds_mm[0] * 1e-3 else -1.0


def compose_observation(config: EnvConfig, angles: np.ndarray, ee: np.ndarray, goal: np.ndarray) -> np.ndarray:
    """Observation vector: affinely scaled joint angles plus goal information.

    Angles map from [lower, upper] to [-1, 1]; positions stay in raw meters.
    """
    scaled = (angles - config.joint_midpoints) / config.joint_half_ranges
    if config.obs_mode is ObsMode.JOINTS_GOAL:
        return np.concatenate([scaled, goal])
    if config.obs_mode is ObsMode.JOINTS_GOAL_EE:
        return np.concatenate([scaled, goal, ee])
    return np.concatenate([scaled, goal - ee])


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


@dataclass
class EnvInstance:
    """A live, seeded episode of one reach-task variant (single-owner)."""

    config: EnvConfig
    rng: np.random.Generator
    arm_state: object = None
    goal: np.ndarray = None
    step_count: int = 0
    prev_distance: float = 0.0
    _needs_reset: bool = field(default=True, repr=False)

    def reset(self, seed: int | None = None) -> np.ndarray:
        """Start a fresh episode: arm at home, goal resampled in the box.

        Passing a seed reseeds the generator; otherwise its stream continues.
        Returns the initial observation.
        """
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.arm_state = home_state(self.config.arm)
        self.goal = self.rng.uniform(self.config.goal_low, self.config.goal_high)
        self.step_count = 0
        self.prev_distance = self.distance()
        self._needs_reset = False
        return self._observe()

    def set_goal(self, goal: np.ndarray, unchecked: bool = False) -> np.ndarray:
        """Debugging hook: place the goal explicitly and return the observation.

        Goals outside goal_box are rejected unless ``unchecked`` is set (tests
        use that to force degenerate placements, e.g. the goal on the home
        pose).
        """
        goal = np.asarray(goal, dtype=float)
        if not unchecked and (np.any(goal < self.config.goal_low) or np.any(goal > self.config.goal_high)):
            raise ValidationError(f"goal {goal.tolist()} outside goal_box")
        self.goal = goal
        self.prev_distance = self.distance()
        return self._observe()

    def distance(self) -> float:
        return float(np.linalg.norm(self.arm_state.ee_position - self.goal))

    def _observe(self) -> np.ndarray:
        return compose_observation(
            self.config, self.arm_state.angles, self.arm_state.ee_position, self.goal
        )

    def step(self, action: np.ndarray) -> StepResult:
        """Apply one action and advance the episode by one step.

        Actions are clamped to [-1, 1] componentwise before decoding.  The
        episode runs for exactly ``episode_len`` steps; ``done`` is purely the
        horizon flag and success never ends an episode early.
        """
        if self._needs_reset or self.step_count >= self.config.episode_len:
            raise LifecycleError("episode is finished; call reset() before stepping")
        command = decode_action(self.config, action, self.arm_state.angles)
        self.arm_state = apply_joint_command(self.config.arm, self.arm_state, command)
        distance = self.distance()
        reward = compute_reward(self.config, distance, self.prev_distance)
        self.prev_distance = distance
        self.step_count += 1
        done = self.step_count == self.config.episode_len
        flags = tuple(
            bool(distance < t * 1e-3) for t in self.config.success_thresholds_mm
        )
        info = {"distance": distance, "success_flags": flags}
        return StepResult(self._observe(), reward, done, info)


def make_env(env_id_or_config: str | EnvConfig, seed: int | None = None) -> EnvInstance:
    """Create and reset an environment instance."""
    config = (
        registry_lookup(env_id_or_config)
        if isinstance(env_id_or_config, str)
        else env_id_or_config
    )
    env = EnvInstance(config=config, rng=np.random.default_rng(seed))
    env.reset()
    return env


def with_reward_type(config: EnvConfig, reward_type: RewardType) -> EnvConfig:
    """Copy of a config with a different reward function (for custom variants)."""
    return replace(config, reward_type=reward_type)


def config_to_dict(config: EnvConfig) -> dict:
    from .arm import model_to_dict

    return {
        "env_id": config.env_id,
        "action_mode": config.action_mode.value,
        "obs_mode": config.obs_mode.value,
        "reward_type": config.reward_type.value,
        "episode_len": config.episode_len,
        "goal_box": [list(config.goal_box[0]), list(config.goal_box[1])],
        "success_thresholds_mm": list(config.success_thresholds_mm),
        "arm": model_to_dict(config.arm),
    }


def config_from_dict(doc: dict) -> EnvConfig:
    from .arm import model_from_dict

    return EnvConfig(
        env_id=doc["env_id"],
        action_mode=ActionMode(doc["action_mode"]),
        obs_mode=ObsMode(doc["obs_mode"]),
        reward_type=RewardType(doc["reward_type"]),
        episode_len=int(doc["episode_len"]),
        goal_box=(tuple(doc["goal_box"][0]), tuple(doc["goal_box"][1])),
        success_thresholds_mm=tuple(doc["success_thresholds_mm"]),
        arm=model_from_dict(doc["arm"]),
    )


def config_to_json(config: EnvConfig) -> str:
    return json.dumps(config_to_dict(config), separators=(",", ":"))
