"""Kinematic model of a serial revolute arm.

Two models ship with the package: a 6-DOF chain with WidowX-like proportions
(the dimensions are stand-ins, not measurements of any physical robot) and a
2-DOF planar arm used for fast desk-scale experiments.

Geometry convention: each joint i contributes a translation by its
``link_offset`` (from the previous joint frame to this joint frame) followed
by a rotation of ``angle_i`` about its local ``axis``.  The end-effector is
the model's ``tool`` point expressed in the last joint frame:

    ee = o_1 + R_1 (o_2 + R_2 (... o_n + R_n (tool)))

The module is kinematic only: no torques, gravity or contact.  ArmModel is
immutable and shareable across threads; ArmState is a value (updates return
new states, inputs are never mutated).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ValidationError

_AXIS_TOL = 1e-12


@dataclass(frozen=True)
class JointSpec:
    """One revolute joint: rotation axis, link to it, limits, per-step cap."""

    axis: tuple[float, float, float]
    link_offset: tuple[float, float, float]
    lower_limit: float
    upper_limit: float
    max_step: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        if abs(np.linalg.norm(axis) - 1.0) > _AXIS_TOL:
            raise ValidationError(f"joint axis must be a unit vector, got {self.axis}")
        if not np.all(np.isfinite(self.link_offset)):
            raise ValidationError(f"link_offset must be finite, got {self.link_offset}")
        if not self.lower_limit < self.upper_limit:
            raise ValidationError(
                f"joint limits must satisfy lower < upper, got "
                f"[{self.lower_limit}, {self.upper_limit}]"
            )
        if not self.max_step > 0:
            raise ValidationError(f"max_step must be positive, got {self.max_step}")


@dataclass(frozen=True)
class ArmModel:
    """An ordered chain of revolute joints plus the terminal tool point."""

    name: str
    joints: tuple[JointSpec, ...]
    tool: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.joints) not in (2, 6):
            raise ValidationError(
                f"supported joint counts are 2 and 6, got {len(self.joints)}"
            )
        if not np.all(np.isfinite(self.tool)):
            raise ValidationError(f"tool point must be finite, got {self.tool}")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    # The cached arrays below are shared, read-only views of the geometry;
    # callers must not mutate them.
    @cached_property
    def lower_limits(self) -> np.ndarray:
        return np.array([j.lower_limit for j in self.joints])

    @cached_property
    def upper_limits(self) -> np.ndarray:
        return np.array([j.upper_limit for j in self.joints])

    @cached_property
    def max_steps(self) -> np.ndarray:
        return np.array([j.max_step for j in self.joints])

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.array(j.axis) for j in self.joints)

    @cached_property
    def link_offsets(self) -> tuple[np.ndarray, ...]:
        return tuple(np.array(j.link_offset) for j in self.joints)

    @cached_property
    def tool_point(self) -> np.ndarray:
        return np.array(self.tool)

    def reach_radius(self) -> float:
        """Upper bound on the end-effector distance from the base."""
        total = sum(np.linalg.norm(j.link_offset) for j in self.joints)
        return float(total + np.linalg.norm(self.tool))


@dataclass(frozen=True)
class ArmState:
    """Joint angles plus the cached, consistent end-effector position."""

    angles: np.ndarray
    ee_position: np.ndarray


def _rotate(axis: np.ndarray, angle: float, v: np.ndarray) -> np.ndarray:
    # Rodrigues' formula: v cosθ + (k × v) sinθ + k (k·v)(1 − cosθ)
    c = math.cos(angle)
    s = math.sin(angle)
    cross = np.array(
        [
            axis[1] * v[2] - axis[2] * v[1],
            axis[2] * v[0] - axis[0] * v[2],
            axis[0] * v[1] - axis[1] * v[0],
        ]
    )
    return v * c + cross * s + axis * (np.dot(axis, v) * (1.0 - c))


def forward_kinematics(model: ArmModel, angles: np.ndarray) -> np.ndarray:
    """End-effector position for the given joint angles.

    Raises ValidationError on a length mismatch or out-of-limit angles.
    """
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (model.n_joints,):
        raise ValidationError(
            f"expected {model.n_joints} joint angles, got shape {angles.shape}"
        )
    if np.any(angles < model.lower_limits) or np.any(angles > model.upper_limits):
        raise ValidationError(f"angles {angles.tolist()} violate joint limits")
    point = model.tool_point
    for axis, offset, angle in zip(
        reversed(model.axes), reversed(model.link_offsets), reversed(angles)
    ):
        point = offset + _rotate(axis, float(angle), point)
    return point


def make_state(model: ArmModel, angles: np.ndarray) -> ArmState:
    """Build an ArmState whose cached ee position matches its angles."""
    angles = np.array(angles, dtype=float)
    return ArmState(angles=angles, ee_position=forward_kinematics(model, angles))


def home_state(model: ArmModel) -> ArmState:
    return make_state(model, np.zeros(model.n_joints))


def clamp_to_limits(model: ArmModel, angles: np.ndarray) -> np.ndarray:
    """Clamp each component into its joint's [lower, upper] interval."""
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (model.n_joints,):
        raise ValidationError(
            f"expected {model.n_joints} joint angles, got shape {angles.shape}"
        )
    return np.clip(angles, model.lower_limits, model.upper_limits)


def apply_joint_command(model: ArmModel, state: ArmState, delta: np.ndarray) -> ArmState:
    """Step the arm by ``delta`` radians per joint, respecting per-step caps
    and joint limits.  Returns a new state; the input is unmodified.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (model.n_joints,):
        raise ValidationError(
            f"expected {model.n_joints} joint deltas, got shape {delta.shape}"
        )
    if not np.all(np.isfinite(delta)):
        raise ValidationError(f"joint command must be finite, got {delta.tolist()}")
    stepped = np.clip(delta, -model.max_steps, model.max_steps)
    new_angles = clamp_to_limits(model, state.angles + stepped)
    return make_state(model, new_angles)


def model_to_dict(model: ArmModel) -> dict:
    return {
        "name": model.name,
        "joints": [
            {
                "axis": list(j.axis),
                "link_offset": list(j.link_offset),
                "lower_limit": j.lower_limit,
                "upper_limit": j.upper_limit,
                "max_step": j.max_step,
            }
            for j in model.joints
        ],
        "tool": list(model.tool),
    }


def model_from_dict(doc: dict) -> ArmModel:
    joints = tuple(
        JointSpec(
            axis=tuple(j["axis"]),
            link_offset=tuple(j["link_offset"]),
            lower_limit=float(j["lower_limit"]),
            upper_limit=float(j["upper_limit"]),
            max_step=float(j["max_step"]),
        )
        for j in doc["joints"]
    )
    return ArmModel(name=doc["name"], joints=joints, tool=tuple(doc.get("tool", (0.0, 0.0, 0.0))))


def model_to_json(model: ArmModel) -> str:
    return json.dumps(model_to_dict(model), indent=2) + "\n"


def model_from_json(text: str) -> ArmModel:
    return model_from_dict(json.loads(text))


_X = (1.0, 0.0, 0.0)
_Y = (0.0, 1.0, 0.0)
_Z = (0.0, 0.0, 1.0)

DEFAULT_MAX_STEP = 0.05  # rad per control step
_SIX_DOF_LIMIT = 2.6  # rad, symmetric

# yaw-pitch-pitch-pitch-roll-pitch chain; offsets in meters.
_SIX_DOF_CHAIN = (
    (_Z, (0.0, 0.0, 0.125)),
    (_Y, (0.0, 0.0, 0.045)),
    (_Y, (0.05, 0.0, 0.14)),
    (_Y, (0.14, 0.0, 0.0)),
    (_X, (0.06, 0.0, 0.0)),
    (_Y, (0.045, 0.0, 0.0)),
)


def widowx_arm() -> ArmModel:
    """6-DOF arm with WidowX-like proportions (declared, not measured)."""
    joints = tuple(
        JointSpec(
            axis=axis,
            link_offset=offset,
            lower_limit=-_SIX_DOF_LIMIT,
            upper_limit=_SIX_DOF_LIMIT,
            max_step=DEFAULT_MAX_STEP,
        )
        for axis, offset in _SIX_DOF_CHAIN
    )
    return ArmModel(name="widowx6", joints=joints, tool=(0.0, 0.0, 0.0))


def planar_arm() -> ArmModel:
    """2-DOF planar arm (links 0.20 m and 0.15 m, motion in the xy-plane)."""
    joints = (
        JointSpec(_Z, (0.0, 0.0, 0.0), -math.pi, math.pi, DEFAULT_MAX_STEP),
        JointSpec(_Z, (0.20, 0.0, 0.0), -math.pi, math.pi, DEFAULT_MAX_STEP),
    )
    return ArmModel(name="planar2", joints=joints, tool=(0.15, 0.0, 0.0))
