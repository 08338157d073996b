import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from reachrl.arm import (
    ArmModel,
    JointSpec,
    apply_joint_command,
    clamp_to_limits,
    forward_kinematics,
    home_state,
    make_state,
    model_from_json,
    model_to_json,
    planar_arm,
    widowx_arm,
)
from reachrl.errors import ValidationError


def fk_oracle(model, angles):
    """Independent oracle: chain explicit 4x4 homogeneous transforms."""
    transform = np.eye(4)
    for spec, angle in zip(model.joints, angles):
        translation = np.eye(4)
        translation[:3, 3] = spec.link_offset
        rotation = np.eye(4)
        rotation[:3, :3] = Rotation.from_rotvec(np.asarray(spec.axis) * angle).as_matrix()
        transform = transform @ translation @ rotation
    return (transform @ np.array([*model.tool, 1.0]))[:3]


def random_angles(model, rng):
    return rng.uniform(model.lower_limits, model.upper_limits)


def test_planar_fully_extended():
    np.testing.assert_allclose(
        forward_kinematics(planar_arm(), [0.0, 0.0]), [0.35, 0.0, 0.0], atol=1e-15
    )


def test_planar_rigid_rotation():
    np.testing.assert_allclose(
        forward_kinematics(planar_arm(), [math.pi / 2, 0.0]),
        [0.0, 0.35, 0.0],
        atol=1e-15,
    )


def test_six_dof_home_is_sum_of_link_offsets():
    model = widowx_arm()
    home = forward_kinematics(model, np.zeros(6))
    np.testing.assert_allclose(home, fk_oracle(model, np.zeros(6)), atol=1e-9)
    offsets = np.sum([j.link_offset for j in model.joints], axis=0)
    np.testing.assert_allclose(home, offsets, atol=1e-12)


@pytest.mark.parametrize("model", [planar_arm(), widowx_arm()], ids=lambda m: m.name)
def test_fk_matches_homogeneous_transform_oracle(model):
    rng = np.random.default_rng(0)
    for _ in range(1000):
        angles = random_angles(model, rng)
        np.testing.assert_allclose(
            forward_kinematics(model, angles), fk_oracle(model, angles), atol=1e-9
        )


@pytest.mark.parametrize("model", [planar_arm(), widowx_arm()], ids=lambda m: m.name)
def test_reachability_bound(model):
    rng = np.random.default_rng(1)
    radius = model.reach_radius()
    for _ in range(200):
        ee = forward_kinematics(model, random_angles(model, rng))
        assert np.linalg.norm(ee) <= radius + 1e-12


def test_fk_rejects_wrong_length_and_out_of_limits():
    model = planar_arm()
    with pytest.raises(ValidationError):
        forward_kinematics(model, [0.0, 0.0, 0.0])
    with pytest.raises(ValidationError):
        forward_kinematics(model, [4.0, 0.0])


def test_clamp_identity_in_range():
    model = planar_arm()
    angles = np.array([0.3, -1.2])
    np.testing.assert_array_equal(clamp_to_limits(model, angles), angles)


def test_clamp_above_upper():
    model = planar_arm()
    out = clamp_to_limits(model, np.array([model.joints[0].upper_limit + 0.3, 0.0]))
    assert out[0] == model.joints[0].upper_limit


def test_clamp_far_below_lower():
    out = clamp_to_limits(planar_arm(), np.array([-10.0, -10.0]))
    np.testing.assert_allclose(out, [-math.pi, -math.pi])


def test_apply_zero_delta_is_identity():
    model = planar_arm()
    state = make_state(model, [0.2, -0.4])
    new = apply_joint_command(model, state, np.zeros(2))
    np.testing.assert_array_equal(new.angles, state.angles)
    np.testing.assert_array_equal(new.ee_position, state.ee_position)


def test_apply_caps_delta_at_max_step():
    model = planar_arm()
    state = home_state(model)
    new = apply_joint_command(model, state, np.array([1.0, -1.0]))
    np.testing.assert_allclose(new.angles, [0.05, -0.05])


def test_apply_rejects_non_finite():
    model = planar_arm()
    with pytest.raises(ValidationError):
        apply_joint_command(model, home_state(model), np.array([np.nan, 0.0]))


def test_apply_does_not_mutate_input():
    model = planar_arm()
    state = make_state(model, [0.1, 0.1])
    before = state.angles.copy()
    apply_joint_command(model, state, np.array([0.03, 0.03]))
    np.testing.assert_array_equal(state.angles, before)


def test_apply_recomputes_ee_consistently():
    model = widowx_arm()
    rng = np.random.default_rng(7)
    state = make_state(model, random_angles(model, rng))
    for _ in range(50):
        delta = rng.uniform(-0.2, 0.2, size=6)
        state = apply_joint_command(model, state, delta)
        np.testing.assert_allclose(
            state.ee_position, forward_kinematics(model, state.angles), atol=1e-12
        )


@given(
    angles=st.lists(st.floats(-math.pi, math.pi), min_size=2, max_size=2),
    delta=st.lists(st.floats(-5.0, 5.0), min_size=2, max_size=2),
)
@settings(max_examples=200, deadline=None)
def test_apply_never_leaves_limits(angles, delta):
    model = planar_arm()
    state = make_state(model, np.array(angles))
    new = apply_joint_command(model, state, np.array(delta))
    assert np.all(new.angles >= model.lower_limits)
    assert np.all(new.angles <= model.upper_limits)
    assert np.all(np.abs(new.angles - state.angles) <= model.max_steps + 1e-15)


def test_apply_is_deterministic():
    model = widowx_arm()
    state = make_state(model, np.full(6, 0.3))
    delta = np.array([0.01, -0.02, 0.03, -0.04, 0.05, -0.06])
    a = apply_joint_command(model, state, delta)
    b = apply_joint_command(model, state, delta)
    assert a.angles.tobytes() == b.angles.tobytes()
    assert a.ee_position.tobytes() == b.ee_position.tobytes()


def test_model_json_round_trip():
    model = widowx_arm()
    text = model_to_json(model)
    restored = model_from_json(text)
    assert restored == model
    assert model_to_json(restored) == text


def test_model_invariants_enforced():
    bad_axis = dict(axis=(0.0, 0.0, 2.0), link_offset=(0, 0, 0), lower_limit=-1, upper_limit=1, max_step=0.1)
    with pytest.raises(ValidationError):
        JointSpec(**bad_axis)
    joint = JointSpec((0, 0, 1.0), (0, 0, 0), -1, 1, 0.1)
    with pytest.raises(ValidationError):
        ArmModel(name="three", joints=(joint, joint, joint))
    with pytest.raises(ValidationError):
        JointSpec((0, 0, 1.0), (0, 0, 0), 1, -1, 0.1)
    with pytest.raises(ValidationError):
        JointSpec((0, 0, 1.0), (0, 0, 0), -1, 1, 0.0)
