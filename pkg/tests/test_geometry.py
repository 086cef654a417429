import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from graspbin.geometry import (
    EulerRPY,
    GraspPose,
    Quaternion,
    approach_of,
    axis_angle_to_quat,
    euler_to_matrix,
    euler_to_quat,
    quat_to_euler,
    random_quats,
    rotation_angle_between,
    vec_to_pitch_yaw,
)


def symbolic_rotation(roll, pitch, yaw):
    """Independent oracle: the yaw-pitch-roll composition built in sympy."""
    a, b, g = sp.symbols("a b g", real=True)
    rz = lambda t: sp.Matrix([[sp.cos(t), -sp.sin(t), 0], [sp.sin(t), sp.cos(t), 0], [0, 0, 1]])
    ry = lambda t: sp.Matrix([[sp.cos(t), 0, sp.sin(t)], [0, 1, 0], [-sp.sin(t), 0, sp.cos(t)]])
    m = rz(g) * ry(b) * rz(a)
    return np.array(m.subs({a: roll, b: pitch, g: yaw}).evalf(), dtype=np.float64)


def test_symbolic_approach_column_matches_pitch_yaw_definition():
    a, b, g = sp.symbols("a b g", real=True)
    rz = lambda t: sp.Matrix([[sp.cos(t), -sp.sin(t), 0], [sp.sin(t), sp.cos(t), 0], [0, 0, 1]])
    ry = lambda t: sp.Matrix([[sp.cos(t), 0, sp.sin(t)], [0, 1, 0], [-sp.sin(t), 0, sp.cos(t)]])
    col = sp.simplify((rz(g) * ry(b) * rz(a))[:, 2])
    assert col == sp.Matrix([sp.sin(b) * sp.cos(g), sp.sin(b) * sp.sin(g), sp.cos(b)])


def test_identity_quaternion_euler():
    e = quat_to_euler(Quaternion.identity())
    assert (e.roll, e.pitch, e.yaw) == (0.0, 0.0, 0.0)
    assert np.allclose(approach_of(Quaternion.identity()), [0, 0, 1])


def test_euler_zero_is_identity():
    q = euler_to_quat(EulerRPY(0.0, 0.0, 0.0))
    assert rotation_angle_between(q, Quaternion.identity()) < 1e-12


def test_quarter_turn_about_z_shifts_yaw():
    q = Quaternion.from_array(axis_angle_to_quat([0, 0, 1], math.pi / 2))
    e = quat_to_euler(q)
    assert e.pitch == pytest.approx(0.0, abs=1e-12)
    assert e.yaw == pytest.approx(math.pi / 2, abs=1e-12)
    assert e.roll == 0.0


def test_double_cover_gives_same_euler():
    rng = np.random.default_rng(3)
    for q in random_quats(rng, 50):
        a = quat_to_euler(Quaternion.from_array(q))
        b = quat_to_euler(Quaternion.from_array(-q))
        assert (a.roll, a.pitch, a.yaw) == pytest.approx((b.roll, b.pitch, b.yaw), abs=1e-12)


@pytest.mark.parametrize("angles", [(0.3, 1.1, 4.0), (5.9, 0.2, 0.1), (1.0, 2.8, 3.3)])
def test_matrix_matches_symbolic_oracle(angles):
    e = EulerRPY(*angles)
    assert np.allclose(euler_to_matrix(e), symbolic_rotation(*angles), atol=1e-14)
    assert np.allclose(euler_to_quat(e).as_matrix(), symbolic_rotation(*angles), atol=1e-14)


def test_random_round_trip():
    rng = np.random.default_rng(0)
    worst = 0.0
    for qa in random_quats(rng, 10_000):
        q = Quaternion.from_array(qa)
        e = quat_to_euler(q)
        if min(e.pitch, math.pi - e.pitch) < 1e-6:
            continue
        worst = max(worst, rotation_angle_between(q, euler_to_quat(e)))
    assert worst < 1e-7


def test_gimbal_lock_is_canonical():
    for pitch in (0.0, math.pi):
        e = EulerRPY(1.2, pitch, 0.4)
        back = quat_to_euler(euler_to_quat(e))
        assert back.roll == 0.0
        assert back.pitch == pytest.approx(pitch, abs=1e-12)
        assert rotation_angle_between(euler_to_quat(back), euler_to_quat(e)) < 1e-7


def test_angle_periodicity():
    a = euler_to_quat(EulerRPY(0.4, 1.0, 2.0))
    b = euler_to_quat(EulerRPY(0.4 + 2 * math.pi, 1.0, 2.0))
    assert rotation_angle_between(a, b) < 1e-12


def test_half_turn_perpendicular_flips_approach():
    q = Quaternion.from_array(axis_angle_to_quat([1, 0, 0], math.pi))
    assert np.allclose(approach_of(q), [0, 0, -1], atol=1e-12)


def test_approach_consistent_with_euler():
    rng = np.random.default_rng(1)
    for qa in random_quats(rng, 10_000):
        q = Quaternion.from_array(qa)
        pitch, yaw = vec_to_pitch_yaw(approach_of(q))
        e = quat_to_euler(q)
        assert pitch == pytest.approx(e.pitch, abs=1e-9)
        d = abs(yaw - e.yaw)
        assert min(d, 2 * math.pi - d) < 1e-9


def test_rotation_angle_cases():
    rng = np.random.default_rng(2)
    q = Quaternion.from_array(random_quats(rng, 1)[0])
    assert rotation_angle_between(q, q) < 1e-12
    assert rotation_angle_between(q, -q) < 1e-12
    qz = Quaternion.from_array(axis_angle_to_quat([0, 0, 1], math.pi / 2))
    assert rotation_angle_between(Quaternion.identity(), qz) == pytest.approx(math.pi / 2, abs=1e-9)


def test_quaternion_normalized_on_construction():
    q = Quaternion(2.0, 0.0, 0.0, 0.0)
    assert np.linalg.norm(q.as_array()) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        Quaternion(0.0, 0.0, 0.0, 0.0)


def test_grasp_pose_array_round_trip():
    g = GraspPose(Quaternion(0.5, 0.5, 0.5, 0.5), [0.1, 0.2, 0.3])
    assert GraspPose.from_array(g.as_array()) == g
    assert GraspPose.from_matrix(g.as_matrix()).rotation.same_rotation(g.rotation)
    with pytest.raises(ValueError):
        GraspPose(Quaternion.identity(), [np.inf, 0, 0])


quat_strategy = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 1e-3)


@settings(max_examples=200, deadline=None)
@given(quat_strategy, quat_strategy)
def test_approach_equivariance(r, q):
    r, q = Quaternion.from_array(r), Quaternion.from_array(q)
    assert np.allclose(approach_of(r * q), r.as_matrix() @ approach_of(q), atol=1e-9)


@settings(max_examples=300, deadline=None)
@given(quat_strategy)
def test_euler_ranges(q):
    e = quat_to_euler(Quaternion.from_array(q))
    assert 0.0 <= e.roll < 2 * math.pi
    assert 0.0 <= e.pitch <= math.pi
    assert 0.0 <= e.yaw < 2 * math.pi


@settings(max_examples=200, deadline=None)
@given(quat_strategy, quat_strategy)
def test_rotation_angle_symmetric_and_bounded(a, b):
    qa, qb = Quaternion.from_array(a), Quaternion.from_array(b)
    d = rotation_angle_between(qa, qb)
    assert 0.0 <= d <= math.pi
    assert d == pytest.approx(rotation_angle_between(qb, qa), abs=1e-12)
