import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from motion_complete import quaternion as quat
from motion_complete.exceptions import DegenerateQuaternion

from conftest import random_quats

seeds = st.integers(0, 2**32 - 1)


def test_identity_is_neutral(rng):
    q = random_quats(rng, (5,))
    np.testing.assert_allclose(quat.quat_mul(quat.identity((5,)), q), q)
    np.testing.assert_allclose(quat.quat_mul(q, quat.IDENTITY), q)


def test_mul_matches_scipy_composition(rng):
    a, b = random_quats(rng, (20,)), random_quats(rng, (20,))
    expected = (Rotation.from_quat(a) * Rotation.from_quat(b)).as_quat()
    got = quat.quat_mul(a, b)
    np.testing.assert_allclose(quat.quat_align(expected, got), expected, atol=1e-12)


def test_rotate_matches_scipy(rng):
    q = random_quats(rng, (20,))
    v = rng.normal(size=(20, 3))
    np.testing.assert_allclose(quat.quat_rotate_vec(q, v), Rotation.from_quat(q).apply(v), atol=1e-12)


def test_to_matrix_matches_scipy(rng):
    q = random_quats(rng, (8,))
    np.testing.assert_allclose(quat.to_matrix(q), Rotation.from_quat(q).as_matrix(), atol=1e-12)


def test_quarter_turn_about_z():
    q = quat.from_axis_angle([0, 0, 1], np.pi / 2)
    np.testing.assert_allclose(quat.quat_rotate_vec(q, [1.0, 0, 0]), [0, 1, 0], atol=1e-15)


def test_normalize_rejects_zero():
    with pytest.raises(DegenerateQuaternion):
        quat.quat_normalize(np.zeros(4))


@given(seeds)
def test_conjugate_inverts(seed):
    q = random_quats(np.random.default_rng(seed), (3,))
    np.testing.assert_allclose(quat.quat_mul(q, quat.quat_conj(q)), quat.identity((3,)), atol=1e-12)


@given(seeds)
def test_align_picks_positive_dot(seed):
    rng = np.random.default_rng(seed)
    ref, q = random_quats(rng, (6,)), random_quats(rng, (6,))
    aligned = quat.quat_align(ref, q)
    assert np.all(quat.quat_dot(ref, aligned) >= 0)
    assert np.allclose(np.abs(aligned), np.abs(q))


@given(seeds)
def test_axis_angle_round_trip(seed):
    rng = np.random.default_rng(seed)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.01, np.pi - 0.01)
    got_axis, got_angle = quat.to_axis_angle(quat.from_axis_angle(axis, angle))
    np.testing.assert_allclose(got_angle, angle, atol=1e-9)
    np.testing.assert_allclose(got_axis, axis, atol=1e-9)


def test_align_sequence_removes_flips(rng):
    q = random_quats(rng, (1, 2))
    seq = np.repeat(q, 6, axis=0)
    seq[1::2] *= -1
    out = quat.align_sequence(seq, axis=0)
    assert np.all(quat.quat_dot(out[1:], out[:-1]) > 0)


def test_angle_between_is_hemisphere_blind(rng):
    a, b = random_quats(rng, (4,)), random_quats(rng, (4,))
    np.testing.assert_allclose(quat.angle_between(a, b), quat.angle_between(a, -b), atol=1e-12)
