"""
Tests for rotmath: quaternion algebra against scipy and a Rodrigues matrix.
"""

import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings
from scipy.spatial.transform import Rotation

from rotmath import (
    IDENTITY,
    DegenerateAxisError,
    NonFiniteError,
    UnitQuaternion,
    Vec3,
    compose,
    from_axis_angle,
    from_rotation_vector,
    identity,
    inverse,
    rotate_vector,
    rotation_angle_between,
    slerp,
    twist_angle,
)

X = Vec3(1.0, 0.0, 0.0)
Y = Vec3(0.0, 1.0, 0.0)
Z = Vec3(0.0, 0.0, 1.0)

components = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)
quaternions = st.tuples(components, components, components, components).filter(
    lambda c: math.sqrt(sum(v * v for v in c)) > 0.1
).map(UnitQuaternion.of)
coords = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)
vectors = st.tuples(coords, coords, coords).map(Vec3.of)


def rodrigues(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation matrix from axis-angle, written out independently of rotmath."""
    k = axis / np.linalg.norm(axis)
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + math.sin(angle) * kx + (1.0 - math.cos(angle)) * kx @ kx


def assert_vec_close(a: Vec3, b, tol=1e-12):
    np.testing.assert_allclose(a.as_tuple(), tuple(b), atol=tol, rtol=0)


class TestVec3:
    def test_arithmetic(self):
        a = Vec3(1.0, 2.0, 3.0)
        b = Vec3(-1.0, 0.5, 2.0)
        assert a + b == Vec3(0.0, 2.5, 5.0)
        assert a - b == Vec3(2.0, 1.5, 1.0)
        assert 2.0 * a == Vec3(2.0, 4.0, 6.0)
        assert a / 2.0 == Vec3(0.5, 1.0, 1.5)
        assert -a == Vec3(-1.0, -2.0, -3.0)
        assert a.dot(b) == pytest.approx(6.0)

    def test_cross_follows_right_hand_rule(self):
        assert X.cross(Y) == Z
        assert Y.cross(Z) == X
        assert Z.cross(X) == Y

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteError):
            Vec3(float("nan"), 0.0, 0.0)
        with pytest.raises(NonFiniteError):
            Vec3(0.0, float("inf"), 0.0)

    def test_normalize_zero_raises(self):
        with pytest.raises(DegenerateAxisError):
            Vec3.zero().normalized()


class TestUnitQuaternion:
    def test_construction_normalizes(self):
        q = UnitQuaternion(2.0, 0.0, 0.0, 0.0)
        assert q.as_tuple() == (1.0, 0.0, 0.0, 0.0)
        assert UnitQuaternion(1.0, 1.0, 1.0, 1.0).norm() == pytest.approx(1.0, abs=1e-15)

    def test_zero_quaternion_rejected(self):
        with pytest.raises(DegenerateAxisError):
            UnitQuaternion(0.0, 0.0, 0.0, 0.0)

    def test_nan_rejected(self):
        with pytest.raises(NonFiniteError):
            UnitQuaternion(float("nan"), 0.0, 0.0, 0.0)

    def test_identity_helpers(self):
        assert identity() is IDENTITY
        q = from_axis_angle(0.7, Vec3(1.0, 2.0, 3.0))
        assert rotation_angle_between(compose(inverse(q), q), IDENTITY) == pytest.approx(0.0, abs=1e-12)


class TestAxisAngle:
    def test_zero_angle_gives_identity_even_for_zero_axis(self):
        assert from_axis_angle(0.0, Vec3.zero()) == IDENTITY

    def test_zero_axis_with_angle_raises(self):
        with pytest.raises(DegenerateAxisError):
            from_axis_angle(0.5, Vec3.zero())

    def test_quarter_turn_about_z(self):
        q = from_axis_angle(math.pi / 2, Z)
        assert_vec_close(rotate_vector(q, X), (0.0, 1.0, 0.0))
        assert_vec_close(rotate_vector(q, Y), (-1.0, 0.0, 0.0))

    @pytest.mark.parametrize("scale", [1e200, 1e-200])
    def test_extreme_axis_lengths(self, scale):
        q = from_axis_angle(math.pi / 2, Vec3(scale, 0.0, 0.0))
        assert rotation_angle_between(q, from_axis_angle(math.pi / 2, X)) == pytest.approx(0.0, abs=1e-12)
        assert_vec_close(rotate_vector(q, Y), (0.0, 0.0, 1.0))

    def test_norm_does_not_overflow(self):
        assert Vec3(3e200, 4e200, 0.0).norm() == pytest.approx(5e200)
        assert Vec3(3e-200, 0.0, 4e-200).norm() == pytest.approx(5e-200)

    def test_rotation_vector(self):
        assert from_rotation_vector(Vec3.zero()) == IDENTITY
        q = from_rotation_vector(Vec3(0.0, 0.0, 0.3))
        assert rotation_angle_between(q, from_axis_angle(0.3, Z)) == pytest.approx(0.0, abs=1e-12)


class TestCompose:
    @given(a=quaternions, b=quaternions, v=vectors)
    def test_compose_applies_right_operand_first(self, a, b, v):
        assert_vec_close(rotate_vector(compose(a, b), v), rotate_vector(a, rotate_vector(b, v)).as_tuple(), 1e-11)

    @given(a=quaternions, b=quaternions)
    def test_result_is_unit(self, a, b):
        assert compose(a, b).norm() == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.slow
    def test_norm_preserved_over_a_million_operations(self):
        rng = np.random.default_rng(11)
        steps = [from_rotation_vector(Vec3.of(rv)) for rv in rng.normal(0.0, 0.3, (1000, 3)).tolist()]
        q = IDENTITY
        worst = 0.0
        for i in range(1_000_000):
            q = compose(q, steps[i % 1000])
            worst = max(worst, abs(q.norm() - 1.0))
        assert worst <= 1e-9


class TestRotateVector:
    @given(q=quaternions, v=vectors)
    @settings(max_examples=300)
    def test_matches_scipy(self, q, v):
        expected = Rotation.from_quat([q.x, q.y, q.z, q.w]).apply(v.as_tuple())
        assert_vec_close(rotate_vector(q, v), expected, 1e-12)

    def test_matches_rodrigues_on_ten_thousand_pairs(self):
        rng = np.random.default_rng(2024)
        axes = rng.normal(size=(10_000, 3))
        angles = rng.uniform(-math.pi, math.pi, 10_000)
        points = rng.uniform(-10.0, 10.0, (10_000, 3))
        worst = 0.0
        for axis, angle, p in zip(axes, angles, points):
            q = from_axis_angle(float(angle), Vec3.of(axis.tolist()))
            got = np.array(rotate_vector(q, Vec3.of(p.tolist())).as_tuple())
            worst = max(worst, float(np.max(np.abs(got - rodrigues(axis, float(angle)) @ p))))
        assert worst <= 1e-12

    @given(q=quaternions, v=vectors)
    def test_preserves_length(self, q, v):
        assert rotate_vector(q, v).norm() == pytest.approx(v.norm(), abs=1e-12)


class TestAngles:
    @given(q=quaternions)
    def test_sign_invariant(self, q):
        assert rotation_angle_between(q, -q) == pytest.approx(0.0, abs=1e-7)

    def test_known_angle(self):
        a = from_axis_angle(0.2, X)
        b = from_axis_angle(0.5, X)
        assert rotation_angle_between(a, b) == pytest.approx(0.3, abs=1e-12)

    @given(a=quaternions, b=quaternions)
    def test_angle_in_range(self, a, b):
        assert 0.0 <= rotation_angle_between(a, b) <= math.pi + 1e-12


class TestSlerp:
    def test_endpoints(self):
        a = from_axis_angle(0.1, Y)
        b = from_axis_angle(1.1, Y)
        assert slerp(a, b, 0.0) == a
        assert slerp(a, b, 1.0) == b

    def test_midpoint_is_half_angle(self):
        a = IDENTITY
        b = from_axis_angle(1.0, Vec3(1.0, 1.0, 0.0))
        mid = slerp(a, b, 0.5)
        assert rotation_angle_between(a, mid) == pytest.approx(0.5, abs=1e-12)
        assert rotation_angle_between(mid, b) == pytest.approx(0.5, abs=1e-12)

    def test_takes_shortest_arc(self):
        a = from_axis_angle(0.2, Z)
        b = -from_axis_angle(0.6, Z)
        mid = slerp(a, b, 0.5)
        assert rotation_angle_between(mid, from_axis_angle(0.4, Z)) == pytest.approx(0.0, abs=1e-12)

    def test_equal_inputs(self):
        a = from_axis_angle(0.3, X)
        assert rotation_angle_between(slerp(a, a, 0.5), a) == pytest.approx(0.0, abs=1e-12)


class TestTwist:
    def test_pure_twist(self):
        assert twist_angle(from_axis_angle(0.3, Z), Z) == pytest.approx(0.3, abs=1e-12)
        assert twist_angle(from_axis_angle(-1.2, Z), Z) == pytest.approx(-1.2, abs=1e-12)

    def test_pure_swing_has_no_twist(self):
        assert twist_angle(from_axis_angle(0.8, X), Z) == pytest.approx(0.0, abs=1e-12)

    def test_swing_about_orthogonal_axis_leaves_twist(self):
        q = compose(from_axis_angle(0.4, Y), from_axis_angle(0.25, X))
        assert twist_angle(q, X) == pytest.approx(0.25, abs=1e-12)

    @given(q=quaternions)
    def test_range(self, q):
        assert -math.pi < twist_angle(q, Z) <= math.pi


class TestMetric:
    @given(a=quaternions, b=quaternions, t=st.floats(min_value=0.0, max_value=1.0))
    def test_slerp_angle_is_proportional(self, a, b, t):
        total = rotation_angle_between(a, b)
        assert rotation_angle_between(a, slerp(a, b, t)) == pytest.approx(t * total, abs=1e-9)

    @given(a=quaternions, b=quaternions, c=quaternions)
    def test_triangle_inequality(self, a, b, c):
        ab = rotation_angle_between(a, b)
        bc = rotation_angle_between(b, c)
        assert rotation_angle_between(a, c) <= ab + bc + 1e-9

    @given(a=quaternions, b=quaternions)
    def test_symmetric(self, a, b):
        assert rotation_angle_between(a, b) == pytest.approx(rotation_angle_between(b, a), abs=1e-12)

    def test_thirty_degrees(self):
        q = from_axis_angle(math.pi / 6, Vec3(1.0, 1.0, 1.0))
        assert rotation_angle_between(IDENTITY, q) == pytest.approx(math.pi / 6, abs=1e-12)
