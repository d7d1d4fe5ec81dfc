import math

import pytest
from hypothesis import given, strategies as st

from swarmbed.errors import InvalidInputError
from swarmbed.kinematics import (Pose2D, RobotParams, Twist, WheelSpeeds, forward_kinematics,
                                 inverse_kinematics, normalize_angle, saturate_twist)

P = RobotParams()
wheel = st.floats(-P.max_wheel_speed_radps, P.max_wheel_speed_radps, allow_nan=False)
big = st.floats(-50.0, 50.0, allow_nan=False)


@pytest.mark.parametrize("left, right, v, w", [
    (10, 10, 0.16, 0.0),
    (-10, 10, 0.0, 16.0 / 3.0),
    (5, 10, 0.12, 4.0 / 3.0),
])
def test_forward_examples(left, right, v, w):
    tw = forward_kinematics(WheelSpeeds(left, right), P)
    assert tw.linear_mps == pytest.approx(v, abs=1e-12)
    assert tw.angular_radps == pytest.approx(w, abs=1e-12)


@pytest.mark.parametrize("v, w, left, right", [
    (0.12, 4.0 / 3.0, 5.0, 10.0),
    (0.0, 0.0, 0.0, 0.0),
    (0.16, 0.0, 10.0, 10.0),
])
def test_inverse_examples(v, w, left, right):
    ws = inverse_kinematics(Twist(v, w), P)
    assert ws.left_radps == pytest.approx(left, abs=1e-12)
    assert ws.right_radps == pytest.approx(right, abs=1e-12)


def test_non_finite_rejected():
    with pytest.raises(InvalidInputError):
        forward_kinematics(WheelSpeeds(math.nan, 0.0), P)
    with pytest.raises(InvalidInputError):
        inverse_kinematics(Twist(0.0, math.inf), P)


def test_saturate_examples():
    assert saturate_twist(Twist(0.5, 0.0), P) == Twist(0.28, 0.0)
    assert saturate_twist(Twist(0.10, 0.5), P) == Twist(0.10, 0.5)
    out = saturate_twist(Twist(0.28, 5.0), P)
    ws = inverse_kinematics(out, P)
    assert max(abs(ws.left_radps), abs(ws.right_radps)) == pytest.approx(P.max_wheel_speed_radps, rel=1e-12)
    assert out.linear_mps / out.angular_radps == pytest.approx(0.28 / 5.0, rel=1e-12)


def test_params_validated():
    with pytest.raises(InvalidInputError):
        RobotParams(wheel_radius_m=0.0)
    with pytest.raises(InvalidInputError):
        RobotParams(ticks_per_rev=0)
    with pytest.raises(InvalidInputError):
        RobotParams(max_linear_speed_mps=1.0)


@given(wheel, wheel)
def test_inverse_of_forward_is_identity(left, right):
    back = inverse_kinematics(forward_kinematics(WheelSpeeds(left, right), P), P)
    assert back.left_radps == pytest.approx(left, rel=1e-12, abs=1e-12)
    assert back.right_radps == pytest.approx(right, rel=1e-12, abs=1e-12)


@given(wheel, wheel, st.floats(-3.0, 3.0, allow_nan=False))
def test_forward_is_linear(left, right, a):
    base = forward_kinematics(WheelSpeeds(left, right), P)
    scaled = forward_kinematics(WheelSpeeds(a * left, a * right), P)
    assert scaled.linear_mps == pytest.approx(a * base.linear_mps, rel=1e-12, abs=1e-12)
    assert scaled.angular_radps == pytest.approx(a * base.angular_radps, rel=1e-12, abs=1e-12)


@given(big, big)
def test_saturation_idempotent_and_direction_preserving(v, w):
    once = saturate_twist(Twist(v, w), P)
    assert saturate_twist(once, P) == once
    ws = inverse_kinematics(once, P)
    assert max(abs(ws.left_radps), abs(ws.right_radps)) <= P.max_wheel_speed_radps * (1 + 1e-12)
    assert abs(once.linear_mps) <= P.max_linear_speed_mps * (1 + 1e-12)
    if v != 0 or w != 0:
        k = once.linear_mps / v if v != 0 else once.angular_radps / w
        assert 0 < k <= 1
        assert once.linear_mps == pytest.approx(k * v, rel=1e-12, abs=1e-15)
        assert once.angular_radps == pytest.approx(k * w, rel=1e-12, abs=1e-15)


@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_normalize_angle_range(theta):
    out = normalize_angle(theta)
    assert -math.pi < out <= math.pi
    assert math.cos(out) == pytest.approx(math.cos(theta), abs=1e-9)
    assert Pose2D(0, 0, theta).normalized().theta_rad == out
