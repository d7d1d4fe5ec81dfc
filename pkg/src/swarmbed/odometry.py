"""Encoder-tick odometry and planar pose integration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import InvalidIntervalError, UnsupportedBranchError
from .kinematics import (
    Pose2D,
    RobotParams,
    Twist,
    WheelSpeeds,
    forward_kinematics,
    inverse_kinematics,
    normalize_angle,
)

# Heading change per step below which motion is treated as a straight line.
EPS_STRAIGHT = 1e-6


@dataclass(frozen=True)
class EncoderState:
    """Cumulative wheel tick counts at ``timestamp_s``.

    Counts are integers on a quantized encoder. The simulator can also
    expose the raw fractional counts (quantization disabled).
    """

    left_ticks: int | float = 0
    right_ticks: int | float = 0
    timestamp_s: float = 0.0


@dataclass(frozen=True)
class OdometryEstimate:
    pose: Pose2D = field(default_factory=Pose2D)
    body_twist: Twist = field(default_factory=Twist)
    covariance_trace: float = 0.0
    stamp_s: float = 0.0


def ticks_to_angle(delta_ticks: int | float, params: RobotParams) -> float:
    """Wheel rotation in radians for ``delta_ticks`` encoder ticks."""
    return params.angle_per_tick * delta_ticks


def wheel_velocities(prev: EncoderState, curr: EncoderState,
                     params: RobotParams) -> tuple[float, float]:
    """Linear (rim) speed of the left and right wheel between two readings."""
    dt = curr.timestamp_s - prev.timestamp_s
    if not dt > 0:
        raise InvalidIntervalError(f"encoder interval must be positive, got {dt!r}")
    d_t = params.meters_per_tick
    return (d_t * (curr.left_ticks - prev.left_ticks) / dt,
            d_t * (curr.right_ticks - prev.right_ticks) / dt)


def arc_radius(v_left: float, v_right: float, params: RobotParams) -> float:
    """Signed turning radius; ``math.inf`` when the wheels run at equal speed."""
    diff = v_right - v_left
    if abs(diff) < EPS_STRAIGHT:
        return math.inf
    return params.wheel_base_m / 2.0 * (v_right + v_left) / diff


def tick_split(cmd: Twist, dt: float, params: RobotParams) -> tuple[float, float]:
    """Expected (left, right) tick deltas for holding ``cmd`` over ``dt``.

    Values are real-valued expectations, i.e. before quantization.
    """
    if not dt > 0:
        raise InvalidIntervalError(f"dt must be positive, got {dt!r}")
    wheels = inverse_kinematics(cmd, params)
    a = params.angle_per_tick
    return wheels.left_radps * dt / a, wheels.right_radps * dt / a


def integrate_pose_exact(pose: Pose2D, v: float, w: float, dt: float) -> Pose2D:
    """Advance ``pose`` along the circular arc traced by constant (v, w).

    The update is exact for constant velocities, so splitting an interval
    into any number of steps gives the same end pose.
    """
    if not dt > 0:
        raise InvalidIntervalError(f"dt must be positive, got {dt!r}")
    dtheta = w * dt
    half = dtheta / 2.0
    if abs(dtheta) < EPS_STRAIGHT:
        # sin(half)/half is 1 to within 1e-13 here; keep the mid heading so the branches meet
        chord = v * dt
    else:
        # chord 2R sin(half) written as v*dt*sin(half)/half (no division by w)
        chord = v * dt * math.sin(half) / half
    mid = pose.theta_rad + half
    dx = chord * math.cos(mid)
    dy = chord * math.sin(mid)
    return Pose2D(pose.x_m + dx, pose.y_m + dy, normalize_angle(pose.theta_rad + dtheta))


def integrate_pose_paper_literal(pose: Pose2D, v: float, w: float, dt: float,
                                 params: RobotParams, delta_ticks: int | float) -> Pose2D:
    """Symbol-for-symbol variant of the published update, kept for comparison.

    Note the |v| factor on the chord, the missing current heading in the
    trigonometric terms, and the tick-based heading increment. Not used by
    the simulator.
    """
    if not dt > 0:
        raise InvalidIntervalError(f"dt must be positive, got {dt!r}")
    dtheta = w * dt
    if abs(dtheta) < EPS_STRAIGHT:
        raise UnsupportedBranchError("straight-line motion: turning radius is infinite")
    radius = v / w
    if abs(radius) < EPS_STRAIGHT:
        raise UnsupportedBranchError("turning radius is zero")
    half = dtheta / 2.0
    chord = 2.0 * radius * math.sin(half)
    x = pose.x_m + abs(v) * math.cos(half) * chord
    y = pose.y_m + abs(v) * math.sin(half) * chord
    theta = pose.theta_rad + 2.0 * params.meters_per_tick / radius * delta_ticks
    return Pose2D(x, y, normalize_angle(theta))


def update_odometry(est: OdometryEstimate, prev: EncoderState, curr: EncoderState,
                    params: RobotParams) -> OdometryEstimate:
    """Dead-reckon one encoder interval."""
    v_left, v_right = wheel_velocities(prev, curr, params)
    r = params.wheel_radius_m
    twist = forward_kinematics(WheelSpeeds(v_left / r, v_right / r), params)
    dt = curr.timestamp_s - prev.timestamp_s
    pose = integrate_pose_exact(est.pose, twist.linear_mps, twist.angular_radps, dt)
    return replace(est, pose=pose, body_twist=twist, stamp_s=curr.timestamp_s)


def odom_payload(est: OdometryEstimate) -> dict:
    """Message body for the ``odom`` topic."""
    return {
        "x_m": est.pose.x_m,
        "y_m": est.pose.y_m,
        "theta_rad": est.pose.theta_rad,
        "v_mps": est.body_twist.linear_mps,
        "w_radps": est.body_twist.angular_radps,
        "stamp_s": est.stamp_s,
    }
