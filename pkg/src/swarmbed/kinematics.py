"""Differential-drive robot parameters and velocity maps.

Body twist and wheel speeds are related by

    v = r * (phi_right + phi_left) / 2
    w = r * (phi_right - phi_left) / d_w

where ``r`` is the wheel radius and ``d_w`` the distance between wheel centres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidInputError

TWO_PI = 2.0 * math.pi

# Relative slack before a value is considered over a cap; keeps saturate() idempotent.
_CAP_SLACK = 1e-12


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(theta, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def _check_finite(*values: float) -> None:
    for value in values:
        if not math.isfinite(value):
            raise InvalidInputError(f"non-finite value {value!r}")


@dataclass(frozen=True)
class RobotParams:
    """Physical constants of one robot.

    Defaults suit a 7 cm chassis: 16 mm wheels, 6 cm track, 1440-tick
    encoders, 0.28 m/s top speed.
    """

    wheel_radius_m: float = 0.016
    wheel_base_m: float = 0.06
    ticks_per_rev: int = 1440
    max_linear_speed_mps: float = 0.28
    max_wheel_speed_radps: float = 17.5
    footprint_radius_m: float = 0.035

    def __post_init__(self):
        for name in ("wheel_radius_m", "wheel_base_m", "max_linear_speed_mps",
                     "max_wheel_speed_radps", "footprint_radius_m"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidInputError(f"{name} must be positive, got {value!r}")
        if int(self.ticks_per_rev) != self.ticks_per_rev or self.ticks_per_rev <= 0:
            raise InvalidInputError(f"ticks_per_rev must be a positive integer, got {self.ticks_per_rev!r}")
        wheel_limit = self.wheel_radius_m * self.max_wheel_speed_radps
        if self.max_linear_speed_mps > wheel_limit * (1 + _CAP_SLACK):
            raise InvalidInputError(
                f"max_linear_speed_mps={self.max_linear_speed_mps} exceeds "
                f"wheel_radius_m * max_wheel_speed_radps = {wheel_limit}"
            )

    @property
    def angle_per_tick(self) -> float:
        return TWO_PI / self.ticks_per_rev

    @property
    def meters_per_tick(self) -> float:
        return self.wheel_radius_m * self.angle_per_tick


@dataclass(frozen=True)
class Pose2D:
    x_m: float = 0.0
    y_m: float = 0.0
    theta_rad: float = 0.0

    def normalized(self) -> "Pose2D":
        return Pose2D(self.x_m, self.y_m, normalize_angle(self.theta_rad))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x_m, self.y_m, self.theta_rad)


@dataclass(frozen=True)
class Twist:
    linear_mps: float = 0.0
    angular_radps: float = 0.0


@dataclass(frozen=True)
class WheelSpeeds:
    left_radps: float = 0.0
    right_radps: float = 0.0


def forward_kinematics(wheels: WheelSpeeds, params: RobotParams) -> Twist:
    """Body twist produced by the given wheel speeds."""
    _check_finite(wheels.left_radps, wheels.right_radps)
    r = params.wheel_radius_m
    return Twist(
        r * (wheels.right_radps + wheels.left_radps) / 2.0,
        r * (wheels.right_radps - wheels.left_radps) / params.wheel_base_m,
    )


def inverse_kinematics(cmd: Twist, params: RobotParams) -> WheelSpeeds:
    """Wheel speeds that realise ``cmd``."""
    _check_finite(cmd.linear_mps, cmd.angular_radps)
    half_track = cmd.angular_radps * params.wheel_base_m / 2.0
    r = params.wheel_radius_m
    return WheelSpeeds((cmd.linear_mps - half_track) / r, (cmd.linear_mps + half_track) / r)


def saturate_twist(cmd: Twist, params: RobotParams) -> Twist:
    """Scale ``cmd`` down uniformly until both wheel and linear limits hold.

    The v:w ratio (and so the turning radius) is preserved; commands already
    within limits are returned unchanged.
    """
    _check_finite(cmd.linear_mps, cmd.angular_radps)
    wheels = inverse_kinematics(cmd, params)
    scale = 1.0
    peak = max(abs(wheels.left_radps), abs(wheels.right_radps))
    if peak > params.max_wheel_speed_radps * (1 + _CAP_SLACK):
        scale = params.max_wheel_speed_radps / peak
    speed = abs(cmd.linear_mps) * scale
    if speed > params.max_linear_speed_mps * (1 + _CAP_SLACK):
        scale *= params.max_linear_speed_mps / speed
    if scale == 1.0:
        return cmd
    return Twist(cmd.linear_mps * scale, cmd.angular_radps * scale)
