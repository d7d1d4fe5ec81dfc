"""Ground-truth world: robot motion, encoder ticks, sound field and batteries.

The world is stepped by a single loop; :func:`world_step` mutates the
:class:`WorldState` in place and returns it. Robots never interact
physically: overlapping footprints are detected by the caller, not resolved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, InvalidIntervalError
from .kinematics import Pose2D, RobotParams, Twist, WheelSpeeds, forward_kinematics
from .motor import MotorPlantParams, MotorState, motor_plant_step, plant_rotation
from .odometry import EncoderState, integrate_pose_exact

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class SoundSource:
    position: tuple[float, float]
    power_w: float = 1.0
    active: bool = True

    def __post_init__(self):
        if self.power_w < 0:
            raise InvalidInputError("sound source power must be >= 0")


@dataclass
class ChargingStation:
    id: str
    position: tuple[float, float]
    occupied_by: str | None = None
    charge_rate_w: float = 2.0


@dataclass(frozen=True)
class SoundModelParams:
    """Inverse-square field seen through a cos**k pickup lobe (k=0: isotropic)."""

    d_min_m: float = 0.05
    lobe_exponent: float = 0.0


@dataclass(frozen=True)
class PowerParams:
    idle_w: float = 0.9
    moving_w: float = 1.5
    capacity_wh: float = 2.0 * 3.7  # 2000 mAh LiPo at 3.7 V
    # divides the drawn power; 1.0 means no conversion losses
    efficiency: float = 1.0

    def __post_init__(self):
        if not (self.capacity_wh > 0 and 0 < self.efficiency <= 1):
            raise InvalidInputError("capacity must be positive and efficiency in (0, 1]")


@dataclass(frozen=True)
class EncoderNoiseParams:
    scale_sigma: float = 0.0
    jitter_sigma_ticks: float = 0.0
    quantize: bool = True


@dataclass
class EncoderNoise:
    """Realised encoder error for one robot.

    Per-wheel scale factors are drawn once; tick jitter accumulates as an
    integer random walk.
    """

    scale_left: float = 0.0
    scale_right: float = 0.0
    jitter_sigma_ticks: float = 0.0
    jitter_left: int = 0
    jitter_right: int = 0

    @classmethod
    def draw(cls, params: EncoderNoiseParams, rng: np.random.Generator) -> "EncoderNoise":
        if params.scale_sigma > 0:
            left, right = rng.normal(0.0, params.scale_sigma, size=2)
        else:
            left = right = 0.0
        return cls(float(left), float(right), params.jitter_sigma_ticks)


@dataclass
class RobotTruth:
    id: str
    pose: Pose2D
    motor_left: MotorState = field(default_factory=MotorState)
    motor_right: MotorState = field(default_factory=MotorState)
    encoders: EncoderState = field(default_factory=EncoderState)
    # fractional tick accumulators; the integer counts are their floor
    tick_accum_left: float = 0.0
    tick_accum_right: float = 0.0
    battery_wh: float = 2.0 * 3.7
    charging: bool = False
    twist: Twist = field(default_factory=Twist)
    energy_drawn_wh: float = 0.0
    energy_charged_wh: float = 0.0
    clamped: bool = False


@dataclass
class WorldState:
    robots: list[RobotTruth]
    table_size_m: tuple[float, float] = (2.5, 1.75)
    sound_sources: list[SoundSource] = field(default_factory=list)
    charging_stations: list[ChargingStation] = field(default_factory=list)
    rng_seed: int = 0
    params: RobotParams = field(default_factory=RobotParams)
    plant: MotorPlantParams = field(default_factory=MotorPlantParams)
    power: PowerParams = field(default_factory=PowerParams)
    quantize_ticks: bool = True
    sim_time_s: float = 0.0
    step_index: int = 0

    def __post_init__(self):
        ids = [r.id for r in self.robots]
        if len(set(ids)) != len(ids):
            raise InvalidInputError(f"duplicate robot ids in {ids}")

    def robot(self, robot_id: str) -> RobotTruth:
        for r in self.robots:
            if r.id == robot_id:
                return r
        raise KeyError(robot_id)


def _clamp_to_table(pose: Pose2D, table: tuple[float, float], margin: float) -> tuple[Pose2D, bool]:
    x = min(max(pose.x_m, margin), table[0] - margin)
    y = min(max(pose.y_m, margin), table[1] - margin)
    if x == pose.x_m and y == pose.y_m:
        return pose, False
    return Pose2D(x, y, pose.theta_rad), True


def battery_step(robot: RobotTruth, moving: bool, charging: bool, dt: float,
                 power: PowerParams, charge_rate_w: float = 0.0) -> RobotTruth:
    """Drain (or charge) the battery over ``dt`` seconds; mutates ``robot``.

    Drawn power interpolates between idle and moving by the mean absolute
    motor duty.
    """
    if not dt > 0:
        raise InvalidIntervalError(f"dt must be positive, got {dt!r}")
    hours = dt / SECONDS_PER_HOUR
    if charging:
        gained = min(charge_rate_w * hours, power.capacity_wh - robot.battery_wh)
        robot.battery_wh += gained
        robot.energy_charged_wh += gained
        return robot
    duty_fraction = 0.0
    if moving:
        duty_fraction = (abs(robot.motor_left.duty) + abs(robot.motor_right.duty)) / 2.0
    draw_w = (power.idle_w + (power.moving_w - power.idle_w) * duty_fraction) / power.efficiency
    used = min(draw_w * hours, robot.battery_wh)
    robot.battery_wh -= used
    robot.energy_drawn_wh += used
    return robot


def sample_microphone(robot: RobotTruth, sources: list[SoundSource],
                      model: SoundModelParams) -> float:
    """Sound intensity at the robot's microphone (mounted at its centre)."""
    total = 0.0
    x, y, theta = robot.pose.x_m, robot.pose.y_m, robot.pose.theta_rad
    for src in sources:
        if not src.active or src.power_w == 0:
            continue
        dx, dy = src.position[0] - x, src.position[1] - y
        d = max(math.hypot(dx, dy), model.d_min_m)
        gain = 1.0
        if model.lobe_exponent > 0:
            bearing = math.atan2(dy, dx) - theta
            gain = max(0.0, math.cos(bearing)) ** model.lobe_exponent
        total += src.power_w / (4.0 * math.pi * d * d) * gain
    return total


def _noisy_count(clean: int | float, scale: float, jitter: int) -> int | float:
    if isinstance(clean, (int, np.integer)):
        return int(clean) + int(round(clean * scale)) + jitter
    return clean * (1.0 + scale) + jitter


def inject_encoder_noise(ticks: EncoderState, noise: EncoderNoise,
                         rng: np.random.Generator) -> EncoderState:
    """Apply scale error and one step of tick jitter to a clean reading.

    Integer counts stay integers. With zero scale and zero jitter the
    reading is returned unchanged.
    """
    if noise.jitter_sigma_ticks > 0:
        jl, jr = rng.normal(0.0, noise.jitter_sigma_ticks, size=2)
        noise.jitter_left += int(round(jl))
        noise.jitter_right += int(round(jr))
    if noise.scale_left == 0 and noise.scale_right == 0 and noise.jitter_left == 0 \
            and noise.jitter_right == 0:
        return ticks
    return EncoderState(
        _noisy_count(ticks.left_ticks, noise.scale_left, noise.jitter_left),
        _noisy_count(ticks.right_ticks, noise.scale_right, noise.jitter_right),
        ticks.timestamp_s,
    )


def station_at(world: WorldState, robot: RobotTruth, radius_m: float) -> ChargingStation | None:
    """Station assigned to ``robot`` if the robot is docked within ``radius_m``."""
    for st in world.charging_stations:
        if st.occupied_by == robot.id and math.hypot(
                st.position[0] - robot.pose.x_m, st.position[1] - robot.pose.y_m) <= radius_m:
            return st
    return None


def world_step(world: WorldState, dt: float) -> WorldState:
    """Advance every robot by ``dt`` using the duties already set on its motors."""
    if not dt > 0:
        raise InvalidIntervalError(f"dt must be positive, got {dt!r}")
    params, plant = world.params, world.plant
    a = params.angle_per_tick
    t_next = world.sim_time_s + dt
    for robot in world.robots:
        duty_l, duty_r = robot.motor_left.duty, robot.motor_right.duty
        if robot.battery_wh <= 0.0 or robot.charging:
            duty_l = duty_r = 0.0
        rot_l = plant_rotation(robot.motor_left.wheel_speed_radps, duty_l, dt, plant)
        rot_r = plant_rotation(robot.motor_right.wheel_speed_radps, duty_r, dt, plant)
        robot.motor_left = motor_plant_step(robot.motor_left, duty_l, dt, plant)
        robot.motor_right = motor_plant_step(robot.motor_right, duty_r, dt, plant)

        twist = forward_kinematics(WheelSpeeds(rot_l / dt, rot_r / dt), params)
        pose = integrate_pose_exact(robot.pose, twist.linear_mps, twist.angular_radps, dt)
        robot.pose, robot.clamped = _clamp_to_table(pose, world.table_size_m,
                                                    params.footprint_radius_m)
        robot.twist = twist

        robot.tick_accum_left += rot_l / a
        robot.tick_accum_right += rot_r / a
        if world.quantize_ticks:
            robot.encoders = EncoderState(math.floor(robot.tick_accum_left),
                                          math.floor(robot.tick_accum_right), t_next)
        else:
            robot.encoders = EncoderState(robot.tick_accum_left, robot.tick_accum_right, t_next)

        rate = 0.0
        if robot.charging:
            for st in world.charging_stations:
                if st.occupied_by == robot.id:
                    rate = st.charge_rate_w
        moving = duty_l != 0.0 or duty_r != 0.0
        battery_step(robot, moving, robot.charging, dt, world.power, rate)
    world.sim_time_s = t_next
    world.step_index += 1
    return world


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def min_separation(world: WorldState) -> float:
    if len(world.robots) < 2:
        return math.inf
    pts = np.array([[r.pose.x_m, r.pose.y_m] for r in world.robots])
    d = pairwise_distances(pts)
    return float(d[np.triu_indices(len(pts), 1)].min())
