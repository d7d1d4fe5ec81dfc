"""Robot-side controller: the node each robot runs under its own namespace.

It listens on ``cmd_vel`` and ``position_cmd``, runs the two wheel PID
loops, dead-reckons from its encoders and publishes ``odom``, ``battery``
and ``sensors/sound``. A low-battery routine asks the tracking server for a
charging station, drives there and charges until full.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bus import (CHARGING_RELEASE, CHARGING_REQUEST, GLOBAL_POSITION, RESERVED_CHANNELS, Bus,
                  TopicPath)
from .controllers import GoToGoalParams, SwarmConfig, collision_avoidance, position_controller
from .errors import RequestTimeout
from .kinematics import Pose2D, RobotParams, Twist, inverse_kinematics, saturate_twist
from .motor import PidGains, pid_step
from .odometry import EncoderState, OdometryEstimate, odom_payload, update_odometry
from .world import EncoderNoise, RobotTruth, inject_encoder_noise


@dataclass(frozen=True)
class TopicRates:
    odom_hz: float | None = 50.0
    battery_hz: float | None = 1.0
    sound_hz: float | None = 10.0


@dataclass(frozen=True)
class ChargePolicy:
    enabled: bool = False
    low_wh: float = 1.0
    full_wh: float = 7.4
    dock_radius_m: float = 0.03
    retry_s: float = 1.0


class RobotNode:
    def __init__(self, bus: Bus, truth: RobotTruth, params: RobotParams, gains: PidGains,
                 encoder_noise: EncoderNoise, rng: np.random.Generator,
                 rates: TopicRates = TopicRates(), goal: GoToGoalParams = GoToGoalParams(),
                 charge: ChargePolicy = ChargePolicy(), avoid: SwarmConfig | None = None):
        self.bus = bus
        self.truth = truth
        self.id = truth.id
        self.params = params
        self.gains = gains
        self.noise = encoder_noise
        self.rng = rng
        self.goal_params = goal
        self.charge = charge
        self.avoid = avoid
        ns = truth.id
        self._cmd_sub = bus.subscribe(TopicPath.robot(ns, "cmd_vel"))
        self._goal_sub = bus.subscribe(TopicPath.robot(ns, "position_cmd"))
        self._odom_pub = bus.advertise(TopicPath.robot(ns, "odom"), rates.odom_hz)
        self._battery_pub = bus.advertise(TopicPath.robot(ns, "battery"), rates.battery_hz)
        self._sound_pub = bus.advertise(TopicPath.robot(ns, "sensors/sound"), rates.sound_hz)
        self._reserved = [bus.advertise(TopicPath.robot(ns, ch)) for ch in RESERVED_CHANNELS]
        self.command = Twist()
        self.applied = Twist()
        self.goal: tuple[float, float] | None = None
        self.last_reading = self._read_encoders()
        self.odom = OdometryEstimate(pose=truth.pose, stamp_s=self.last_reading.timestamp_s)
        self.station: dict | None = None
        self._next_charge_request = 0.0
        self.sound = 0.0

    def _read_encoders(self) -> EncoderState:
        return inject_encoder_noise(self.truth.encoders, self.noise, self.rng)

    def _global_poses(self) -> tuple[Pose2D, list[tuple[float, float]]]:
        """Own pose (camera if available, else odometry) and the other robots' positions."""
        env = self.bus.latest(TopicPath.global_(GLOBAL_POSITION))
        own, others = self.odom.pose, []
        if env is not None:
            for rep in env.payload:
                if rep["robot_id"] == self.id:
                    own = Pose2D(rep["x_m"], rep["y_m"], rep["theta_rad"])
                else:
                    others.append((rep["x_m"], rep["y_m"]))
        return own, others

    def _drive_to(self, pose: Pose2D, goal: tuple[float, float], others, tol: float) -> Twist:
        """Go-to-goal that steers around other robots, which are treated as parked."""
        params = GoToGoalParams(self.goal_params.k_v, self.goal_params.k_omega, tol)
        if self.avoid is None or not others:
            return position_controller(pose, goal, params, self.params)
        pts = np.array([(pose.x_m, pose.y_m)] + list(others))
        vel = np.zeros_like(pts)
        vel[0] = (goal[0] - pose.x_m, goal[1] - pose.y_m)
        if math.hypot(*vel[0]) <= tol:
            return Twist()
        targets = np.arange(len(pts))
        targets[0] = -1
        step = collision_avoidance(pts, vel, self.avoid, targets)[0]
        return position_controller(pose, (pose.x_m + step[0], pose.y_m + step[1]), params, self.params)

    # -- control ----------------------------------------------------------
    def _update_charging(self, now: float) -> Twist | None:
        """Returns an overriding command while the charge routine is active."""
        truth = self.truth
        if truth.charging:
            if truth.battery_wh >= self.charge.full_wh - 1e-12:
                truth.charging = False
                self.bus.request(TopicPath.global_(CHARGING_RELEASE), {"robot_id": self.id}, 1.0)
                self.station = None
                return None
            return Twist()
        if self.station is None:
            if truth.battery_wh > self.charge.low_wh or now < self._next_charge_request:
                return None
            self._next_charge_request = now + self.charge.retry_s
            try:
                self.station = self.bus.request(TopicPath.global_(CHARGING_REQUEST),
                                                {"robot_id": self.id}, 1.0)
            except RequestTimeout:
                self.station = None
            if self.station is None:
                return Twist()
        st = self.station
        pose, others = self._global_poses()
        if math.hypot(st["x_m"] - pose.x_m, st["y_m"] - pose.y_m) <= self.charge.dock_radius_m:
            truth.charging = True
            return Twist()
        return self._drive_to(pose, (st["x_m"], st["y_m"]), others, self.charge.dock_radius_m / 2)

    def control(self, now: float, dt: float) -> None:
        """Consume commands and set motor duties for the next world step."""
        env = self._goal_sub.latest()
        if env is not None:
            self.goal = (env.payload["x_m"], env.payload["y_m"])
        env = self._cmd_sub.latest()
        if env is not None:
            self.goal = None
            self.command = Twist(env.payload["v_mps"], env.payload["w_radps"])
        cmd = self.command
        if self.goal is not None:
            cmd = position_controller(self.odom.pose, self.goal, self.goal_params, self.params)
        if self.charge.enabled:
            override = self._update_charging(now)
            if override is not None:
                cmd = override
        cmd = saturate_twist(cmd, self.params)
        self.applied = cmd
        wheels = inverse_kinematics(cmd, self.params)
        t = self.truth
        t.motor_left = pid_step(t.motor_left, wheels.left_radps, t.motor_left.wheel_speed_radps,
                                dt, self.gains)
        t.motor_right = pid_step(t.motor_right, wheels.right_radps,
                                 t.motor_right.wheel_speed_radps, dt, self.gains)

    # -- sensing ----------------------------------------------------------
    def sense(self, now: float, sound: float) -> None:
        """Read encoders after a world step and publish sensor topics."""
        reading = self._read_encoders()
        if reading.timestamp_s > self.last_reading.timestamp_s:
            self.odom = update_odometry(self.odom, self.last_reading, reading, self.params)
        self.last_reading = reading
        self.sound = sound
        self._odom_pub.publish(odom_payload(self.odom), now)
        self._battery_pub.publish({"battery_wh": self.truth.battery_wh,
                                   "charging": float(self.truth.charging)}, now)
        self._sound_pub.publish(sound, now)
