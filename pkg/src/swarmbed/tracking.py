"""Simulated overhead camera: global poses with noise, and the charging-station service."""

from __future__ import annotations

import collections
import math
from dataclasses import dataclass

import numpy as np

from .bus import CHARGING_RELEASE, CHARGING_REQUEST, GLOBAL_POSITION, Bus, TopicPath
from .errors import DegenerateFrameError, InvalidRequestError
from .kinematics import Pose2D, normalize_angle
from .world import ChargingStation, WorldState

# Per-axis sigma whose Rayleigh mean sigma*sqrt(pi/2) is 8 mm.
DEFAULT_CAMERA_SIGMA_M = 0.008 / math.sqrt(math.pi / 2.0)
DEFAULT_HEADING_SIGMA_RAD = 0.01
DEFAULT_CAMERA_RATE_HZ = 30.0


@dataclass(frozen=True)
class FrameCalibration:
    """Affine map from raw camera coordinates to the table frame.

    The three markers span the frame: ``origin`` maps to (0, 0), ``x_axis``
    to (axis_length_m, 0) and ``y_axis`` to (0, axis_length_m). Marker
    spacing therefore sets the scale of the field.
    """

    origin_marker: tuple[float, float]
    x_axis_marker: tuple[float, float]
    y_axis_marker: tuple[float, float]
    axis_length_m: float
    matrix: np.ndarray
    inverse_matrix: np.ndarray

    def to_global(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float) - np.asarray(self.origin_marker)
        return p @ self.matrix.T

    def to_raw(self, point) -> np.ndarray:
        q = np.asarray(point, dtype=float)
        return q @ self.inverse_matrix.T + np.asarray(self.origin_marker)

    def heading_to_global(self, theta: float) -> float:
        d = self.matrix @ np.array([math.cos(theta), math.sin(theta)])
        return math.atan2(d[1], d[0])

    def heading_to_raw(self, theta: float) -> float:
        d = self.inverse_matrix @ np.array([math.cos(theta), math.sin(theta)])
        return math.atan2(d[1], d[0])

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.matrix, np.eye(2))) and tuple(self.origin_marker) == (0.0, 0.0)


def calibrate_frame(origin, x_point, y_point, axis_length_m: float = 1.0) -> FrameCalibration:
    """Build the raw-to-global transform from three axis markers."""
    o = np.asarray(origin, dtype=float)
    ex = np.asarray(x_point, dtype=float) - o
    ey = np.asarray(y_point, dtype=float) - o
    basis = np.column_stack([ex, ey])
    scale = max(np.linalg.norm(ex), np.linalg.norm(ey))
    if scale == 0 or abs(np.linalg.det(basis)) <= 1e-12 * scale * scale:
        raise DegenerateFrameError("axis markers are coincident or collinear")
    inverse = basis / axis_length_m
    matrix = np.linalg.inv(inverse)
    return FrameCalibration(tuple(map(float, o)), tuple(map(float, o + ex)), tuple(map(float, o + ey)),
                            float(axis_length_m), matrix, inverse)


IDENTITY_FRAME = calibrate_frame((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))


@dataclass(frozen=True)
class GlobalPoseReport:
    robot_id: str
    pose: Pose2D
    stamp_s: float

    def as_payload(self) -> dict:
        return {"robot_id": self.robot_id, "x_m": self.pose.x_m, "y_m": self.pose.y_m,
                "theta_rad": self.pose.theta_rad, "stamp_s": self.stamp_s}


def observe_poses(world: WorldState, cal: FrameCalibration, noise_sigma_m: float,
                  rng: np.random.Generator, heading_sigma_rad: float = DEFAULT_HEADING_SIGMA_RAD,
                  drop_probability: float = 0.0) -> list[GlobalPoseReport]:
    """One camera frame: every robot's pose in the table frame plus Gaussian noise.

    The true pose is projected into raw camera coordinates and mapped back
    through ``cal``, as a real tracker would.
    """
    reports = []
    for robot in world.robots:
        if drop_probability > 0 and rng.random() < drop_probability:
            continue
        truth = robot.pose
        if cal.is_identity:
            x, y, theta = truth.x_m, truth.y_m, truth.theta_rad
        else:
            raw = cal.to_raw((truth.x_m, truth.y_m))
            x, y = cal.to_global(raw)
            theta = cal.heading_to_global(cal.heading_to_raw(truth.theta_rad))
        if noise_sigma_m > 0 or heading_sigma_rad > 0:
            nx, ny, nt = rng.normal(0.0, 1.0, size=3)
            x += noise_sigma_m * nx
            y += noise_sigma_m * ny
            theta += heading_sigma_rad * nt
        reports.append(GlobalPoseReport(robot.id, Pose2D(float(x), float(y), normalize_angle(theta)),
                                        world.sim_time_s))
    return reports


def assign_charging_station(stations: list[ChargingStation], robot_id: str, robot_pose: Pose2D,
                            known_robots=None) -> ChargingStation | None:
    """Give ``robot_id`` the nearest free station (ties: lowest station id).

    A robot that already holds a station gets the same one back. Returns
    None when every station is taken.
    """
    if known_robots is not None and robot_id not in known_robots:
        raise InvalidRequestError(f"unknown robot {robot_id!r}")
    for st in stations:
        if st.occupied_by == robot_id:
            return st
    free = [st for st in stations if st.occupied_by is None]
    if not free:
        return None
    best = min(free, key=lambda st: (math.hypot(st.position[0] - robot_pose.x_m,
                                                st.position[1] - robot_pose.y_m), st.id))
    best.occupied_by = robot_id
    return best


def release_charging_station(stations: list[ChargingStation], robot_id: str) -> ChargingStation | None:
    for st in stations:
        if st.occupied_by == robot_id:
            st.occupied_by = None
            return st
    return None


def stations_exclusive(stations: list[ChargingStation]) -> bool:
    holders = [st.occupied_by for st in stations if st.occupied_by is not None]
    return len(holders) == len(set(holders))


class TrackingServer:
    """Publishes ``/global_position`` at the camera rate and runs the charging service.

    Charging requests are answered in arrival order. A robot turned away is
    queued; when a station frees up it goes to the head of the queue, which
    receives it on its next request.
    """

    def __init__(self, bus: Bus, world: WorldState, rng: np.random.Generator,
                 calibration: FrameCalibration = IDENTITY_FRAME,
                 noise_sigma_m: float = DEFAULT_CAMERA_SIGMA_M,
                 heading_sigma_rad: float = DEFAULT_HEADING_SIGMA_RAD,
                 rate_hz: float = DEFAULT_CAMERA_RATE_HZ, drop_probability: float = 0.0):
        self.bus = bus
        self.world = world
        self.rng = rng
        self.calibration = calibration
        self.noise_sigma_m = noise_sigma_m
        self.heading_sigma_rad = heading_sigma_rad
        self.drop_probability = drop_probability
        self.publisher = bus.advertise(TopicPath.global_(GLOBAL_POSITION), rate_hz)
        self.waitlist: collections.deque[str] = collections.deque()
        self.last_reports: dict[str, GlobalPoseReport] = {}
        self.frames = 0
        bus.serve(TopicPath.global_(CHARGING_REQUEST), self._on_request)
        bus.serve(TopicPath.global_(CHARGING_RELEASE), self._on_release)

    def tick(self, now: float) -> list[GlobalPoseReport] | None:
        """Emit a frame if one is due at ``now``; returns the reports or None."""
        if not self.publisher.due(now):
            return None
        reports = observe_poses(self.world, self.calibration, self.noise_sigma_m, self.rng,
                                self.heading_sigma_rad, self.drop_probability)
        self.publisher.publish([r.as_payload() for r in reports], now)
        self.last_reports = {r.robot_id: r for r in reports}
        self.frames += 1
        return reports

    def _known(self) -> set[str]:
        return {r.id for r in self.world.robots}

    def _on_request(self, body: dict) -> dict | None:
        robot_id = body["robot_id"]
        known = self._known()
        if robot_id not in known:
            raise InvalidRequestError(f"unknown robot {robot_id!r}")
        stations = self.world.charging_stations
        held = any(st.occupied_by == robot_id for st in stations)
        free = sum(st.occupied_by is None for st in stations)
        ahead = self.waitlist.index(robot_id) if robot_id in self.waitlist else len(self.waitlist)
        if not held and free <= ahead:
            # free stations are reserved for robots queued earlier
            if robot_id not in self.waitlist:
                self.waitlist.append(robot_id)
            return None
        station = assign_charging_station(stations, robot_id, self.world.robot(robot_id).pose, known)
        if robot_id in self.waitlist:
            self.waitlist.remove(robot_id)
        return {"station_id": station.id, "x_m": station.position[0], "y_m": station.position[1]}

    def _on_release(self, body: dict) -> dict | None:
        station = release_charging_station(self.world.charging_stations, body["robot_id"])
        return None if station is None else {"station_id": station.id}
