"""Go-to-goal control and the swarm consensus laws.

The swarm laws return raw planar velocities, one row per robot. The
executor turns them into per-tick displacements ``gain_epsilon * xdot``,
adds collision avoidance and converts each to a body twist.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .bus import GLOBAL_POSITION, Bus, TopicPath, aggregate_matrix
from .errors import DegenerateSwarmError, FormationSpecError, InvalidInputError, StaleDataError
from .kinematics import Pose2D, RobotParams, Twist, normalize_angle, saturate_twist


@dataclass(frozen=True)
class GoToGoalParams:
    k_v: float = 1.0
    k_omega: float = 3.0
    goal_tol_m: float = 0.02


def position_controller(current: Pose2D, goal: Sequence[float], params: GoToGoalParams,
                        robot: RobotParams) -> Twist:
    """Drive towards ``goal``; turns in place while the goal is behind."""
    gx, gy = float(goal[0]), float(goal[1])
    if not (math.isfinite(gx) and math.isfinite(gy)):
        raise InvalidInputError(f"goal must be finite, got {goal!r}")
    dx, dy = gx - current.x_m, gy - current.y_m
    distance = math.hypot(dx, dy)
    if distance <= params.goal_tol_m:
        return Twist(0.0, 0.0)
    alpha = normalize_angle(math.atan2(dy, dx) - current.theta_rad)
    v = params.k_v * distance * max(0.0, math.cos(alpha))
    return saturate_twist(Twist(v, params.k_omega * alpha), robot)


@dataclass(frozen=True)
class SwarmConfig:
    gain_epsilon: float = 0.2
    neighbor_graph: str = "complete"  # or "radius"
    comm_radius_m: float | None = None
    safety_radius_m: float = 0.12
    k_rep: float = 1.0
    convergence_tol_m: float = 0.005
    max_steps: int = 2400
    footprint_radius_m: float = 0.035
    avoidance: bool = True
    # control ticks of positions averaged before testing for convergence
    convergence_window: int = 10

    def __post_init__(self):
        if self.convergence_window < 1:
            raise InvalidInputError("convergence_window must be at least 1")
        if not self.gain_epsilon > 0:
            raise InvalidInputError("gain_epsilon must be positive")
        if self.neighbor_graph not in ("complete", "radius"):
            raise InvalidInputError(f"unknown neighbor_graph {self.neighbor_graph!r}")
        if self.neighbor_graph == "radius" and not (self.comm_radius_m and self.comm_radius_m > 0):
            raise InvalidInputError("radius graph needs a positive comm_radius_m")
        if self.safety_radius_m < 2 * self.footprint_radius_m:
            raise InvalidInputError("safety_radius_m must be at least twice the footprint radius")

    def check_stability(self, n_robots: int) -> None:
        """Raise unless the discrete consensus step contracts for ``n_robots``."""
        if self.gain_epsilon * (n_robots - 1) >= 1:
            raise InvalidInputError(
                f"gain_epsilon*(N-1) = {self.gain_epsilon * (n_robots - 1):.3f} must be < 1")


def _as_points(positions) -> np.ndarray:
    pts = np.asarray(positions, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInputError(f"positions must be an (N, 2) array, got shape {pts.shape}")
    return pts


def neighbor_matrix(positions, cfg: SwarmConfig) -> np.ndarray:
    """Boolean adjacency (no self loops)."""
    pts = _as_points(positions)
    n = len(pts)
    adj = ~np.eye(n, dtype=bool)
    if cfg.neighbor_graph == "radius":
        diff = pts[:, None, :] - pts[None, :, :]
        adj &= np.hypot(diff[..., 0], diff[..., 1]) <= cfg.comm_radius_m
    return adj


def rendezvous_step(positions, cfg: SwarmConfig) -> np.ndarray:
    """xdot_i = sum over neighbours j of (x_j - x_i)."""
    pts = _as_points(positions)
    if len(pts) < 2:
        raise DegenerateSwarmError("rendezvous needs at least two robots")
    adj = neighbor_matrix(pts, cfg).astype(float)
    return adj @ pts - adj.sum(axis=1)[:, None] * pts


def sound_rendezvous_step(positions, intensities, cfg: SwarmConfig) -> np.ndarray:
    """Each robot heads for the loudest robot it can see (itself included).

    Ties go to the lowest index. If no robot hears anything the plain
    rendezvous law is used.
    """
    pts = _as_points(positions)
    s = np.asarray(intensities, dtype=float)
    if s.shape != (len(pts),) or not np.all(np.isfinite(s)):
        raise InvalidInputError("need one finite intensity per robot")
    if len(pts) < 2:
        raise DegenerateSwarmError("rendezvous needs at least two robots")
    loudest = loudest_neighbor(pts, s, cfg)
    if loudest is None:
        return rendezvous_step(pts, cfg)
    return pts[loudest] - pts


def loudest_neighbor(positions, intensities, cfg: SwarmConfig) -> np.ndarray | None:
    """Index of the loudest visible robot (self included) for every robot.

    Ties go to the lowest index; None when no robot hears anything.
    """
    pts = _as_points(positions)
    s = np.asarray(intensities, dtype=float)
    if not np.any(s > 0):
        return None
    visible = neighbor_matrix(pts, cfg) | np.eye(len(pts), dtype=bool)
    masked = np.where(visible, s[None, :], -np.inf)
    return np.argmax(masked, axis=1)  # first maximum = lowest index


@dataclass
class FormationSpec:
    """Target shape: one offset per robot, stored with zero centroid."""

    offsets: np.ndarray
    assignment: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=float)
        if off.ndim != 2 or off.shape[1] != 2:
            raise FormationSpecError("offsets must be an (N, 2) array")
        self.offsets = off - off.mean(axis=0)
        if self.assignment:
            idx = sorted(self.assignment.values())
            if idx != list(range(len(off))):
                raise FormationSpecError("assignment must use every offset exactly once")

    def ordered_offsets(self, robot_ids: Sequence[str]) -> np.ndarray:
        if len(robot_ids) != len(self.offsets):
            raise FormationSpecError(
                f"{len(self.offsets)} offsets for {len(robot_ids)} robots")
        if not self.assignment:
            return self.offsets
        try:
            return self.offsets[[self.assignment[r] for r in robot_ids]]
        except KeyError as exc:
            raise FormationSpecError(f"robot {exc.args[0]!r} has no formation slot") from exc


def polygon_offsets(n: int, side_m: float, phase_rad: float = math.pi / 2) -> np.ndarray:
    """Vertices of a regular n-gon with the given side length, centred at 0."""
    radius = side_m / (2.0 * math.sin(math.pi / n))
    angles = phase_rad + 2.0 * math.pi * np.arange(n) / n
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def assign_offsets(positions, offsets) -> np.ndarray:
    """Robot-to-slot assignment minimising total squared travel.

    Returns ``slot[i]`` for robot ``i``; the shape is placed at the swarm
    centroid, where the formation law keeps it.
    """
    pts = _as_points(positions)
    off = np.asarray(offsets, dtype=float)
    targets = off - off.mean(axis=0) + pts.mean(axis=0)
    cost = ((pts[:, None, :] - targets[None, :, :]) ** 2).sum(axis=2)
    rows, cols = linear_sum_assignment(cost)
    slot = np.empty(len(pts), dtype=int)
    slot[rows] = cols
    return slot


def formation_step(positions, offsets, cfg: SwarmConfig) -> np.ndarray:
    """Consensus on chi_i = x_i - xi_i; fixed points are translated copies of the shape."""
    pts = _as_points(positions)
    off = np.asarray(offsets, dtype=float)
    if off.shape != pts.shape:
        raise FormationSpecError(f"{len(off)} offsets for {len(pts)} robots")
    return rendezvous_step(pts - off, cfg)


def formation_error(positions, offsets) -> float:
    """Largest distance from a robot to its slot in the best-fitting translated shape."""
    pts = _as_points(positions)
    off = np.asarray(offsets, dtype=float)
    shift = (pts - off).mean(axis=0)
    return float(np.max(np.hypot(*(pts - off - shift).T)))


def _separation_unit(pts: np.ndarray, i: int, j: int) -> tuple[np.ndarray, float]:
    """Unit vector from j to i and their distance (fixed direction if coincident)."""
    delta = pts[i] - pts[j]
    d = float(math.hypot(delta[0], delta[1]))
    if d > 1e-12:
        return delta / d, d
    angle = math.pi * (i - j) / 7.0 + (0.0 if i < j else math.pi)
    return np.array([math.cos(angle), math.sin(angle)]), d


def collision_avoidance(positions, velocities, cfg: SwarmConfig, targets=None) -> np.ndarray:
    """Linear repulsion inside the safety radius, then drop any closing motion.

    For every pair closer than ``safety_radius_m`` each robot is pushed away
    by ``k_rep * (r_s - d)`` and the part of its velocity pointing at the
    other robot is removed.

    A robot blocked by anything other than its target turns the removed
    part sideways and slides around the blocker. ``targets[i]`` optionally
    names the robot that robot ``i`` is heading for (``i`` itself to hold
    position, -1 for none). A robot holding position is not pushed; its
    neighbour takes the push alone.
    """
    pts = _as_points(positions)
    out = np.array(velocities, dtype=float, copy=True)
    n = len(pts)
    r_s = cfg.safety_radius_m
    if targets is None:
        targets = np.full(n, -1)
    targets = np.asarray(targets)
    hold = targets == np.arange(n)
    blockers: list[list[tuple[int, np.ndarray]]] = [[] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            unit, d = _separation_unit(pts, i, j)
            if d < r_s:
                push = cfg.k_rep * (r_s - d) * unit
                if not hold[i] or hold[j]:
                    out[i] += push
                if not hold[j] or hold[i]:
                    out[j] -= push
                blockers[i].append((j, unit))
                blockers[j].append((i, -unit))
    for _ in range(2):
        for k in range(n):
            removed = []
            for other, away in blockers[k]:
                closing = -out[k] @ away
                if closing > 0:
                    out[k] += closing * away
                    if not hold[k] and targets[k] != other:
                        removed.append((closing, np.array([-away[1], away[0]])))
            if removed:
                # one turning sense per robot so a wedge of blockers cannot cancel it
                lean = sum(c * (out[k] @ t) for c, t in removed)
                sense = 1.0 if lean >= 0 else -1.0
                for c, t in removed:
                    out[k] += sense * c * t
    return out


def guard_twist(pose: Pose2D, twist: Twist, others, safety_radius_m: float) -> Twist:
    """Stop forward motion that would close on a robot inside the safety radius."""
    if twist.linear_mps == 0.0:
        return twist
    hx = math.cos(pose.theta_rad) * math.copysign(1.0, twist.linear_mps)
    hy = math.sin(pose.theta_rad) * math.copysign(1.0, twist.linear_mps)
    for ox, oy in others:
        dx, dy = ox - pose.x_m, oy - pose.y_m
        if math.hypot(dx, dy) < safety_radius_m and dx * hx + dy * hy > 0:
            return Twist(0.0, twist.angular_radps)
    return twist


def consensus_iterate(positions, step_fn: Callable[[np.ndarray], np.ndarray], gain: float,
                      steps: int) -> np.ndarray:
    """Point-mass discretisation x <- x + gain * step_fn(x); returns all iterates."""
    x = _as_points(positions).copy()
    out = [x.copy()]
    for _ in range(steps):
        x = x + gain * step_fn(x)
        out.append(x.copy())
    return np.array(out)


@dataclass
class RunSummary:
    algorithm: str
    ticks: int = 0
    stale_ticks: int = 0
    converged: bool = False
    convergence_tick: int | None = None
    convergence_time_s: float | None = None


class SwarmExecutor:
    """Swarm-level control loop speaking to robots only through the bus.

    Each tick reads positions (camera or odometry), evaluates the chosen
    law, scales by ``gain_epsilon``, applies collision avoidance and
    publishes one ``cmd_vel`` per active robot.
    """

    def __init__(self, bus: Bus, robot_ids: Sequence[str], cfg: SwarmConfig,
                 algorithm: str = "rendezvous", robot_params: RobotParams | None = None,
                 goal: GoToGoalParams | None = None, formation: FormationSpec | None = None,
                 position_source: str = "camera", staleness_s: float = 0.25):
        if algorithm not in ("rendezvous", "sound_rendezvous", "formation"):
            raise InvalidInputError(f"unknown algorithm {algorithm!r}")
        if position_source not in ("camera", "odometry"):
            raise InvalidInputError(f"unknown position source {position_source!r}")
        if algorithm == "formation" and formation is None:
            raise FormationSpecError("formation algorithm needs a FormationSpec")
        self.bus = bus
        self.cfg = cfg
        self.algorithm = algorithm
        self.robot_params = robot_params or RobotParams()
        self.goal = goal or GoToGoalParams(goal_tol_m=cfg.convergence_tol_m)
        self.formation = formation
        self.position_source = position_source
        self.staleness_s = staleness_s
        self.active: list[str] = []
        self._cmd_pubs: dict = {}
        self.summary = RunSummary(algorithm)
        self.last_displacements: np.ndarray | None = None
        self._window: deque = deque(maxlen=cfg.convergence_window)
        self._global_sub = bus.subscribe(TopicPath.global_(GLOBAL_POSITION), depth=1)
        for rid in robot_ids:
            self.add_robot(rid)

    def add_robot(self, robot_id: str) -> None:
        if robot_id in self.active:
            return
        self.active.append(robot_id)
        self.active.sort()
        self._window.clear()
        self._cmd_pubs[robot_id] = self.bus.advertise(TopicPath.robot(robot_id, "cmd_vel"))

    def remove_robot(self, robot_id: str) -> None:
        if robot_id not in self.active:
            return
        self.active.remove(robot_id)
        self._window.clear()
        pub = self._cmd_pubs.pop(robot_id)
        pub.publish({"v_mps": 0.0, "w_radps": 0.0})
        pub.close()

    def _poses(self, now: float) -> list[Pose2D]:
        if self.position_source == "camera":
            env = self._global_sub.latest() or self.bus.latest(TopicPath.global_(GLOBAL_POSITION))
            if env is None or now - env.stamp_s > self.staleness_s:
                raise StaleDataError("no recent global position frame")
            by_id = {rep["robot_id"]: rep for rep in env.payload}
            missing = [r for r in self.active if r not in by_id]
            if missing:
                raise StaleDataError(f"no camera fix for {missing}")
            return [Pose2D(by_id[r]["x_m"], by_id[r]["y_m"], by_id[r]["theta_rad"])
                    for r in self.active]
        mat = aggregate_matrix(self.bus, [TopicPath.robot(r, "odom") for r in self.active], 3,
                               fields=("x_m", "y_m", "theta_rad"))
        if not mat.present.all() or np.any(now - mat.stamps > self.staleness_s):
            raise StaleDataError("odometry missing or stale")
        return [Pose2D(*mat.data[:, k]) for k in range(len(self.active))]

    def _intensities(self) -> np.ndarray:
        mat = aggregate_matrix(self.bus, [TopicPath.robot(r, "sensors/sound") for r in self.active], 1)
        return np.nan_to_num(mat.data[0], nan=0.0)

    def _law(self, pts: np.ndarray) -> np.ndarray:
        if self.algorithm == "rendezvous":
            return rendezvous_step(pts, self.cfg)
        if self.algorithm == "sound_rendezvous":
            return sound_rendezvous_step(pts, self._intensities(), self.cfg)
        return formation_step(pts, self.formation.ordered_offsets(self.active), self.cfg)

    def _targets(self, pts: np.ndarray) -> np.ndarray | None:
        """Robot each robot is heading for; only sound rendezvous has them."""
        if self.algorithm != "sound_rendezvous":
            return None
        return loudest_neighbor(pts, self._intensities(), self.cfg)

    def _displacements(self, pts: np.ndarray) -> np.ndarray:
        disp = self.cfg.gain_epsilon * self._law(pts)
        if self.cfg.avoidance:
            disp = collision_avoidance(pts, disp, self.cfg, self._targets(pts))
        return disp

    def _packed(self, pts: np.ndarray) -> bool:
        """Robots as close as avoidance lets them get.

        Rendezvous: all within ``2 r_s + tol`` of each other. Sound
        rendezvous: each within ``r_s + tol`` of the robot it follows.
        """
        tol = self.cfg.convergence_tol_m
        targets = self._targets(pts)
        if targets is not None:
            gap = pts - pts[targets]
            return bool(np.max(np.hypot(gap[:, 0], gap[:, 1])) <= self.cfg.safety_radius_m + tol)
        diff = pts[:, None, :] - pts[None, :, :]
        spread = np.max(np.hypot(diff[..., 0], diff[..., 1]))
        return bool(spread <= 2 * self.cfg.safety_radius_m + tol)

    def _converged(self) -> bool:
        """Judged over the last few ticks to damp camera noise.

        Converged when every displacement computed from the averaged
        positions is below the tolerance or, with avoidance on (and not in
        formation mode), when every position snapshot in the window is packed.
        """
        if len(self._window) < self._window.maxlen:
            return False
        disp = self._displacements(np.mean(self._window, axis=0))
        if np.max(np.hypot(disp[:, 0], disp[:, 1])) < self.cfg.convergence_tol_m:
            return True
        if not self.cfg.avoidance or self.algorithm == "formation":
            return False
        return all(self._packed(pts) for pts in self._window)

    def stop_all(self) -> None:
        for rid in self.active:
            self._cmd_pubs[rid].publish({"v_mps": 0.0, "w_radps": 0.0})

    def tick(self, now: float) -> bool:
        """Run one control tick; returns True once the swarm has converged."""
        if self.summary.converged:
            return True
        self.summary.ticks += 1
        try:
            poses = self._poses(now)
        except StaleDataError:
            self.summary.stale_ticks += 1
            return False
        pts = np.array([[p.x_m, p.y_m] for p in poses])
        self._window.append(pts)
        disp = self._displacements(pts)
        self.last_displacements = disp
        if self._converged():
            self.summary.converged = True
            self.summary.convergence_tick = self.summary.ticks
            self.summary.convergence_time_s = now
            self.stop_all()
            return True
        for k, rid in enumerate(self.active):
            pose = poses[k]
            twist = position_controller(pose, pts[k] + disp[k], self.goal, self.robot_params)
            if self.cfg.avoidance:
                others = np.delete(pts, k, axis=0)
                twist = guard_twist(pose, twist, others, self.cfg.safety_radius_m)
            self._cmd_pubs[rid].publish({"v_mps": twist.linear_mps, "w_radps": twist.angular_radps})
        return False
