"""Deterministic step loop tying world, robots, camera and swarm executor together."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bus import Bus, RateGate, TopicPath
from .controllers import (FormationSpec, GoToGoalParams, SwarmConfig, SwarmExecutor,
                          assign_offsets, polygon_offsets)
from .errors import RuntimeViolation
from .kinematics import Pose2D, RobotParams
from .motor import MotorPlantParams, PidGains
from .robot import ChargePolicy, RobotNode, TopicRates
from .tracking import TrackingServer, calibrate_frame
from .world import (ChargingStation, EncoderNoise, EncoderNoiseParams, PowerParams, RobotTruth,
                    SoundModelParams, SoundSource, WorldState, sample_microphone, world_step)

# Fixed child-stream indices of the scenario seed.
_STREAM_CAMERA = 2
_STREAM_ENCODERS = 3


@dataclass
class StepRecord:
    step: int
    t_s: float
    robot_id: str
    truth: tuple[float, float, float]
    odom: tuple[float, float, float]
    camera: tuple[float, float, float] | None
    cmd: tuple[float, float]
    wheels: tuple[float, float]
    ticks: tuple
    battery_wh: float
    sound: float


@dataclass
class SimResult:
    steps: int
    converged: bool
    convergence_time_s: float | None
    stale_ticks: int
    header: dict = field(default_factory=dict)


class ScriptDriver:
    """Plays a list of (duration, v, w) segments to every robot's cmd_vel."""

    def __init__(self, bus: Bus, robot_ids, segments):
        self.segments = segments
        self.pubs = [bus.advertise(TopicPath.robot(r, "cmd_vel")) for r in robot_ids]
        self.ends = np.cumsum([s["duration_s"] for s in segments]) if segments else np.array([])

    @property
    def total_s(self) -> float:
        return float(self.ends[-1]) if len(self.ends) else 0.0

    def tick(self, now: float) -> None:
        idx = int(np.searchsorted(self.ends, now + 1e-9, side="right"))
        if idx < len(self.segments):
            seg = self.segments[idx]
            msg = {"v_mps": float(seg["v_mps"]), "w_radps": float(seg["w_radps"])}
        else:
            msg = {"v_mps": 0.0, "w_radps": 0.0}
        for pub in self.pubs:
            pub.publish(msg, now)


def _params(cfg: dict) -> RobotParams:
    return RobotParams(**cfg["robot"])


class Simulation:
    """Everything needed to run one resolved scenario.

    ``Simulation(cfg).run(on_record)`` calls ``on_record`` with the records
    of every logged step (step 0 is the initial state).
    """

    def __init__(self, cfg: dict):
        self.cfg = cfg
        seed = cfg["seed"]
        self.dt = cfg["dt_s"]
        self.params = _params(cfg)
        m = cfg["motor"]
        plant = MotorPlantParams(m["time_constant_s"], m["max_speed_radps"], m["discretization"])
        self.gains = PidGains(m["kp"], m["ki"], m["kd"], m["integral_limit"], m["output_limit"])
        p = cfg["power"]
        power = PowerParams(p["idle_w"], p["moving_w"], p["capacity_wh"], p["efficiency"])
        initial_wh = p["capacity_wh"] if p["initial_wh"] is None else min(p["initial_wh"], p["capacity_wh"])
        noise = cfg["noise"]
        ids = cfg["robots"]["ids"]
        robots = [RobotTruth(rid, Pose2D(*pose).normalized(), battery_wh=initial_wh)
                  for rid, pose in zip(ids, cfg["robots"]["initial_poses"])]
        self.sound_model = SoundModelParams(cfg["sound"]["d_min_m"], cfg["sound"]["lobe_exponent"])
        sources = [SoundSource((s["x_m"], s["y_m"]), s.get("power_w", 1.0), s.get("active", True))
                   for s in cfg["sound"]["sources"]]
        stations = [ChargingStation(str(s["id"]), (s["x_m"], s["y_m"]),
                                    charge_rate_w=s.get("charge_rate_w", 2.0))
                    for s in cfg["charging"]["stations"]]
        self.world = WorldState(robots, tuple(cfg["table_size_m"]), sources, stations, seed,
                                self.params, plant, power, noise["quantize_ticks"])
        self.bus = Bus()

        cam_rng = np.random.default_rng(np.random.SeedSequence([seed, _STREAM_CAMERA]))
        enc_seq = np.random.SeedSequence([seed, _STREAM_ENCODERS])
        cam = cfg["camera"]
        self.tracker = TrackingServer(
            self.bus, self.world, cam_rng,
            calibrate_frame(cam["origin"], cam["x_axis"], cam["y_axis"], cam["axis_length_m"]),
            noise["camera_sigma_m"], noise["camera_heading_sigma_rad"], cfg["rates"]["camera_hz"],
            noise["camera_drop_probability"])

        enc_params = EncoderNoiseParams(noise["encoder_scale_sigma"], noise["encoder_jitter_ticks"],
                                        noise["quantize_ticks"])
        rates = TopicRates(cfg["rates"]["odom_hz"], cfg["rates"]["battery_hz"], cfg["rates"]["sound_hz"])
        sw = cfg["swarm"]
        goal = GoToGoalParams(sw["k_v"], sw["k_omega"])
        ch = cfg["charging"]
        charge = ChargePolicy(ch["enabled"], ch["low_wh"], p["capacity_wh"], ch["dock_radius_m"])
        sw_cfg = SwarmConfig(sw["gain_epsilon"], sw["neighbor_graph"], sw["comm_radius_m"],
                             sw["safety_radius_m"], sw["k_rep"], sw["convergence_tol_m"],
                             sw["max_steps"], self.params.footprint_radius_m, sw["avoidance"],
                             sw["convergence_window"])
        self.nodes: list[RobotNode] = []
        for truth, child in zip(robots, enc_seq.spawn(len(robots))):
            rng = np.random.default_rng(child)
            enc_noise = EncoderNoise.draw(enc_params, rng)
            self.nodes.append(RobotNode(self.bus, truth, self.params, self.gains, enc_noise, rng,
                                        rates, goal, charge, sw_cfg if sw["avoidance"] else None))

        self.executor: SwarmExecutor | None = None
        self.script: ScriptDriver | None = None
        self.offsets: np.ndarray | None = None
        algo = cfg["algorithm"]
        if algo in ("rendezvous", "sound_rendezvous", "formation"):
            self.swarm_cfg = sw_cfg
            spec = None
            if algo == "formation":
                spec = self._formation_spec()
                self.offsets = spec.ordered_offsets(sorted(ids))
            self.executor = SwarmExecutor(
                self.bus, ids, self.swarm_cfg, algo, self.params,
                GoToGoalParams(sw["k_v"], sw["k_omega"], sw["waypoint_tol_m"]), spec,
                sw["position_source"], sw["staleness_s"])
            self._control_gate = RateGate(sw["control_rate_hz"])
        elif algo == "script":
            self.script = ScriptDriver(self.bus, ids, cfg["script"])

    def _formation_spec(self) -> FormationSpec:
        fc = self.cfg["formation"]
        ids = self.cfg["robots"]["ids"]
        offsets = fc["offsets"]
        if offsets is None:
            offsets = polygon_offsets(len(ids), fc["side_m"])
        offsets = np.asarray(offsets, dtype=float)
        if fc["assignment"] == "auto":
            pts = np.array(self.cfg["robots"]["initial_poses"])[:, :2]
            slots = assign_offsets(pts, offsets)
            return FormationSpec(offsets, {rid: int(s) for rid, s in zip(ids, slots)})
        return FormationSpec(offsets, {rid: k for k, rid in enumerate(ids)})

    @property
    def n_steps(self) -> int:
        steps = int(round(self.cfg["duration_s"] / self.dt))
        if self.cfg["max_steps"] is not None:
            steps = min(steps, self.cfg["max_steps"])
        return steps

    def header(self) -> dict:
        sw = self.cfg["swarm"]
        return {
            "format": "swarmbed-trajectory",
            "version": 1,
            "seed": self.cfg["seed"],
            "dt_s": self.dt,
            "algorithm": self.cfg["algorithm"],
            "robots": list(self.cfg["robots"]["ids"]),
            "footprint_radius_m": self.params.footprint_radius_m,
            "safety_radius_m": sw["safety_radius_m"],
            "convergence_tol_m": sw["convergence_tol_m"],
            "formation_offsets": None if self.offsets is None else {
                rid: [float(v) for v in off]
                for rid, off in zip(sorted(self.cfg["robots"]["ids"]), self.offsets)},
        }

    def _records(self, step: int, t: float, camera: dict | None) -> list[StepRecord]:
        out = []
        for node in self.nodes:
            truth = node.truth
            cam = None
            if camera is not None and node.id in camera:
                rep = camera[node.id].pose
                cam = (rep.x_m, rep.y_m, rep.theta_rad)
            enc = node.last_reading
            out.append(StepRecord(
                step, t, node.id, truth.pose.as_tuple(), node.odom.pose.as_tuple(), cam,
                (node.applied.linear_mps, node.applied.angular_radps),
                (truth.motor_left.wheel_speed_radps, truth.motor_right.wheel_speed_radps),
                (enc.left_ticks, enc.right_ticks), truth.battery_wh, node.sound))
        return out

    def _check(self, step: int) -> None:
        for robot in self.world.robots:
            if not all(math.isfinite(v) for v in robot.pose.as_tuple()):
                raise RuntimeViolation(step, f"robot {robot.id} pose is not finite")
        if self.cfg["fail_on_overlap"]:
            limit = 2 * self.params.footprint_radius_m
            rs = self.world.robots
            for i in range(len(rs)):
                for j in range(i + 1, len(rs)):
                    d = math.hypot(rs[i].pose.x_m - rs[j].pose.x_m, rs[i].pose.y_m - rs[j].pose.y_m)
                    if d < limit:
                        raise RuntimeViolation(step, f"robots {rs[i].id} and {rs[j].id} overlap "
                                                     f"(distance {d:.4f} m)")

    def _sense(self, t: float) -> None:
        for node in self.nodes:
            node.sense(t, sample_microphone(node.truth, self.world.sound_sources, self.sound_model))

    def run(self, on_record: Callable[[list[StepRecord]], None] | None = None) -> SimResult:
        n_steps = self.n_steps
        dt = self.dt
        settle_steps = int(round(self.cfg["settle_s"] / dt))
        stop_at: int | None = None
        self.bus.set_time(0.0)
        self._sense(0.0)
        frame = self.tracker.tick(0.0)
        self.bus.spin(0.0)
        if n_steps == 0:
            return SimResult(0, False, None, 0, self.header())
        if on_record:
            on_record(self._records(0, 0.0, {r.robot_id: r for r in frame} if frame else None))
        executor_ticks = 0
        step = 0
        for step in range(1, n_steps + 1):
            t = (step - 1) * dt
            self.bus.set_time(t)
            if self.executor is not None and stop_at is None and self._control_gate.take(t):
                executor_ticks += 1
                done = self.executor.tick(t)
                if done or executor_ticks >= self.swarm_cfg.max_steps:
                    if not done:
                        self.executor.stop_all()
                    if self.cfg["stop_on_convergence"] or not done:
                        stop_at = step + settle_steps
            elif self.script is not None:
                self.script.tick(t)
            for node in self.nodes:
                node.control(t, dt)
            world_step(self.world, dt)
            t_next = step * dt
            self.world.sim_time_s = t_next
            self.bus.set_time(t_next)
            self._sense(t_next)
            frame = self.tracker.tick(t_next)
            self.bus.spin(t_next)
            self._check(step)
            if on_record:
                on_record(self._records(step, t_next, {r.robot_id: r for r in frame} if frame else None))
            if stop_at is not None and step >= stop_at:
                break
        summary = self.executor.summary if self.executor else None
        return SimResult(step, bool(summary and summary.converged),
                         summary.convergence_time_s if summary else None,
                         summary.stale_ticks if summary else 0, self.header())
