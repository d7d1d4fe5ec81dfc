"""Acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured value;
run with ``pytest -s tests/test_acceptance.py`` to see them.
"""

import math
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest

from swarmbed.analysis import odom_camera_errors
from swarmbed.bus import Bus, TopicPath
from swarmbed.controllers import (SwarmConfig, consensus_iterate, formation_error, rendezvous_step,
                                  sound_rendezvous_step)
from swarmbed.kinematics import Pose2D, RobotParams, Twist, forward_kinematics, inverse_kinematics, saturate_twist
from swarmbed.odometry import integrate_pose_exact
from swarmbed.motor import MotorState
from swarmbed.runner import run
from swarmbed.scenario import load_scenario_file, resolve
from swarmbed.sim import Simulation
from swarmbed.tracking import DEFAULT_CAMERA_SIGMA_M, IDENTITY_FRAME, observe_poses, stations_exclusive
from swarmbed.world import PowerParams, RobotTruth, WorldState, battery_step

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
SEEDS = range(20)


def report(number: int, title: str, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}")
    assert ok, detail


def simulate(raw: dict, seed: int | None = None, overrides=None, on_step=None):
    sim = Simulation(resolve(raw, seed, overrides))
    steps = []

    def keep(records):
        steps.append(records)
        if on_step:
            on_step(sim, records)

    result = sim.run(keep)
    return sim, result, steps


def positions(records) -> np.ndarray:
    return np.array([r.truth[:2] for r in records])


def spread(pts: np.ndarray) -> np.ndarray:
    diff = pts[:, None, :] - pts[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])[np.triu_indices(len(pts), 1)]


def test_01_kinematics_round_trip():
    params = RobotParams()
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for v, w in zip(rng.uniform(-0.5, 0.5, 10_000), rng.uniform(-20, 20, 10_000)):
        cmd = saturate_twist(Twist(v, w), params)
        back = forward_kinematics(inverse_kinematics(cmd, params), params)
        for a, b in ((cmd.linear_mps, back.linear_mps), (cmd.angular_radps, back.angular_radps)):
            worst = max(worst, abs(a - b) / max(abs(a), 1e-300) if a else abs(b))
    elapsed = time.perf_counter() - t0
    report(1, "kinematics round trip", worst < 1e-12 and elapsed < 1.0,
           f"max relative error {worst:.2e} over 10^4 twists in {elapsed:.2f} s")


def _arc_oracle(pose, v, w, T):
    digits = 40 + (int(-math.log10(abs(w))) if 0 < abs(w) < 1 else 0)
    with mpmath.workdps(digits):
        x, y, th = (mpmath.mpf(c) for c in pose)
        v, w, T = mpmath.mpf(v), mpmath.mpf(w), mpmath.mpf(T)
        if w == 0:
            return float(x + v * T * mpmath.cos(th)), float(y + v * T * mpmath.sin(th)), float(th)
        R = v / w
        return (float(x + R * (mpmath.sin(th + w * T) - mpmath.sin(th))),
                float(y - R * (mpmath.cos(th + w * T) - mpmath.cos(th))), float(th + w * T))


def test_02_exact_arc_oracle():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst_pos = worst_ang = 0.0
    for _ in range(100):
        v, w, T = rng.uniform(-0.28, 0.28), rng.uniform(-6, 6), rng.uniform(0.1, 5.0)
        start = Pose2D(*rng.uniform(0, 2, 2), rng.uniform(-math.pi, math.pi))
        x, y, th = _arc_oracle(start.as_tuple(), v, w, T)
        for dt in (0.001, 0.02, 0.1):
            n = int(T // dt)
            pose = start
            for _ in range(n):
                pose = integrate_pose_exact(pose, v, w, dt)
            rest = T - n * dt
            if rest > 0:
                pose = integrate_pose_exact(pose, v, w, rest)
            worst_pos = max(worst_pos, math.hypot(pose.x_m - x, pose.y_m - y))
            worst_ang = max(worst_ang, abs(math.remainder(pose.theta_rad - th, 2 * math.pi)))
    elapsed = time.perf_counter() - t0
    report(2, "exact arc oracle", worst_pos < 1e-9 and worst_ang < 1e-9 and elapsed < 5.0,
           f"max error {worst_pos:.2e} m / {worst_ang:.2e} rad at dt 0.001/0.02/0.1 in {elapsed:.2f} s")


def test_03_noise_free_consistency():
    raw = load_scenario_file(SCENARIOS / "noise_free.yaml")
    _, result, steps = simulate(raw)
    worst = max(math.hypot(r.odom[0] - r.truth[0], r.odom[1] - r.truth[1])
                for recs in steps for r in recs)
    report(3, "noise-free consistency", worst < 1e-6 and len(steps[0]) == 5,
           f"max odometry-vs-truth error {worst:.2e} m over {result.steps} steps")


def test_04_camera_noise_calibration():
    world = WorldState([RobotTruth("r1", Pose2D(1.25, 0.875, 0.0))])
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    radial = []
    for _ in range(10_000):
        rep = observe_poses(world, IDENTITY_FRAME, DEFAULT_CAMERA_SIGMA_M, rng)[0].pose
        radial.append(math.hypot(rep.x_m - 1.25, rep.y_m - 0.875))
    mean = float(np.mean(radial))
    elapsed = time.perf_counter() - t0
    report(4, "camera noise calibration", abs(mean - 0.008) <= 0.05 * 0.008 and elapsed < 5.0,
           f"mean radial error {mean * 1000:.3f} mm (target 8 mm +-5%) in {elapsed:.2f} s")


def test_05_odometry_error_bracket():
    raw = load_scenario_file(SCENARIOS / "odometry_calibration.yaml")
    t0 = time.perf_counter()
    means, maxes = [], []
    for seed in range(100):
        _, _, steps = simulate(raw, seed)
        recs = [s[0] for s in steps]
        idx = np.array([k for k, r in enumerate(recs) if r.camera is not None])
        err = odom_camera_errors({"cam_idx": idx, "camera": np.array([recs[k].camera for k in idx]),
                                  "odom": np.array([r.odom for r in recs])})
        means.append(err.mean())
        maxes.append(err.max())
    elapsed = time.perf_counter() - t0
    mean = float(np.mean(means))
    report(5, "odometry error bracket", 0.03 <= mean <= 0.13 and elapsed < 60.0,
           f"mean absolute error {mean * 100:.2f} cm, mean max {np.mean(maxes) * 100:.2f} cm "
           f"over 100 seeds in {elapsed:.1f} s")


def test_06_speed_clamp():
    raw = load_scenario_file(SCENARIOS / "speed_clamp.yaml")
    twists = []
    _, _, steps = simulate(raw, on_step=lambda sim, _: twists.append(sim.world.robots[0].twist.linear_mps))
    truth_max = max(abs(v) for v in twists)
    # speed recovered from 9-digit logged positions carries ~1e-6 m/s of rounding
    track = np.array([s[0].truth[:2] for s in steps])
    logged = np.hypot(*np.diff(track, axis=0).T) / 0.02
    ok = truth_max <= 0.28 + 1e-12 and logged.max() <= 0.28 + 1e-6 and truth_max > 0.279
    report(6, "speed clamp", ok,
           f"commanded 0.50 m/s, max true speed {truth_max:.12f} m/s, max logged {logged.max():.9f} m/s")


def test_07_velocity_tracking():
    rng = np.random.default_rng(7)
    segs = [{"duration_s": 3.0, "v_mps": float(rng.uniform(0.05, 0.25) * (1 if k % 2 == 0 else -1)),
             "w_radps": float(rng.uniform(-1.5, 1.5))} for k in range(10)]
    raw = {"algorithm": "script", "duration_s": 30.0, "script": segs,
           "robots": {"initial_poses": [[1.25, 0.875, 0.0]]}}
    sim, _, steps = simulate(raw)
    recs = [s[0] for s in steps]
    P = np.array([r.truth for r in recs])
    heading = P[:-1, 2] + np.diff(np.unwrap(P[:, 2])) / 2
    d = np.diff(P[:, :2], axis=0)
    body = (d[:, 0] * np.cos(heading) + d[:, 1] * np.sin(heading)) / 0.02
    cmd = np.array([r.cmd[0] for r in recs[1:]])
    err = float(np.mean(np.abs(body - cmd)))
    clamped = sim.world.robots[0].clamped
    report(7, "velocity tracking", err < 0.04 and not clamped,
           f"mean absolute body-speed error {err * 100:.2f} cm/s over 10 setpoints x 3 s")


def test_08_rendezvous_properties():
    t0 = time.perf_counter()
    cfg = SwarmConfig()
    drift = 0.0
    monotone = True
    for seed in SEEDS:
        start = np.array(resolve({}, seed)["robots"]["initial_poses"])[:, :2]
        assert cfg.gain_epsilon * (len(start) - 1) < 1
        xs = consensus_iterate(start, lambda x: rendezvous_step(x, cfg), cfg.gain_epsilon, 100)
        c = xs.mean(axis=1)
        drift = max(drift, float(np.abs(np.diff(c, axis=0)).max()))
        widths = [spread(x).max() for x in xs]
        monotone &= all(b <= a + 1e-15 for a, b in zip(widths, widths[1:]))
    bound = 2 * cfg.safety_radius_m + cfg.convergence_tol_m
    worst_final, closest, all_converged, worst_ticks = 0.0, math.inf, True, 0
    for seed in SEEDS:
        sim, result, steps = simulate({"algorithm": "rendezvous"}, seed)
        worst_final = max(worst_final, spread(positions(steps[-1])).max())
        closest = min(closest, min(spread(positions(s)).min() for s in steps))
        all_converged &= result.converged
        worst_ticks = max(worst_ticks, sim.executor.summary.ticks)
    elapsed = time.perf_counter() - t0
    ok = (drift < 1e-9 and monotone and all_converged and worst_ticks <= cfg.max_steps
          and worst_final <= bound and closest >= 2 * cfg.footprint_radius_m and elapsed < 60.0)
    report(8, "rendezvous properties", ok,
           f"(a) centroid drift {drift:.1e} m/step, spread non-increasing={monotone}; "
           f"(b) 20/20 converged={all_converged}, final spread <= {worst_final:.4f} m "
           f"(bound {bound:.3f}), min distance {closest:.4f} m (floor 0.07) in {elapsed:.1f} s")


def test_09_formation():
    raw = load_scenario_file(SCENARIOS / "formation.yaml")
    rng = np.random.default_rng(9)
    worst, invariant, slot_err, all_converged = 0.0, True, 0.0, True
    for seed in SEEDS:
        sim, result, steps = simulate(raw, seed)
        pts = positions(steps[-1])
        off = sim.offsets
        target = spread(off)
        edges = np.isclose(target, target.min())
        worst = max(worst, float(np.abs(spread(pts)[edges] - 0.25).max()))
        err = formation_error(pts, off)
        shifted = formation_error(pts + rng.uniform(-1, 1, 2), off)
        invariant &= abs(err - shifted) < 1e-12
        slot_err = max(slot_err, err)
        all_converged &= result.converged
    report(9, "formation", worst <= 0.01 and invariant and all_converged,
           f"neighbour distances 0.25 +- {worst:.4f} m over 20 seeds, translation-invariant "
           f"error={invariant}, max slot error {slot_err:.4f} m")


def test_10_sound_rendezvous():
    raw = load_scenario_file(SCENARIOS / "sound_rendezvous.yaml")
    cfg = SwarmConfig()
    rng = np.random.default_rng(10)
    worst, all_converged, invariant = 0.0, True, True
    for seed in SEEDS:
        _, result, steps = simulate(raw, seed)
        final = steps[-1]
        pts = positions(final)
        s = np.array([r.sound for r in final])
        k = int(np.argmax(s))
        worst = max(worst, float(np.hypot(*(pts - pts[k]).T).max()))
        all_converged &= result.converged
        base = sound_rendezvous_step(pts, s, cfg)
        for scale in rng.uniform(1e-3, 1e3, 5):
            invariant &= np.array_equal(sound_rendezvous_step(pts, s * scale, cfg), base)
    report(10, "sound rendezvous", worst <= 0.15 and all_converged and invariant,
           f"max distance to loudest robot {worst:.4f} m over 20 seeds, "
           f"argmax invariant under rescaling={invariant}")


def test_11_battery_bookkeeping():
    robot = RobotTruth("r1", Pose2D())
    robot.motor_left, robot.motor_right = MotorState(duty=1.0), MotorState(duty=1.0)
    for _ in range(180_000):
        battery_step(robot, True, False, 0.02, PowerParams())
    drained = 7.4 - robot.battery_wh

    raw = load_scenario_file(SCENARIOS / "charging_storm.yaml")
    exclusive = True
    held = []

    def check(sim, _):
        nonlocal exclusive
        exclusive &= stations_exclusive(sim.world.charging_stations)
        held.append(sum(st.occupied_by is not None for st in sim.world.charging_stations))

    sim, _, _ = simulate(raw, on_step=check)
    n_stations = len(sim.world.charging_stations)
    queued = list(sim.tracker.waitlist)
    charging = sum(r.charging for r in sim.world.robots)
    ok = (abs(drained - 1.5) <= 1e-9 and exclusive and held[-1] == n_stations
          and max(held) == n_stations and len(queued) == len(sim.world.robots) - n_stations)
    report(11, "battery bookkeeping", ok,
           f"1 h at 1.5 W drained {drained:.12f} Wh; storm: {held[-1]}/{n_stations} stations "
           f"assigned ({charging} charging), {len(queued)} queued, exclusive={exclusive}")


def test_12_bus_properties(tmp_path):
    bus = Bus()
    names = [f"r{k}" for k in range(8)]
    pubs = {n: bus.advertise(TopicPath(n, "odom")) for n in names}
    subs = {n: bus.subscribe(TopicPath(n, "odom"), depth=10) for n in names}
    rng = np.random.default_rng(12)
    received = {n: [] for n in names}
    for _ in range(10_000):
        n = names[rng.integers(len(names))]
        pubs[n].publish({"ns": n})
        if rng.random() < 0.05:
            m = names[rng.integers(len(names))]
            received[m].extend(subs[m].poll())
    for n in names:
        received[n].extend(subs[n].poll())
    monotone = all(all(a.seq < b.seq for a, b in zip(r, r[1:])) for r in received.values())
    leak = any(e.payload["ns"] != n for n, r in received.items() for e in r)
    accounting = all(len(received[n]) + subs[n].dropped == bus.published_count(TopicPath(n, "odom"))
                     for n in names)
    first = run(SCENARIOS / "rendezvous.yaml", tmp_path / "a")
    second = run(SCENARIOS / "rendezvous.yaml", tmp_path / "b")
    identical = first.trajectory.read_bytes() == second.trajectory.read_bytes()
    dropped = sum(s.dropped for s in subs.values())
    report(12, "bus properties", monotone and not leak and accounting and identical,
           f"seq monotone={monotone}, leakage={leak}, received+dropped=published={accounting} "
           f"({dropped} drops), identical run logs={identical}")
