import itertools
import math

import numpy as np
import pytest

from swarmbed.bus import CHARGING_RELEASE, CHARGING_REQUEST, GLOBAL_POSITION, Bus, TopicPath
from swarmbed.errors import DegenerateFrameError, InvalidRequestError, RemoteError
from swarmbed.kinematics import Pose2D
from swarmbed.tracking import (DEFAULT_CAMERA_SIGMA_M, IDENTITY_FRAME, TrackingServer,
                               assign_charging_station, calibrate_frame, observe_poses,
                               release_charging_station, stations_exclusive)
from swarmbed.world import ChargingStation, RobotTruth, WorldState


def test_default_sigma_gives_8mm_rayleigh_mean():
    assert DEFAULT_CAMERA_SIGMA_M * math.sqrt(math.pi / 2) == pytest.approx(0.008, rel=1e-12)
    assert DEFAULT_CAMERA_SIGMA_M == pytest.approx(0.006383, abs=1e-6)


def test_identity_frame():
    cal = calibrate_frame((0, 0), (1, 0), (0, 1))
    assert np.allclose(cal.matrix, np.eye(2)) and cal.is_identity


def test_rotated_markers():
    cal = calibrate_frame((0, 0), (0, 1), (-1, 0))
    assert np.allclose(cal.matrix, [[0, 1], [-1, 0]])  # rotation by -90 degrees
    assert np.allclose(cal.to_global((0, 1)), (1, 0))
    assert cal.heading_to_global(math.pi / 2) == pytest.approx(0.0, abs=1e-12)


def test_scaled_markers_halve_coordinates():
    cal = calibrate_frame((0, 0), (2, 0), (0, 2))
    assert np.allclose(cal.to_global((2, 0)), (1, 0))
    assert np.allclose(cal.to_global((0, 2)), (0, 1))
    assert np.allclose(cal.to_global((1, 1)), (0.5, 0.5))
    sized = calibrate_frame((0, 0), (2, 0), (0, 2), axis_length_m=2.0)
    assert np.allclose(sized.matrix, np.eye(2))


def test_degenerate_markers():
    with pytest.raises(DegenerateFrameError):
        calibrate_frame((0, 0), (1, 1), (2, 2))
    with pytest.raises(DegenerateFrameError):
        calibrate_frame((1, 1), (1, 1), (1, 1))


def test_frame_round_trip():
    cal = calibrate_frame((0.3, -0.2), (1.1, 0.4), (-0.4, 0.7), axis_length_m=1.2)
    assert np.allclose(cal.to_global(cal.origin_marker), 0.0, atol=1e-15)
    pts = np.random.default_rng(0).uniform(-5, 5, (100, 2))
    assert np.max(np.abs(cal.to_raw(cal.to_global(pts)) - pts)) < 1e-12
    assert np.max(np.abs(cal.to_global(cal.to_raw(pts)) - pts)) < 1e-12


def test_noise_free_reports_equal_truth():
    w = WorldState([RobotTruth("r1", Pose2D(0.4, 0.7, 1.0)), RobotTruth("r2", Pose2D(2, 1, -2))])
    reps = observe_poses(w, IDENTITY_FRAME, 0.0, np.random.default_rng(0), heading_sigma_rad=0.0)
    assert [r.pose for r in reps] == [r.pose for r in w.robots]


def test_noise_unbiased_and_rayleigh_mean():
    w = WorldState([RobotTruth("r1", Pose2D(1.0, 0.5, 0.0))])
    rng = np.random.default_rng(3)
    n = 10_000
    pts = np.array([[observe_poses(w, IDENTITY_FRAME, DEFAULT_CAMERA_SIGMA_M, rng)[0].pose.x_m,
                     observe_poses(w, IDENTITY_FRAME, DEFAULT_CAMERA_SIGMA_M, rng)[0].pose.y_m]
                    for _ in range(n)])
    bound = 3 * DEFAULT_CAMERA_SIGMA_M / math.sqrt(n)
    assert abs(pts[:, 0].mean() - 1.0) < bound and abs(pts[:, 1].mean() - 0.5) < bound
    radial = np.hypot(pts[:, 0] - 1.0, pts[:, 1] - 0.5)
    assert radial.mean() == pytest.approx(0.008, rel=0.05)


def test_drop_probability():
    w = WorldState([RobotTruth(f"r{k}", Pose2D(0.2 * k + 0.2, 0.5)) for k in range(5)])
    rng = np.random.default_rng(0)
    assert observe_poses(w, IDENTITY_FRAME, 0.0, rng, drop_probability=1.0) == []


def stations(*specs):
    return [ChargingStation(sid, pos) for sid, pos in specs]


def test_assign_examples():
    one = stations(("a", (0.0, 0.0)))
    assert assign_charging_station(one, "r1", Pose2D()).occupied_by == "r1"
    assert assign_charging_station(one, "r2", Pose2D()) is None
    assert assign_charging_station(one, "r1", Pose2D()) is one[0]  # holder gets the same one


def test_nearest_and_tie_break_order_independent():
    specs = [("b", (0.8, 0.0)), ("a", (0.3, 0.0)), ("c", (0.0, 0.3))]
    for perm in itertools.permutations(specs):
        got = assign_charging_station(stations(*perm), "r1", Pose2D())
        assert got.id == "a"  # a and c tie at 0.3 m, lowest id wins


def test_unknown_robot_rejected():
    with pytest.raises(InvalidRequestError):
        assign_charging_station(stations(("a", (0, 0))), "zz", Pose2D(), known_robots={"r1"})


def test_exclusivity_under_random_events():
    rng = np.random.default_rng(4)
    sts = stations(*[(f"s{k}", tuple(rng.uniform(0, 2, 2))) for k in range(3)])
    robots = [f"r{k}" for k in range(7)]
    for _ in range(2000):
        rid = robots[rng.integers(len(robots))]
        if rng.random() < 0.6:
            assign_charging_station(sts, rid, Pose2D(*rng.uniform(0, 2, 2)))
        else:
            release_charging_station(sts, rid)
        assert stations_exclusive(sts)


def test_server_publishes_at_camera_rate():
    bus = Bus()
    w = WorldState([RobotTruth("r1", Pose2D(1, 1))])
    srv = TrackingServer(bus, w, np.random.default_rng(0), rate_hz=30.0)
    sub = bus.subscribe(TopicPath.global_(GLOBAL_POSITION), depth=1000)
    for k in range(501):  # 10 s at 50 Hz
        srv.tick(k * 0.02)
    envs = sub.poll()
    assert len(envs) == srv.frames
    assert 299 <= len(envs) <= 301  # 30 Hz sampled on a 50 Hz clock
    assert [e.seq for e in envs] == list(range(1, len(envs) + 1))
    assert set(envs[0].payload[0]) == {"robot_id", "x_m", "y_m", "theta_rad", "stamp_s"}


def test_charging_service_queues_and_hands_over():
    bus = Bus()
    robots = [RobotTruth(f"r{k}", Pose2D(0.3 + 0.3 * k, 0.5)) for k in range(4)]
    w = WorldState(robots, charging_stations=stations(("a", (0.2, 0.2)), ("b", (2.0, 0.2))))
    srv = TrackingServer(bus, w, np.random.default_rng(0))
    svc = TopicPath.global_(CHARGING_REQUEST)
    replies = {r.id: bus.request(svc, {"robot_id": r.id}, 1.0) for r in robots}
    assert sum(v is not None for v in replies.values()) == 2
    assert list(srv.waitlist) == ["r2", "r3"]
    # a station frees; r3 asks first but r2 is ahead in the queue
    bus.request(TopicPath.global_(CHARGING_RELEASE), {"robot_id": "r0"}, 1.0)
    assert bus.request(svc, {"robot_id": "r3"}, 1.0) is None
    assert bus.request(svc, {"robot_id": "r2"}, 1.0)["station_id"] == "a"
    assert stations_exclusive(w.charging_stations)
    with pytest.raises(RemoteError):
        bus.request(svc, {"robot_id": "ghost"}, 1.0)
