"""Wheel speeds, body twists and dead reckoning on a single robot.

Run: python demos/01_kinematics_and_odometry.py
"""
import math

import numpy as np

from swarmbed import (EncoderState, OdometryEstimate, Pose2D, RobotParams, Twist, WheelSpeeds,
                      forward_kinematics, integrate_pose_exact, inverse_kinematics, saturate_twist,
                      update_odometry)
from swarmbed.odometry import tick_split

params = RobotParams()
print(params)

# %% Twist <-> wheel speeds
for left, right in [(10, 10), (-10, 10), (5, 10)]:
    tw = forward_kinematics(WheelSpeeds(left, right), params)
    print(f"wheels ({left:+3d}, {right:+3d}) rad/s -> v={tw.linear_mps:.4f} m/s, w={tw.angular_radps:.4f} rad/s")

# Commands beyond the limits are scaled down as a whole, so the turning radius survives.
for cmd in [Twist(0.5, 0.0), Twist(0.28, 5.0)]:
    sat = saturate_twist(cmd, params)
    ws = inverse_kinematics(sat, params)
    print(f"{cmd} -> {sat}  (wheels {ws.left_radps:.2f}, {ws.right_radps:.2f})")

# %% The arc update does not care how finely a constant-velocity segment is split.
for n in (1, 10, 1000):
    pose = Pose2D()
    for _ in range(n):
        pose = integrate_pose_exact(pose, 0.1, 0.1, 1.0 / n)
    print(f"{n:5d} steps -> ({pose.x_m:.12f}, {pose.y_m:.12f}, {pose.theta_rad:.12f})")
print(f"closed form  -> ({math.sin(0.1):.12f}, {1 - math.cos(0.1):.12f}, 0.1)")

# %% Integer encoder ticks: odometry drifts by at most a fraction of a tick per step.
dt, v, w = 0.02, 0.2, 0.6
truth, est = Pose2D(), OdometryEstimate()
acc = np.zeros(2)
prev = EncoderState(0, 0, 0.0)
dl, dr = tick_split(Twist(v, w), dt, params)
errors = []
for k in range(1, 501):
    truth = integrate_pose_exact(truth, v, w, dt)
    acc += (dl, dr)
    curr = EncoderState(math.floor(acc[0]), math.floor(acc[1]), k * dt)
    est = update_odometry(est, prev, curr, params)
    prev = curr
    errors.append(math.hypot(est.pose.x_m - truth.x_m, est.pose.y_m - truth.y_m))
print(f"10 s circle: odometry error max {max(errors) * 1000:.3f} mm, "
      f"one tick = {params.meters_per_tick * 1000:.4f} mm of rim travel")
