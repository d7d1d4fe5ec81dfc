"""Odometry against the overhead camera on the 5 m calibration path.

Both tracks are shifted to start at the origin before comparing, and the
error statistics are gathered over a batch of seeds.

Run: python demos/02_odometry_calibration.py [n_seeds]
"""
import sys
from pathlib import Path

import numpy as np

from swarmbed.analysis import odom_camera_errors
from swarmbed.scenario import load_scenario_file, resolve
from swarmbed.sim import Simulation

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 20
raw = load_scenario_file(Path(__file__).resolve().parents[1] / "scenarios" / "odometry_calibration.yaml")

means, maxes = [], []
for seed in range(n_seeds):
    recs = []
    Simulation(resolve(raw, seed)).run(lambda r: recs.append(r[0]))
    idx = np.array([k for k, r in enumerate(recs) if r.camera is not None])
    err = odom_camera_errors({"cam_idx": idx, "camera": np.array([recs[k].camera for k in idx]),
                              "odom": np.array([r.odom for r in recs])})
    means.append(err.mean())
    maxes.append(err.max())

means, maxes = np.array(means), np.array(maxes)
print(f"{n_seeds} seeds")
print(f"mean absolute error  {means.mean() * 100:.2f} cm (seed-to-seed std {means.std() * 100:.2f} cm)")
print(f"max error            {maxes.mean() * 100:.2f} cm on average, {maxes.max() * 100:.2f} cm worst")
print(f"seeds with mean in [3, 13] cm: {np.mean((means >= 0.03) & (means <= 0.13)):.0%}")

# Switching the encoder noise off leaves quantisation plus camera noise.
recs = []
Simulation(resolve(raw, 0, ["noise.encoder_scale_sigma=0", "noise.encoder_jitter_ticks=0"])).run(
    lambda r: recs.append(r[0]))
idx = np.array([k for k, r in enumerate(recs) if r.camera is not None])
floor = odom_camera_errors({"cam_idx": idx, "camera": np.array([recs[k].camera for k in idx]),
                            "odom": np.array([r.odom for r in recs])})
print(f"encoder noise off    {floor.mean() * 100:.2f} cm")
