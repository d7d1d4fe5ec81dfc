"""Trajectory log format, run metrics and plot-data tables.

A trajectory file is JSON Lines: one header object, then one record per
robot per logged step. Numbers are written with 9 significant digits so
identical runs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import IO, Any, Iterable

import numpy as np

from .errors import TrajectoryParseError

FORMAT = "swarmbed-trajectory"
RECORD_FIELDS = ("step", "t_s", "robot_id", "truth", "odom", "camera", "cmd", "wheels", "ticks",
                 "battery_wh", "sound")
_VECTOR_WIDTH = {"truth": 3, "odom": 3, "camera": 3, "cmd": 2, "wheels": 2, "ticks": 2}
PLOT_KINDS = ("paths", "pairwise_distance", "odom_error", "camera_vs_truth")
# speed under which a robot counts as stopped when locating convergence
STOPPED_SPEED_MPS = 1e-3


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} cannot be logged")
    text = format(x, ".9g")
    return "0" if text == "-0" else text


def _value(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (tuple, list)):
        return "[" + ",".join(_num(x) for x in v) + "]"
    return _num(v)


def format_record(rec) -> str:
    """One trajectory line (no newline) from a StepRecord-like object."""
    return "{" + ",".join(f'"{name}":{_value(getattr(rec, name))}' for name in RECORD_FIELDS) + "}"


def format_header(header: dict) -> str:
    return json.dumps(header, sort_keys=True, separators=(",", ":"))


class TrajectoryWriter:
    def __init__(self, stream: IO[str], header: dict):
        self._stream = stream
        stream.write(format_header(header) + "\n")

    def write(self, records: Iterable) -> None:
        self._stream.write("".join(format_record(r) + "\n" for r in records))


def _check_record(obj: Any, line_no: int) -> dict:
    if not isinstance(obj, dict):
        raise TrajectoryParseError(line_no, "record is not an object")
    keys = set(obj)
    unknown = keys - set(RECORD_FIELDS)
    if unknown:
        raise TrajectoryParseError(line_no, f"unknown fields {sorted(unknown)}")
    missing = set(RECORD_FIELDS) - keys
    if missing:
        raise TrajectoryParseError(line_no, f"missing fields {sorted(missing)}")
    if not isinstance(obj["step"], int) or not isinstance(obj["robot_id"], str):
        raise TrajectoryParseError(line_no, "bad step or robot_id")
    for name, width in _VECTOR_WIDTH.items():
        v = obj[name]
        if v is None and name == "camera":
            continue
        if not (isinstance(v, list) and len(v) == width
                and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
            raise TrajectoryParseError(line_no, f"field {name!r} must hold {width} numbers")
    for name in ("t_s", "battery_wh", "sound"):
        if not isinstance(obj[name], (int, float)) or isinstance(obj[name], bool):
            raise TrajectoryParseError(line_no, f"field {name!r} must be a number")
    return obj


def read_trajectory(path: str | Path) -> tuple[dict, list[dict]]:
    """Parse and validate a trajectory file; errors carry the line number."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise TrajectoryParseError(0, f"cannot read {path}: {exc}") from exc
    if not lines:
        raise TrajectoryParseError(1, "empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TrajectoryParseError(1, f"header is not JSON: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise TrajectoryParseError(1, f"not a {FORMAT} header")
    records = []
    expected_step = 0
    robots = header.get("robots", [])
    for line_no, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TrajectoryParseError(line_no, f"not JSON: {exc}") from exc
        rec = _check_record(obj, line_no)
        k = len(records) % max(len(robots), 1)
        if robots and rec["robot_id"] != robots[k]:
            raise TrajectoryParseError(line_no, f"expected robot {robots[k]!r}, got {rec['robot_id']!r}")
        if rec["step"] != expected_step:
            raise TrajectoryParseError(line_no, f"expected step {expected_step}, got {rec['step']}")
        records.append(rec)
        if k == len(robots) - 1:
            expected_step += 1
    if robots and len(records) % len(robots):
        raise TrajectoryParseError(len(lines), "last step is incomplete")
    return header, records


def _stats(err: np.ndarray) -> dict:
    if err.size == 0:
        return {"mean": None, "std": None, "max": None, "n": 0}
    return {"mean": float(err.mean()), "std": float(err.std()), "max": float(err.max()),
            "n": int(err.size)}


def _by_robot(header: dict, records: list[dict]) -> dict[str, dict[str, np.ndarray]]:
    out = {}
    for rid in header["robots"]:
        recs = [r for r in records if r["robot_id"] == rid]
        cam_rows = [r for r in recs if r["camera"] is not None]
        out[rid] = {
            "t": np.array([r["t_s"] for r in recs], dtype=float),
            "truth": np.array([r["truth"] for r in recs], dtype=float).reshape(-1, 3),
            "odom": np.array([r["odom"] for r in recs], dtype=float).reshape(-1, 3),
            "cam_idx": np.array([k for k, r in enumerate(recs) if r["camera"] is not None], dtype=int),
            "camera": np.array([r["camera"] for r in cam_rows], dtype=float).reshape(-1, 3),
            "sound": np.array([r["sound"] for r in recs], dtype=float),
            "battery": np.array([r["battery_wh"] for r in recs], dtype=float),
        }
    return out


def _radial(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.hypot(a[:, 0] - b[:, 0], a[:, 1] - b[:, 1])


def odom_camera_errors(track: dict[str, np.ndarray]) -> np.ndarray:
    """Odometry vs camera with both tracks shifted to start at the origin."""
    idx = track["cam_idx"]
    if idx.size == 0:
        return np.array([])
    cam = track["camera"][:, :2] - track["camera"][0, :2]
    odom = track["odom"][idx, :2] - track["odom"][idx[0], :2]
    return np.hypot(*(odom - cam).T)


def _pairwise(positions: np.ndarray) -> np.ndarray:
    """positions: (steps, robots, 2) -> (steps, pairs) distances."""
    n = positions.shape[1]
    iu = np.triu_indices(n, 1)
    diff = positions[:, :, None, :] - positions[:, None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])[:, iu[0], iu[1]]


def compute_metrics(header: dict, records: list[dict]) -> dict:
    """Summary statistics of one run (the content of ``summary.json``)."""
    robots = header["robots"]
    dt = header["dt_s"]
    summary: dict[str, Any] = {"algorithm": header.get("algorithm"), "robots": robots,
                               "steps": 0, "duration_s": 0.0}
    if not records:
        summary["per_robot"] = {}
        summary["aggregate"] = {}
        return summary
    tracks = _by_robot(header, records)
    n_steps = len(tracks[robots[0]]["t"])
    summary["steps"] = n_steps - 1
    summary["duration_s"] = float(tracks[robots[0]]["t"][-1])

    per_robot = {}
    all_ot, all_oc, all_ct, speeds_max = [], [], [], []
    speed_rows = []
    for rid in robots:
        tr = tracks[rid]
        ot = _radial(tr["odom"], tr["truth"])
        oc = odom_camera_errors(tr)
        ct = _radial(tr["camera"], tr["truth"][tr["cam_idx"]]) if tr["cam_idx"].size else np.array([])
        step_dist = _radial(tr["truth"][1:], tr["truth"][:-1])
        speed = step_dist / np.diff(tr["t"]) if n_steps > 1 else np.array([0.0])
        speed_rows.append(speed)
        per_robot[rid] = {
            "odom_vs_truth_m": _stats(ot),
            "odom_vs_camera_m": _stats(oc),
            "camera_vs_truth_mean_m": _stats(ct)["mean"],
            "max_speed_mps": float(speed.max()) if speed.size else 0.0,
            "path_length_m": float(step_dist.sum()),
            "battery_used_wh": float(tr["battery"][0] - tr["battery"][-1]),
        }
        all_ot.append(ot)
        all_oc.append(oc)
        all_ct.append(ct)
        speeds_max.append(per_robot[rid]["max_speed_mps"])
    agg: dict[str, Any] = {
        "odom_vs_truth_m": _stats(np.concatenate(all_ot)),
        "odom_vs_camera_m": _stats(np.concatenate(all_oc)),
        "camera_vs_truth_mean_m": _stats(np.concatenate(all_ct))["mean"],
        "max_speed_mps": float(max(speeds_max)),
    }

    convergence = None
    if n_steps > 1:
        moving = np.max(np.vstack(speed_rows), axis=0) >= STOPPED_SPEED_MPS
        if not moving[-1]:
            last_moving = np.flatnonzero(moving)
            convergence = int(last_moving[-1] + 1) if last_moving.size else 0
    agg["convergence_step"] = convergence

    if len(robots) > 1:
        pos = np.stack([tracks[r]["truth"][:, :2] for r in robots], axis=1)
        pw = _pairwise(pos)
        agg["pairwise_distance_m"] = {
            "min_over_run": float(pw.min()),
            "initial_max": float(pw[0].max()),
            "final_max": float(pw[-1].max()),
            "final_min": float(pw[-1].min()),
        }
        offsets = header.get("formation_offsets")
        if offsets:
            off = np.array([offsets[r] for r in robots])
            target = _pairwise(off[None])[0]
            final = pw[-1]
            edge = np.isclose(target, target.min(), rtol=1e-6)
            shift = (pos[-1] - off).mean(axis=0)
            agg["formation"] = {
                "mean_abs_distance_error_m": float(np.mean(np.abs(final - target))),
                "neighbor_distances_m": [float(d) for d in final[edge]],
                "target_neighbor_distance_m": float(target.min()),
                "max_slot_error_m": float(np.max(_radial(pos[-1] - off - shift, np.zeros_like(off)))),
            }
        sound = np.array([tracks[r]["sound"][-1] for r in robots])
        if np.any(sound > 0):
            k = int(np.argmax(sound))
            d = np.hypot(*(pos[-1] - pos[-1][k]).T)
            agg["sound"] = {"final_argmax_robot": robots[k],
                            "max_distance_to_argmax_m": float(d.max())}
    summary["per_robot"] = per_robot
    summary["aggregate"] = agg
    return summary


def metrics(trajectory: str | Path) -> dict:
    header, records = read_trajectory(trajectory)
    return compute_metrics(header, records)


def dump_summary(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True, allow_nan=False) + "\n"


def plot_table(header: dict, records: list[dict], kind: str) -> str:
    """CSV text for one plot kind, with a one-line header."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {', '.join(PLOT_KINDS)}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    robots = header["robots"]
    if kind == "paths":
        w.writerow(["t", "robot_id", "source", "x", "y"])
        for r in records:
            w.writerow([_num(r["t_s"]), r["robot_id"], "truth", _num(r["truth"][0]), _num(r["truth"][1])])
            w.writerow([_num(r["t_s"]), r["robot_id"], "odom", _num(r["odom"][0]), _num(r["odom"][1])])
            if r["camera"] is not None:
                w.writerow([_num(r["t_s"]), r["robot_id"], "camera", _num(r["camera"][0]),
                            _num(r["camera"][1])])
    elif kind == "pairwise_distance":
        w.writerow(["t", "min_m", "mean_m", "max_m"])
        if len(robots) > 1 and records:
            tracks = _by_robot(header, records)
            pos = np.stack([tracks[r]["truth"][:, :2] for r in robots], axis=1)
            pw = _pairwise(pos)
            for t, row in zip(tracks[robots[0]]["t"], pw):
                w.writerow([_num(t), _num(row.min()), _num(row.mean()), _num(row.max())])
    elif kind == "odom_error":
        w.writerow(["t", "robot_id", "odom_vs_truth_m"])
        for r in records:
            err = math.hypot(r["odom"][0] - r["truth"][0], r["odom"][1] - r["truth"][1])
            w.writerow([_num(r["t_s"]), r["robot_id"], _num(err)])
    else:
        w.writerow(["t", "robot_id", "dx_m", "dy_m", "radial_m"])
        for r in records:
            if r["camera"] is None:
                continue
            dx = r["camera"][0] - r["truth"][0]
            dy = r["camera"][1] - r["truth"][1]
            w.writerow([_num(r["t_s"]), r["robot_id"], _num(dx), _num(dy), _num(math.hypot(dx, dy))])
    return buf.getvalue()


def plotdata(trajectory: str | Path, kind: str, out_file: str | Path) -> None:
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {', '.join(PLOT_KINDS)}")
    header, records = read_trajectory(trajectory)
    Path(out_file).write_text(plot_table(header, records, kind))
