"""Scenario configuration: defaults, loading, overrides and validation.

A scenario is a nested mapping (YAML or JSON on disk). Every key has a
default, so a file only lists what it changes; unknown keys are errors.
See README.md for the key reference.
"""

from __future__ import annotations

import copy
import math
import re
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "dt_s": 0.02,
    "duration_s": 240.0,
    "max_steps": None,
    "table_size_m": [2.5, 1.75],
    "stop_on_convergence": True,
    "settle_s": 1.0,
    "fail_on_overlap": True,
    "robot": {
        "wheel_radius_m": 0.016,
        "wheel_base_m": 0.06,
        "ticks_per_rev": 1440,
        "max_linear_speed_mps": 0.28,
        "max_wheel_speed_radps": 17.5,
        "footprint_radius_m": 0.035,
    },
    "motor": {
        "time_constant_s": 0.1,
        "max_speed_radps": 17.5,
        "discretization": "exact",
        "kp": 0.1,
        "ki": 1.0,
        "kd": 0.0,
        "integral_limit": 1.0,
        "output_limit": 1.0,
    },
    "power": {
        "idle_w": 0.9,
        "moving_w": 1.5,
        "capacity_wh": 7.4,
        "efficiency": 1.0,
        "initial_wh": None,
    },
    "noise": {
        "camera_sigma_m": 0.008 / math.sqrt(math.pi / 2.0),
        "camera_heading_sigma_rad": 0.01,
        "camera_drop_probability": 0.0,
        "encoder_scale_sigma": 0.001,
        "encoder_jitter_ticks": 1.2,
        "quantize_ticks": True,
    },
    "camera": {
        "origin": [0.0, 0.0],
        "x_axis": [1.0, 0.0],
        "y_axis": [0.0, 1.0],
        "axis_length_m": 1.0,
    },
    "robots": {
        "count": 5,
        "ids": None,
        "initial_poses": "random",
        "margin_m": 0.3,
        "min_separation_m": 0.2,
    },
    "algorithm": "rendezvous",
    "swarm": {
        "gain_epsilon": 0.2,
        "neighbor_graph": "complete",
        "comm_radius_m": None,
        "safety_radius_m": 0.12,
        "k_rep": 1.0,
        "convergence_tol_m": 0.005,
        "waypoint_tol_m": 0.005,
        "max_steps": 2400,
        "convergence_window": 10,
        "control_rate_hz": 10.0,
        "position_source": "camera",
        "avoidance": True,
        "staleness_s": 0.25,
        "k_v": 1.0,
        "k_omega": 3.0,
    },
    "formation": {
        "offsets": None,
        "side_m": 0.25,
        "assignment": "auto",
    },
    "script": [],
    "sound": {
        "sources": [],
        "d_min_m": 0.05,
        "lobe_exponent": 0.0,
    },
    "charging": {
        "enabled": False,
        "stations": [],
        "low_wh": 1.0,
        "dock_radius_m": 0.03,
    },
    "rates": {
        "odom_hz": 50.0,
        "battery_hz": 1.0,
        "sound_hz": 10.0,
        "camera_hz": 30.0,
    },
}

ALGORITHMS = ("rendezvous", "sound_rendezvous", "formation", "script", "idle")
_ROBOT_ID = re.compile(r"[a-z0-9_]+\Z")

# keys whose value is free-form (lists of records / null-or-list)
_OPAQUE = {("script",), ("sound", "sources"), ("charging", "stations"), ("formation", "offsets"),
           ("robots", "initial_poses"), ("robots", "ids"), ("table_size_m",),
           ("camera", "origin"), ("camera", "x_axis"), ("camera", "y_axis")}


def _merge(base: dict, override: dict, path: tuple, problems: list[str]) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = ".".join(path + (str(key),))
        if key not in base:
            problems.append(f"{where}: unknown key")
            continue
        if isinstance(base[key], dict) and path + (key,) not in _OPAQUE:
            if not isinstance(value, dict):
                problems.append(f"{where}: expected a mapping")
                continue
            out[key] = _merge(base[key], value, path + (key,), problems)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(text: str) -> tuple[list[str], Any]:
    """Split ``a.b.c=value``; the value is parsed as a YAML scalar or list."""
    if "=" not in text:
        raise ConfigError(f"--set {text!r}: expected key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"--set {key}: cannot parse value {raw!r}: {exc}") from exc
    return key.strip().split("."), value


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    raw = copy.deepcopy(raw)
    for text in overrides:
        keys, value = parse_override(text)
        node = raw
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {text}: {k} is not a mapping")
        node[keys[-1]] = value
    return raw


def load_scenario_file(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _num(cfg: dict, key: str, problems: list[str], *, positive=False, nonneg=False,
         allow_none=False, where="") -> None:
    value = cfg.get(key)
    name = f"{where}{key}"
    if value is None and allow_none:
        return
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        problems.append(f"{name}: expected a finite number, got {value!r}")
        return
    if positive and value <= 0:
        problems.append(f"{name}: must be > 0, got {value!r}")
    if nonneg and value < 0:
        problems.append(f"{name}: must be >= 0, got {value!r}")


def _pairs(value, name: str, problems: list[str], width: int) -> list | None:
    if not isinstance(value, list):
        problems.append(f"{name}: expected a list")
        return None
    for k, item in enumerate(value):
        if not (isinstance(item, (list, tuple)) and len(item) == width
                and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                        and math.isfinite(v) for v in item)):
            problems.append(f"{name}[{k}]: expected {width} finite numbers, got {item!r}")
            return None
    return [list(map(float, item)) for item in value]


def random_poses(n: int, table: tuple[float, float], margin: float, min_sep: float,
                 rng: np.random.Generator, max_tries: int = 100000) -> list[list[float]]:
    """Rejection-sample ``n`` poses inside the table with pairwise separation."""
    poses: list[list[float]] = []
    tries = 0
    while len(poses) < n:
        tries += 1
        if tries > max_tries:
            raise ConfigError(f"robots.initial_poses: could not place {n} robots "
                              f"{min_sep} m apart inside the table")
        x = rng.uniform(margin, table[0] - margin)
        y = rng.uniform(margin, table[1] - margin)
        if all(math.hypot(x - p[0], y - p[1]) >= min_sep for p in poses):
            theta = rng.uniform(-math.pi, math.pi)
            poses.append([float(x), float(y), float(theta)])
    return poses


def resolve(raw: dict, seed: int | None = None, overrides: list[str] | None = None) -> dict:
    """Merge ``raw`` onto the defaults, apply overrides and validate.

    Returns the fully resolved configuration (random initial poses drawn,
    robot ids filled in). Raises :class:`ConfigError` listing every problem.
    """
    if overrides:
        raw = apply_overrides(raw, overrides)
    if seed is not None:
        raw = dict(raw, seed=seed)
    problems: list[str] = []
    cfg = _merge(DEFAULTS, raw, (), problems)
    if problems:
        raise ConfigError(problems)

    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool) or cfg["seed"] < 0:
        problems.append(f"seed: expected a non-negative integer, got {cfg['seed']!r}")
    _num(cfg, "dt_s", problems, positive=True)
    _num(cfg, "duration_s", problems, nonneg=True)
    _num(cfg, "settle_s", problems, nonneg=True)
    if cfg["max_steps"] is not None and (not isinstance(cfg["max_steps"], int) or cfg["max_steps"] < 0):
        problems.append(f"max_steps: expected a non-negative integer, got {cfg['max_steps']!r}")
    table = _pairs([cfg["table_size_m"]], "table_size_m", problems, 2)
    if table and min(table[0]) <= 0:
        problems.append("table_size_m: both sides must be > 0")
    for section, keys in (("robot", ("wheel_radius_m", "wheel_base_m", "max_linear_speed_mps",
                                     "max_wheel_speed_radps", "footprint_radius_m")),
                          ("motor", ("time_constant_s", "max_speed_radps", "integral_limit",
                                     "output_limit")),
                          ("power", ("capacity_wh", "efficiency")),
                          ("rates", ("odom_hz", "battery_hz", "sound_hz", "camera_hz"))):
        for key in keys:
            _num(cfg[section], key, problems, positive=True, where=f"{section}.")
    for key in ("kp", "ki", "kd"):
        _num(cfg["motor"], key, problems, nonneg=True, where="motor.")
    for key in ("idle_w", "moving_w"):
        _num(cfg["power"], key, problems, nonneg=True, where="power.")
    _num(cfg["power"], "initial_wh", problems, nonneg=True, allow_none=True, where="power.")
    for key in ("camera_sigma_m", "camera_heading_sigma_rad", "camera_drop_probability",
                "encoder_scale_sigma", "encoder_jitter_ticks"):
        _num(cfg["noise"], key, problems, nonneg=True, where="noise.")
    tpr = cfg["robot"]["ticks_per_rev"]
    if not isinstance(tpr, int) or isinstance(tpr, bool) or tpr <= 0:
        problems.append(f"robot.ticks_per_rev: expected a positive integer, got {tpr!r}")
    if cfg["motor"]["discretization"] not in ("exact", "euler"):
        problems.append("motor.discretization: expected 'exact' or 'euler'")
    if cfg["algorithm"] not in ALGORITHMS:
        problems.append(f"algorithm: expected one of {', '.join(ALGORITHMS)}, got {cfg['algorithm']!r}")
    sw = cfg["swarm"]
    for key in ("gain_epsilon", "safety_radius_m", "convergence_tol_m", "waypoint_tol_m", "control_rate_hz",
                "staleness_s", "k_v", "k_omega"):
        _num(sw, key, problems, positive=True, where="swarm.")
    _num(sw, "k_rep", problems, nonneg=True, where="swarm.")
    for key in ("max_steps", "convergence_window"):
        if not isinstance(sw[key], int) or isinstance(sw[key], bool) or sw[key] < 1:
            problems.append(f"swarm.{key}: expected a positive integer, got {sw[key]!r}")
    if sw["position_source"] not in ("camera", "odometry"):
        problems.append("swarm.position_source: expected 'camera' or 'odometry'")
    if sw["neighbor_graph"] not in ("complete", "radius"):
        problems.append("swarm.neighbor_graph: expected 'complete' or 'radius'")
    if problems:
        raise ConfigError(problems)

    rb = cfg["robots"]
    poses_cfg = rb["initial_poses"]
    if poses_cfg == "random":
        count = rb["count"]
        if not isinstance(count, int) or isinstance(count, bool) or count < 1:
            raise ConfigError(f"robots.count: expected a positive integer, got {count!r}")
    else:
        poses = _pairs(poses_cfg, "robots.initial_poses", problems, 3)
        if poses is None:
            raise ConfigError(problems)
        count = len(poses)
        rb["count"] = count
    ids = rb["ids"] or [f"r{k + 1}" for k in range(count)]
    if len(ids) != count:
        problems.append(f"robots.ids: {len(ids)} ids for {count} robots")
    for rid in ids:
        if not isinstance(rid, str) or not _ROBOT_ID.match(rid):
            problems.append(f"robots.ids: {rid!r} is not a valid name ([a-z0-9_])")
    if len(set(ids)) != len(ids):
        problems.append("robots.ids: ids must be unique")
    rb["ids"] = list(ids)
    if problems:
        raise ConfigError(problems)

    w, h = cfg["table_size_m"]
    foot = cfg["robot"]["footprint_radius_m"]
    if poses_cfg == "random":
        rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 1]))
        rb["initial_poses"] = random_poses(count, (w, h), max(rb["margin_m"], foot),
                                           max(rb["min_separation_m"], 2 * foot), rng)
    poses = rb["initial_poses"]
    for rid, (x, y, _) in zip(ids, poses):
        if not (foot <= x <= w - foot and foot <= y <= h - foot):
            problems.append(f"robots.initial_poses: robot {rid} at ({x}, {y}) is outside the "
                            f"{w} x {h} m table")
    for i in range(count):
        for j in range(i + 1, count):
            d = math.hypot(poses[i][0] - poses[j][0], poses[i][1] - poses[j][1])
            if d < 2 * foot:
                problems.append(f"robots.initial_poses: robots {ids[i]} and {ids[j]} overlap "
                                f"(distance {d:.4f} m < {2 * foot} m)")

    if cfg["algorithm"] == "formation":
        offsets = cfg["formation"]["offsets"]
        if offsets is not None:
            offsets = _pairs(offsets, "formation.offsets", problems, 2)
            if offsets is not None and len(offsets) != count:
                problems.append(f"formation.offsets: {len(offsets)} offsets for {count} robots")
        if cfg["formation"]["assignment"] not in ("auto", "ordered"):
            problems.append("formation.assignment: expected 'auto' or 'ordered'")
    if cfg["algorithm"] in ("rendezvous", "sound_rendezvous", "formation"):
        if count < 2:
            problems.append("robots.count: swarm algorithms need at least 2 robots")
        elif sw["neighbor_graph"] == "complete" and sw["gain_epsilon"] * (count - 1) >= 1:
            problems.append(f"swarm.gain_epsilon: gain_epsilon*(N-1) must be < 1 for the "
                            f"complete graph (got {sw['gain_epsilon'] * (count - 1):.3f})")
        if sw["safety_radius_m"] < 2 * foot:
            problems.append("swarm.safety_radius_m: must be at least 2 * robot.footprint_radius_m")
    for k, seg in enumerate(cfg["script"]):
        if not isinstance(seg, dict) or set(seg) - {"duration_s", "v_mps", "w_radps"}:
            problems.append(f"script[{k}]: expected keys duration_s, v_mps, w_radps")
            continue
        for key in ("duration_s", "v_mps", "w_radps"):
            _num(seg, key, problems, where=f"script[{k}].")
    for k, src in enumerate(cfg["sound"]["sources"]):
        if not isinstance(src, dict) or set(src) - {"x_m", "y_m", "power_w", "active"} \
                or not {"x_m", "y_m"} <= set(src):
            problems.append(f"sound.sources[{k}]: expected keys x_m, y_m[, power_w, active]")
    station_ids = []
    for k, st in enumerate(cfg["charging"]["stations"]):
        if not isinstance(st, dict) or not {"id", "x_m", "y_m"} <= set(st) \
                or set(st) - {"id", "x_m", "y_m", "charge_rate_w"}:
            problems.append(f"charging.stations[{k}]: expected keys id, x_m, y_m[, charge_rate_w]")
            continue
        station_ids.append(st["id"])
    if len(set(station_ids)) != len(station_ids):
        problems.append("charging.stations: ids must be unique")
    if problems:
        raise ConfigError(problems)
    return cfg
