"""Run a scenario end to end and write its artifacts to a directory."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .analysis import TrajectoryWriter, dump_summary, metrics
from .scenario import load_scenario_file, resolve
from .sim import SimResult, Simulation

TRAJECTORY_FILE = "trajectory.jsonl"
SUMMARY_FILE = "summary.json"
CONFIG_FILE = "config.resolved.json"


@dataclass
class RunOutput:
    out_dir: Path
    result: SimResult
    summary: dict

    @property
    def trajectory(self) -> Path:
        return self.out_dir / TRAJECTORY_FILE


def run_config(cfg: dict, out_dir: str | Path) -> RunOutput:
    """Simulate an already resolved config and write all three artifacts.

    On a runtime violation the trajectory up to the failing step is kept
    and the exception propagates; no summary is written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_FILE).write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    sim = Simulation(cfg)
    with open(out / TRAJECTORY_FILE, "w", newline="\n") as fh:
        writer = TrajectoryWriter(fh, sim.header())
        result = sim.run(writer.write)
    # the summary is computed from the file itself so the two always agree
    summary = metrics(out / TRAJECTORY_FILE)
    (out / SUMMARY_FILE).write_text(dump_summary(summary))
    return RunOutput(out, result, summary)


def run(scenario: str | Path | dict, out_dir: str | Path, seed: int | None = None,
        overrides: list[str] | None = None) -> RunOutput:
    raw = scenario if isinstance(scenario, dict) else load_scenario_file(scenario)
    return run_config(resolve(raw, seed, overrides), out_dir)
