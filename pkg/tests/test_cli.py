import csv
import json
import subprocess
import sys

import pytest

from swarmbed import cli
from swarmbed.analysis import RECORD_FIELDS, compute_metrics, metrics, read_trajectory
from swarmbed.errors import TrajectoryParseError


@pytest.fixture(scope="module")
def rendezvous_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("rv")
    assert cli.main(["run", "scenarios/rendezvous.yaml", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def noise_free_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("nf")
    assert cli.main(["run", "scenarios/noise_free.yaml", "--out", str(out),
                     "--set", "duration_s=10"]) == 0
    return out


@pytest.fixture(autouse=True)
def _cwd(monkeypatch, scenarios_dir):
    monkeypatch.chdir(scenarios_dir.parent)


def test_run_writes_artifacts(rendezvous_run):
    names = sorted(p.name for p in rendezvous_run.iterdir())
    assert names == ["config.resolved.json", "summary.json", "trajectory.jsonl"]
    cfg = json.loads((rendezvous_run / "config.resolved.json").read_text())
    assert cfg["seed"] == 42 and cfg["swarm"]["gain_epsilon"] == 0.2
    header, records = read_trajectory(rendezvous_run / "trajectory.jsonl")
    assert header["robots"] == ["r1", "r2", "r3", "r4", "r5"]
    assert all(list(r) == list(RECORD_FIELDS) for r in records)


def test_summary_matches_recomputation(rendezvous_run):
    stored = json.loads((rendezvous_run / "summary.json").read_text())
    assert stored == json.loads(json.dumps(metrics(rendezvous_run / "trajectory.jsonl")))


def test_identical_runs_are_byte_identical(rendezvous_run, tmp_path):
    assert cli.main(["run", "scenarios/rendezvous.yaml", "--out", str(tmp_path)]) == 0
    for name in ("trajectory.jsonl", "summary.json", "config.resolved.json"):
        assert (tmp_path / name).read_bytes() == (rendezvous_run / name).read_bytes()


def test_pairwise_plotdata_consistent_with_summary(rendezvous_run, tmp_path):
    out = tmp_path / "pw.csv"
    assert cli.main(["plotdata", str(rendezvous_run / "trajectory.jsonl"), "--kind",
                     "pairwise_distance", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    final_max = float(rows[-1]["max_m"])
    assert final_max <= 2 * 0.12 + 0.005
    summary = json.loads((rendezvous_run / "summary.json").read_text())
    assert final_max == pytest.approx(summary["aggregate"]["pairwise_distance_m"]["final_max"], rel=1e-8)


def test_paths_plotdata_schema(rendezvous_run, tmp_path):
    out = tmp_path / "paths.csv"
    cli.main(["plotdata", str(rendezvous_run / "trajectory.jsonl"), "--kind", "paths", "--out", str(out)])
    lines = out.read_text().splitlines()
    assert lines[0] == "t,robot_id,source,x,y"
    assert {row.split(",")[2] for row in lines[1:]} == {"truth", "odom", "camera"}


def test_noise_free_odometry(noise_free_run, tmp_path):
    summary = json.loads((noise_free_run / "summary.json").read_text())
    assert summary["aggregate"]["odom_vs_truth_m"]["mean"] < 1e-6
    out = tmp_path / "err.csv"
    cli.main(["plotdata", str(noise_free_run / "trajectory.jsonl"), "--kind", "odom_error", "--out", str(out)])
    errs = [float(r["odom_vs_truth_m"]) for r in csv.DictReader(out.open())]
    assert len(errs) > 100 and max(errs) < 1e-6


def test_camera_vs_truth_plotdata(noise_free_run, tmp_path):
    out = tmp_path / "cam.csv"
    cli.main(["plotdata", str(noise_free_run / "trajectory.jsonl"), "--kind", "camera_vs_truth",
              "--out", str(out)])
    assert out.read_text().splitlines()[0] == "t,robot_id,dx_m,dy_m,radial_m"


def test_unknown_plot_kind_is_usage_error(noise_free_run, tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["plotdata", str(noise_free_run / "trajectory.jsonl"), "--kind", "heatmap",
                  "--out", str(tmp_path / "x.csv")])
    assert exc.value.code == 2


def test_metrics_command(noise_free_run, capsys):
    assert cli.main(["metrics", str(noise_free_run / "trajectory.jsonl"), "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["algorithm"] == "rendezvous"
    assert cli.main(["metrics", str(noise_free_run / "trajectory.jsonl")]) == 0
    assert "odom-truth" in capsys.readouterr().out


def test_zero_duration_is_header_only(tmp_path):
    assert cli.main(["run", "scenarios/rendezvous.yaml", "--out", str(tmp_path),
                     "--set", "duration_s=0"]) == 0
    lines = (tmp_path / "trajectory.jsonl").read_text().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["format"] == "swarmbed-trajectory"
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["steps"] == 0


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("robots:\n  ids: [a, b]\n  initial_poses: [[0.5, 0.5, 0], [9.0, 0.5, 0]]\n")
    assert cli.main(["run", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "robot b" in capsys.readouterr().err
    assert cli.main(["run", "scenarios/rendezvous.yaml", "--out", str(tmp_path / "o"),
                     "--set", "swarm.nope=1"]) == 2


def test_runtime_violation_exit_code(tmp_path, capsys):
    # two robots driven straight at each other with nothing to stop them
    code = cli.main(["run", "scenarios/rendezvous.yaml", "--out", str(tmp_path),
                     "--set", "robots.initial_poses=[[1.0, 0.8, 0.0], [1.3, 0.8, 3.14159]]",
                     "--set", "swarm.avoidance=false"])
    assert code == 3
    err = capsys.readouterr().err
    assert "runtime violation at step" in err and "overlap" in err
    assert not (tmp_path / "summary.json").exists()


def test_corrupt_trajectory(tmp_path, noise_free_run, capsys):
    lines = (noise_free_run / "trajectory.jsonl").read_text().splitlines()
    bad = tmp_path / "t.jsonl"
    extra = json.loads(lines[3])
    extra["colour"] = "red"
    bad.write_text("\n".join(lines[:3] + [json.dumps(extra)] + lines[4:]) + "\n")
    with pytest.raises(TrajectoryParseError) as exc:
        read_trajectory(bad)
    assert exc.value.line_no == 4 and "unknown fields" in str(exc.value)
    assert cli.main(["metrics", str(bad)]) == 2
    assert "line 4" in capsys.readouterr().err
    bad.write_text("")
    with pytest.raises(TrajectoryParseError, match="empty"):
        read_trajectory(bad)
    bad.write_text("\n".join(lines[:4]) + "\n")  # truncated mid-step
    with pytest.raises(TrajectoryParseError, match="incomplete"):
        read_trajectory(bad)
    missing = json.loads(lines[2])
    del missing["sound"]
    bad.write_text("\n".join(lines[:2] + [json.dumps(missing)]) + "\n")
    with pytest.raises(TrajectoryParseError, match="missing"):
        read_trajectory(bad)


def test_compute_metrics_empty_records():
    summary = compute_metrics({"robots": ["r1"], "dt_s": 0.02, "algorithm": "idle"}, [])
    assert summary["steps"] == 0 and summary["aggregate"] == {}


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "swarmbed", "run", "scenarios/speed_clamp.yaml",
                           "--out", str(tmp_path), "--set", "duration_s=0.5"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "artifacts in" in proc.stdout
