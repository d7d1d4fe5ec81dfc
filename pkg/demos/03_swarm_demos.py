"""Rendezvous, formation and sound-seeking runs written to disk.

Each run leaves trajectory.jsonl, summary.json and config.resolved.json
under out/<name>/, plus a paths.csv that any plotting tool can read.

Run: python demos/03_swarm_demos.py [out_dir]
"""
import sys
from pathlib import Path

from swarmbed import plotdata, run

root = Path(__file__).resolve().parents[1]
out = Path(sys.argv[1]) if len(sys.argv) > 1 else root / "out"

for name in ("rendezvous", "formation", "sound_rendezvous"):
    res = run(root / "scenarios" / f"{name}.yaml", out / name)
    plotdata(res.trajectory, "paths", out / name / "paths.csv")
    plotdata(res.trajectory, "pairwise_distance", out / name / "pairwise.csv")
    agg = res.summary["aggregate"]
    pw = agg["pairwise_distance_m"]
    state = (f"converged at t={res.result.convergence_time_s:.1f} s" if res.result.converged
             else "did not converge")
    print(f"\n{name}: {state}, {res.result.steps} steps logged")
    print(f"  spread {pw['initial_max']:.3f} m -> {pw['final_max']:.3f} m, "
          f"closest approach {pw['min_over_run']:.3f} m")
    if "formation" in agg:
        f = agg["formation"]
        print("  neighbour distances", " ".join(f"{d:.4f}" for d in f["neighbor_distances_m"]),
              f"(target {f['target_neighbor_distance_m']:.2f})")
    if "sound" in agg:
        s = agg["sound"]
        print(f"  loudest robot {s['final_argmax_robot']}, everyone within "
              f"{s['max_distance_to_argmax_m']:.3f} m of it")
    print(f"  odometry vs camera: mean {agg['odom_vs_camera_m']['mean'] * 100:.2f} cm")
