"""The topic bus on its own, then a low-battery storm at two charging docks.

Run: python demos/04_bus_and_charging.py
"""
from pathlib import Path

from swarmbed import Bus, TopicPath, aggregate_matrix
from swarmbed.scenario import load_scenario_file, resolve
from swarmbed.sim import Simulation

# %% Namespaced topics, rate limits and bounded queues
bus = Bus()
odom = {r: bus.advertise(TopicPath(r, "odom"), rate_hz=10.0) for r in ("r1", "r2")}
sub = bus.subscribe("/r1/odom")
for k in range(50):  # offered at 50 Hz for one second
    t = k / 50
    bus.set_time(t)
    odom["r1"].publish({"x_m": 0.01 * k, "y_m": 0.0, "theta_rad": 0.0}, t)
    bus.spin(t)
print(f"/r1/odom: 50 offers -> {bus.published_count('/r1/odom')} delivered, "
      f"queue kept {len(sub)} and dropped {sub.dropped}")
print(f"/r2/odom saw nothing: {bus.latest('/r2/odom')}")
mat = aggregate_matrix(bus, ["/r1/odom", "/r2/odom"], 3)
print("aggregate (rows x, y, theta; columns r1, r2):")
print(mat.data, "present:", mat.present)

bus.serve("/echo/ping", lambda body: {"pong": body})
print(bus.request("/echo/ping", 42, timeout_s=0.1))

# %% Five robots nearly empty, two docks
raw = load_scenario_file(Path(__file__).resolve().parents[1] / "scenarios" / "charging_storm.yaml")
sim = Simulation(resolve(raw))
sim.run()
for st in sim.world.charging_stations:
    print(f"station {st.id} at {st.position}: {st.occupied_by}")
print("waiting:", list(sim.tracker.waitlist))
for r in sim.world.robots:
    print(f"  {r.id} battery {r.battery_wh:.4f} Wh, charging={r.charging}")
