"""Time averages over a Langevin window versus an ensemble at one instant.

Each replica of a single-site Gaussian model is averaged over a window of
width Delta around t2.  Short windows scatter widely between runs; once
Delta is many correlation times long, every run gives the ensemble value.
"""
from twotime.dynamics import ActionSpec
from twotime.engine import EngineParams, LangevinEngine, LangevinTrajectory
from twotime.lattice import LatticeGeometry, new_state
from twotime.measurement import MeasurementSchedule, deviation_sweep
from twotime.noise import NoiseSpec

import numpy as np

geo = LatticeGeometry(1, 1, 1.0, 1, 1.0)
dt, replicas = 0.01, 64
state = new_state(geo, replicas=replicas)
engine = LangevinEngine(state, ActionSpec(mass=1.0), NoiseSpec.for_geometry(geo, dt, master_seed=5),
                        EngineParams(dt))
engine.advance(1000)

times, xs = [], []
def rec(s):
    times.append(s.langevin_clock)
    xs.append(s.values[:, 0, 0] ** 2)
engine.advance(40_000, rec, record_every=5)
traj = LangevinTrajectory(np.array(times), np.zeros(len(times), int), {"phi2": np.array(xs)},
                          state.replica_ids, dt)

delta = 0.5        # correlation time of phi^2 for unit mass
t2 = 0.5 * (times[0] + times[-1])
rows = deviation_sweep(traj, MeasurementSchedule(0.0, t2, 390.0), [0.5, 5.0, 50.0, 390.0], delta,
                       (1.0, 0.0), ["phi2"])
print("Delta/delta   mean over runs   run-to-run variance")
for r in rows:
    print(f"{r.delta_over_deltafluct:10.0f}   {r.windowed:12.4f}   {r.run_variance:14.5f}")
print("ensemble value: 1.0")
