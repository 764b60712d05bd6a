"""Two-time evolution of a harmonic oscillator worldline.

The worldline starts with a single slice.  Every few Langevin steps a new
slice is appended at the present, so Langevin time and coordinate time
advance together.  Slices in the past keep fluctuating unless they are
pinned: the history is not frozen, it keeps being rewritten.
"""
import numpy as np

from twotime.dynamics import ActionSpec, Potential
from twotime.engine import EngineParams, Point, run_two_time
from twotime.lattice import LatticeGeometry, new_state
from twotime.measurement import MeasurementSchedule
from twotime.noise import NoiseSpec
from twotime.oracles import ho_correlator_exact

a_t, spt = 0.5, 100                    # slice spacing, Langevin steps per new slice
geo = LatticeGeometry(0, (), 1.0, 120, a_t)
action = ActionSpec("worldline", potential=Potential.harmonic())
schedule = MeasurementSchedule(t1=5.0, t2=40.0, window=30.0)
params = EngineParams.for_tick(a_t, spt)

# the newest slice sits at an open end and fluctuates more than the bulk, so
# the oscillator is read eight slices (four time units) behind the present
points = [Point(10), Point(8, relative=True), Point(10, relative=True)]
for pin in (False, True):
    state = new_state(geo, initial_present=0, two_time=True, replicas=16)
    spec = NoiseSpec.for_geometry(geo, params.langevin_step, master_seed=3)
    traj = run_two_time(state, action, spec, params, schedule, points=points, pin=pin)
    past = traj.series(points[0].key)
    print(f"pin={pin!s:5s}  slice 10 moved by {np.ptp(past, axis=0).mean():.3f} after it was created; "
          f"present slice {traj.present[-1]} at t'={traj.times[-1]:.1f}")

lo, hi = schedule.window_bounds
mask = traj.window(lo, hi)
x0 = traj.series(points[1].key)[mask]
x2 = traj.series(points[2].key)[mask]
# exact values on this lattice spacing; a short run with a finite Langevin
# step carries a few percent of step-size bias on top of the error bars
exact0, exact1 = ho_correlator_exact(1.0, [0.0, 1.0], a_t)
for label, prod, exact in (("<x^2>      ", x0 ** 2, exact0), ("<x(t)x(t-1)>", x0 * x2, exact1)):
    per_run = prod.mean(axis=0)
    err = per_run.std(ddof=1) / np.sqrt(len(per_run))
    print(f"{label} {per_run.mean():.3f} +- {err:.3f}   (lattice exact {exact:.3f})")
