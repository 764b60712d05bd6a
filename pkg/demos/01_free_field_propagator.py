"""Standard stochastic quantization of a free scalar field.

A 1+1 dimensional periodic lattice is relaxed with Langevin dynamics in
the ordinary (non-growing) mode.  After equilibration the equal-Langevin-
time two-point function in momentum space should match the exact lattice
propagator 1 / (p_hat^2 + m^2).
"""
import numpy as np

from twotime.dynamics import ActionSpec
from twotime.engine import EngineParams, LangevinEngine
from twotime.lattice import LatticeGeometry, new_state
from twotime.noise import NoiseSpec
from twotime.oracles import free_field_propagator_exact

geo = LatticeGeometry(1, 8, 1.0, 8, 1.0, "periodic")
mass, dt = 1.0, 0.01
replicas = 8

state = new_state(geo, replicas=replicas)
engine = LangevinEngine(state, ActionSpec(mass=mass), NoiseSpec.for_geometry(geo, dt, master_seed=1),
                        EngineParams(dt))

# the slowest mode relaxes at rate m^2, so ten time units is plenty
engine.advance(int(10 / dt))

power = []
engine.advance(20_000, lambda s: power.append(np.abs(np.fft.fftn(s.values, axes=(1, 2), norm="ortho")) ** 2),
               record_every=20)
G = np.mean(power, axis=(0, 1)) * geo.cell_volume
_, exact = free_field_propagator_exact(geo, mass)

print("momentum (t, x)   measured   exact")
for idx in [(0, 0), (0, 1), (1, 1), (0, 4), (4, 4)]:
    print(f"   {idx!s:10s}  {G[idx]:8.4f}  {exact[idx]:8.4f}")
print(f"largest relative deviation over all momenta: {np.max(np.abs(G / exact - 1)):.3f}")
