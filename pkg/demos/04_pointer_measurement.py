"""A measurement as spontaneous symmetry breaking of a pointer.

The pointer is the collective coordinate of N degrees of freedom in a
double well whose depth is ramped up.  Without coupling to the system it
falls into either well with equal odds; a coupling to the system's value
tilts the wells so the outcome follows the system.  Once settled, the
barrier grows with N and the pointer stops flipping.
"""
import numpy as np

from twotime.measurement import (PointerDevice, ensemble_probability, first_flip_times, pointer_outcomes,
                                 post_ramp_flips)

base = dict(separation=1.0, n_dof=32, depth=1.0, ramp_start=0.0, ramp_end=5.0)

free = pointer_outcomes(0.0, PointerDevice(coupling=0.0, **base), range(200), langevin_step=0.01,
                        termination=10.0)
s = ensemble_probability(free)
print(f"uncoupled pointer: P(+) = {s.p_plus:.3f} +- {s.p_plus_error:.3f} over {s.n} runs")

biased = PointerDevice(coupling=320.0, **base)
for value in (+1.0, -1.0):
    outs = pointer_outcomes(value, biased, range(100), langevin_step=0.01, termination=10.0)
    agree = sum(o.outcome == np.sign(value) for o in outs)
    print(f"system value {value:+.0f}: pointer agrees in {agree}/100 runs")

outs = pointer_outcomes(0.0, PointerDevice(**base), range(16), langevin_step=0.01, termination=105.0)
print(f"flips after settling (N=32, 10^4 steps): {sum(post_ramp_flips(o, biased) for o in outs)}")

print("\nN   mean first-flip time of a settled pointer")
for n in (1, 2, 3, 4):
    t, cens = first_flip_times(PointerDevice(n_dof=n), range(32), langevin_step=0.01, max_time=1000.0)
    print(f"{n}   {t.mean():8.1f}" + (f"   ({cens.sum()} runs censored)" if cens.any() else ""))
