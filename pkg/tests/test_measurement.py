import numpy as np
import pytest

from twotime.dynamics import ActionSpec, Potential
from twotime.engine import EngineParams, LangevinTrajectory, Point, run_two_time
from twotime.lattice import LatticeGeometry, new_state
from twotime.measurement import (MeasurementSchedule, PointerDevice, UnresolvedMeasurement, WindowError,
                                 deviation_sweep, ensemble_mode_estimate, ensemble_probability,
                                 first_flip_times, pointer_measurement, pointer_outcomes, post_ramp_flips,
                                 windowed_correlator)
from twotime.noise import NoiseSpec


def trajectory(values, dt=0.1, name="x"):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n = len(values)
    return LangevinTrajectory(dt * np.arange(1, n + 1), np.zeros(n, int), {name: values},
                              tuple(range(values.shape[1])), dt)


def test_schedule_validation():
    with pytest.raises(ValueError):
        MeasurementSchedule(5.0, 5.0, 1.0)
    with pytest.raises(ValueError):
        MeasurementSchedule(0.0, 5.0, 0.0)
    with pytest.raises(ValueError):
        MeasurementSchedule(0.0, 5.0, 2.0, termination=5.5)
    s = MeasurementSchedule(0.0, 5.0, 2.0)
    assert s.window_bounds == (4.0, 6.0) and s.termination == 6.0


def test_constant_signal_gives_square():
    tr = trajectory(np.full(100, 1.5))
    est = windowed_correlator(tr, MeasurementSchedule(0.0, 5.0, 4.0), ["x", "x"])
    assert est.value == pytest.approx(2.25)


def test_alternating_signal_averages_to_zero():
    tr = trajectory(np.tile([1.0, -1.0], 50))
    est = windowed_correlator(tr, MeasurementSchedule(0.0, 5.05, 8.0), ["x"])
    assert abs(est.value) < 0.03


def test_full_span_window_is_plain_mean(rng):
    x = rng.normal(size=(200, 3))
    tr = trajectory(x)
    est = windowed_correlator(tr, MeasurementSchedule(0.0, 10.05, 19.9), ["x"])
    np.testing.assert_allclose(est.values, x.mean(axis=0))
    assert est.n_samples == 200


def test_window_beyond_recording_rejected():
    tr = trajectory(np.ones(50))
    with pytest.raises(WindowError):
        windowed_correlator(tr, MeasurementSchedule(0.0, 5.0, 2.0), ["x"])


def test_ensemble_mode_uses_one_time():
    x = np.vstack([np.zeros(4), np.array([1.0, 2.0, 3.0, 4.0])])
    mean, err = ensemble_mode_estimate(trajectory(x), ["x"], 0.2)
    assert mean == 2.5 and err == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)


def test_outcome_counting():
    s = ensemble_probability(np.array([1, -1, 1, 1, 0]))
    assert s.counts == {"+1": 3, "-1": 1, "unresolved": 1}
    assert s.p_plus == 0.75
    with pytest.raises(ValueError):
        ensemble_probability(np.array([2, 1]))


def test_complex_amplitudes_rejected():
    with pytest.raises(TypeError):
        ensemble_probability(np.array([1 + 1j, 0.5j]))


def test_probability_averaged_not_amplitude():
    # two runs with opposite amplitude: averaging amplitudes would give zero
    runs = [trajectory(np.full(40, a)) for a in (1.0, -1.0)]
    ests = [windowed_correlator(t, MeasurementSchedule(0.0, 2.0, 3.0), ["x"]) for t in runs]
    s = ensemble_probability(ests)
    assert s.kind == "probability" and s.mean == pytest.approx(1.0)
    assert s.histogram["counts"] and sum(s.histogram["counts"]) == 2


DEVICE = dict(separation=1.0, n_dof=32, depth=1.0, ramp_start=0.0, ramp_end=5.0)


def test_unbiased_pointer_is_fair():
    outs = pointer_outcomes(1.0, PointerDevice(coupling=0.0, **DEVICE), range(200), langevin_step=0.01,
                            termination=8.0, master_seed=4)
    s = ensemble_probability(outs)
    assert s.counts["unresolved"] == 0
    assert abs(s.p_plus - 0.5) < 3 * np.sqrt(0.25 / 200)


def test_strong_bias_selects_sign():
    kappa = 10 * 32 * 1.0  # bias force well above the barrier slope
    dev = PointerDevice(coupling=kappa, **DEVICE)
    outs = pointer_outcomes(1.0, dev, range(100), langevin_step=0.01, termination=8.0, master_seed=5)
    assert sum(o.outcome == 1 for o in outs) >= 99
    neg = pointer_outcomes(-1.0, dev, range(100), langevin_step=0.01, termination=8.0, master_seed=5)
    assert sum(o.outcome == -1 for o in neg) >= 99


def test_settled_pointer_does_not_flip():
    dev = PointerDevice(coupling=0.0, **DEVICE)
    outs = pointer_outcomes(0.0, dev, range(16), langevin_step=0.01, termination=5.0 + 100.0, master_seed=6)
    assert all(post_ramp_flips(o, dev) == 0 for o in outs)


def test_unresolved_measurement_raises():
    dev = PointerDevice(depth=1e-6, n_dof=1, ramp_end=0.1)
    with pytest.raises(UnresolvedMeasurement):
        pointer_measurement(0.0, dev, langevin_step=0.01, termination=0.2)
    with pytest.raises(ValueError):
        pointer_measurement(0.0, PointerDevice(ramp_end=2.0), langevin_step=0.01, termination=1.0)


def test_first_flip_time_grows_with_size():
    means = []
    for n in (1, 2, 3):
        t, cens = first_flip_times(PointerDevice(n_dof=n), range(32), langevin_step=0.01, max_time=400.0)
        means.append(t.mean())
    assert means[0] < means[1] < means[2]


def test_device_validation():
    with pytest.raises(ValueError):
        PointerDevice(separation=0.0)
    with pytest.raises(ValueError):
        PointerDevice(n_dof=0.5)
    assert PointerDevice(n_dof=4, depth=2.0, separation=1.0).barrier == 8.0


def test_pinning_and_pointer_coexist():
    geo = LatticeGeometry(0, (), 0.5, 80, 0.5)
    st = new_state(geo, initial_present=0, two_time=True, replicas=4)
    spec = NoiseSpec.for_geometry(geo, 0.05, master_seed=2)
    sch = MeasurementSchedule(2.0, 20.0, 10.0)
    p1, now = Point(4), Point(0, relative=True)
    tr = run_two_time(st, ActionSpec("worldline", potential=Potential.harmonic()), spec,
                      EngineParams.for_tick(0.5, 10), sch, points=[p1, now], pin=True)
    pinned = tr.series(p1.key)
    assert np.all(pinned == pinned[0])
    sysv = np.sign(tr.series(now.key))
    dev = PointerDevice(coupling=320.0, separation=1.0, n_dof=32, depth=1.0, ramp_start=0.0, ramp_end=1.0)
    dt = tr.times[1] - tr.times[0]
    outs = pointer_outcomes(sysv, dev, range(4), langevin_step=dt, termination=tr.times[-1] - tr.times[0])
    assert all(o.settled for o in outs)


def test_deviation_sweep_rows(rng):
    x = rng.normal(size=(400, 50))
    tr = trajectory(x)
    sch = MeasurementSchedule(0.0, 20.05, 39.0)
    rows = deviation_sweep(tr, sch, [1.0, 4.0, 16.0, 39.0], 0.1, (0.0, 0.0), ["x"])
    assert [r.delta_over_deltafluct for r in rows] == [10.0, 40.0, 160.0, 390.0]
    var = [r.run_variance for r in rows]
    assert var[0] > var[-1]
    assert var[-1] == pytest.approx(1 / rows[-1].n_samples, rel=0.5)
