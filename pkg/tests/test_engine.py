import numpy as np
import pytest

from twotime.dynamics import ActionSpec, Potential
from twotime.engine import (EngineParams, LangevinEngine, Point, RunawayError, ScheduleError, langevin_step,
                            restore_engine, run_burn_in, run_two_time)
from twotime.lattice import LatticeGeometry, new_state
from twotime.measurement import MeasurementSchedule
from twotime.noise import NoiseSpec, sample_noise
from twotime.oracles import ou_stationary
from twotime.statistics import autocorrelation_time

SITE = LatticeGeometry(1, 1, 1.0, 1, 1.0)


def ou_engine(replicas=1, dt=0.01, seed=0, mass=1.0, start=0.0):
    st = new_state(SITE, replicas=replicas)
    st.values[:] = start
    spec = NoiseSpec.for_geometry(SITE, dt, master_seed=seed)
    return LangevinEngine(st, ActionSpec(mass=mass), spec, EngineParams(dt))


def test_zero_drift_zero_noise_leaves_state():
    st = new_state(SITE)
    spec = NoiseSpec(1.0, 0.1, 1e-300)
    eng = LangevinEngine(st, ActionSpec(mass=0.0), spec, EngineParams(0.1))
    eng.step()
    assert st.values[0, 0, 0] == pytest.approx(0.0, abs=1e-140)
    assert st.langevin_clock == pytest.approx(0.1)
    assert st.step == 1


def test_single_step_is_euler_maruyama():
    geo = LatticeGeometry(1, 4, 1.0, 3, 1.0)
    st = new_state(geo)
    st.values[0] = np.arange(12.0).reshape(3, 4) / 10
    before = st.values.copy()
    act = ActionSpec(mass=0.5, quartic=0.2)
    spec = NoiseSpec.for_geometry(geo, 0.02, master_seed=1)
    from twotime.dynamics import drift_array
    d = drift_array(before, geo, act, 2)
    langevin_step(st, act, spec, EngineParams(0.02))
    np.testing.assert_allclose(st.values, before + 0.02 * (d + sample_noise(geo, spec, 0, 0)[None]))


def test_ou_stationary_variance():
    eng = ou_engine(replicas=16, dt=0.02, seed=3)
    eng.advance(500)
    rec = []
    eng.advance(40_000, lambda s: rec.append(s.values[:, 0, 0].copy()), 5)
    x = np.array(rec)
    stats = autocorrelation_time(x ** 2, 0.1, min_ratio=0)
    exact = ou_stationary(1.0, 1.0).euler_variance(0.02)
    assert abs((x ** 2).mean() - exact) < 3 * stats.error


def test_step_size_extrapolation_is_linear():
    # Euler bias of the OU variance is D/k * (k dt/2) to first order; k = 10
    # makes the bias at these steps large compared with the statistical error
    k = 10.0
    vals = []
    steps = (0.02, 0.01, 0.005)
    for dt in steps:
        eng = ou_engine(replicas=256, dt=dt, seed=11, mass=np.sqrt(k))
        eng.advance(int(1 / dt))
        acc = []
        eng.advance(int(40 / dt), lambda s: acc.append(s.values[:, 0, 0] ** 2), max(1, int(0.05 / dt)))
        vals.append(np.mean(acc))
    slope, intercept = np.polyfit(steps, vals, 1)
    exact = [ou_stationary(k, 1.0).euler_variance(dt) for dt in steps]
    np.testing.assert_allclose(vals, exact, rtol=0.02)
    assert intercept == pytest.approx(1 / k, rel=0.02)
    assert slope == pytest.approx(0.5, rel=0.3)
    assert vals[0] > vals[1] > vals[2]


def test_runaway_raised():
    geo = LatticeGeometry(1, 1, 1.0, 1, 1.0)
    st = new_state(geo, "minkowski")
    st.values[:] = 1e6
    spec = NoiseSpec.for_geometry(geo, 0.01)
    eng = LangevinEngine(st, ActionSpec(mode="minkowski", mass=1.0, damping=0.1), spec,
                         EngineParams(0.01, max_drift_norm=1e3))
    with pytest.raises(RunawayError) as err:
        eng.step()
    assert err.value.replica_ids == (0,)


def test_adaptive_step_subdivides():
    st = new_state(SITE)
    st.values[:] = 50.0
    spec = NoiseSpec.for_geometry(SITE, 0.01)
    eng = LangevinEngine(st, ActionSpec(mass=1.0), spec, EngineParams(0.01, max_drift_norm=10.0, adaptive=True))
    eng.step()
    assert st.langevin_clock == pytest.approx(0.01)
    assert abs(st.values[0, 0, 0]) < 50.0


def test_burn_in_zero_steps_is_noop():
    st = new_state(SITE)
    st.values[:] = 2.0
    spec = NoiseSpec.for_geometry(SITE, 0.01)
    out, report = run_burn_in(st, ActionSpec(mass=1.0), spec, EngineParams(0.01))
    assert out.values[0, 0, 0] == 2.0 and report.steps == 0 and report.probe is None


def test_burn_in_forgets_initial_state():
    means = []
    for start in (10.0, -3.0):
        eng = ou_engine(replicas=32, seed=5, start=start)
        run_burn_in(eng.state, eng.action, eng.spec, EngineParams(0.01, burn_in_steps=2000), engine=eng)
        acc = []
        eng.advance(20_000, lambda s: acc.append(s.values[:, 0, 0].copy()), 10)
        means.append(np.array(acc))
    diff = means[0].mean() - means[1].mean()
    # the shared noise makes the difference decay geometrically
    assert abs(diff) < 1e-6
    trend = np.polyfit(np.arange(len(means[0])), means[0].mean(axis=1), 1)[0] * len(means[0])
    err = autocorrelation_time(means[0], 0.1, min_ratio=0).error
    assert abs(trend) < 3 * 2 * err


def test_two_time_clock_arithmetic():
    geo = LatticeGeometry(0, (), 1.0, 40, 1.0)
    st = new_state(geo, initial_present=0, two_time=True)
    spec = NoiseSpec.for_geometry(geo, 0.1)
    eng = LangevinEngine(st, ActionSpec("worldline", potential=Potential.harmonic()), spec,
                         EngineParams(0.1, steps_per_coordinate_tick=10))
    eng.advance(100)
    assert st.present_index == 10
    assert st.langevin_clock == pytest.approx(st.present_index * geo.time_spacing)


def test_pinned_slice_never_moves():
    geo = LatticeGeometry(0, (), 0.5, 60, 0.5)
    st = new_state(geo, initial_present=0, two_time=True)
    spec = NoiseSpec.for_geometry(geo, 0.05)
    params = EngineParams.for_tick(0.5, 10)
    sch = MeasurementSchedule(2.0, 20.0, 10.0, cadence=1)
    p1, lag = Point(4), Point(3, relative=True)
    tr = run_two_time(st, ActionSpec("worldline", potential=Potential.harmonic()), spec, params, sch,
                      points=[p1, lag])
    pinned = tr.series(p1.key)
    assert np.all(pinned == pinned[0])
    assert st.values[0, 4] == pinned[0]
    assert np.ptp(tr.series(lag.key)) > 0


def test_history_mutability_on_fixed_past_slice():
    geo = LatticeGeometry(0, (), 1.0, 30, 1.0)
    st = new_state(geo, initial_present=0, two_time=True)
    spec = NoiseSpec.for_geometry(geo, 0.1)
    eng = LangevinEngine(st, ActionSpec("worldline", potential=Potential.harmonic()), spec,
                         EngineParams(0.1, steps_per_coordinate_tick=10))
    eng.advance(100)
    snap = st.values[0, 2]
    eng.advance(100)
    assert abs(st.values[0, 2] - snap) > 0


def test_schedule_beyond_extent_rejected():
    geo = LatticeGeometry(0, (), 1.0, 10, 1.0)
    st = new_state(geo, initial_present=0, two_time=True)
    spec = NoiseSpec.for_geometry(geo, 0.1)
    with pytest.raises(ScheduleError):
        run_two_time(st, ActionSpec("worldline"), spec, EngineParams(0.1, 10), MeasurementSchedule(1, 20, 4))


def test_tick_mismatch_rejected():
    geo = LatticeGeometry(0, (), 1.0, 30, 1.0)
    st = new_state(geo, initial_present=0, two_time=True)
    spec = NoiseSpec.for_geometry(geo, 0.1)
    with pytest.raises(ScheduleError):
        run_two_time(st, ActionSpec("worldline"), spec, EngineParams(0.1, 7), MeasurementSchedule(1, 5, 2))


def test_batched_equals_individual_replicas():
    def run(ids):
        geo = LatticeGeometry(0, (), 1.0, 20, 1.0)
        st = new_state(geo, initial_present=0, two_time=True, replicas=ids)
        spec = NoiseSpec.for_geometry(geo, 0.1, master_seed=8)
        eng = LangevinEngine(st, ActionSpec("worldline", potential=Potential.harmonic()), spec,
                             EngineParams(0.1, 10))
        eng.advance(150)
        return st.values
    both = run([4, 7])
    np.testing.assert_array_equal(both[1], run([7])[0])


def test_checkpoint_restore_continues_identically(tmp_path):
    geo = LatticeGeometry(0, (), 1.0, 20, 1.0)
    act = ActionSpec("worldline", potential=Potential.harmonic())

    def fresh():
        st = new_state(geo, initial_present=0, two_time=True, replicas=2)
        return LangevinEngine(st, act, NoiseSpec.for_geometry(geo, 0.1, master_seed=3), EngineParams(0.1, 10))

    full = fresh()
    full.advance(130)
    half = fresh()
    half.advance(70)
    half.checkpoint(tmp_path / "c.json")
    back = restore_engine(tmp_path / "c.json", act)
    back.advance(60)
    np.testing.assert_array_equal(back.state.values, full.state.values)


def test_step_param_validation():
    with pytest.raises(ValueError, match="langevin_step must be positive"):
        EngineParams(0.0)
    with pytest.raises(ValueError):
        EngineParams(0.1, steps_per_coordinate_tick=2.5)
