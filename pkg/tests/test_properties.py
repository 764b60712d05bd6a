"""Randomised invariants of the lattice, dynamics, noise and measurement layers."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from twotime.dynamics import ActionSpec, Potential, drift_array, lattice_action
from twotime.engine import LangevinTrajectory
from twotime.lattice import Boundary, LatticeGeometry, grow_present, new_state, site_neighbors
from twotime.lattice import SliceInitPolicy
from twotime.measurement import MeasurementSchedule, windowed_correlator
from twotime.noise import NoiseSpec, counter_generator, sample_noise

policies = st.sampled_from(["zero", "copy_previous_plus_noise", "gaussian_free_field"])
boundaries = st.sampled_from([Boundary.PERIODIC, Boundary.OPEN])


@st.composite
def geometries(draw, max_side=5):
    n = draw(st.integers(0, 2))
    ext = tuple(draw(st.integers(1, max_side)) for _ in range(n))
    T = draw(st.integers(2, max_side + 2))
    bnd = (draw(boundaries),) + tuple(draw(boundaries) for _ in range(n))
    return LatticeGeometry(n, ext, draw(st.floats(0.3, 2.0)), T, draw(st.floats(0.3, 2.0)), bnd)


@given(geometries(), st.lists(policies, min_size=1, max_size=6), st.integers(0, 2 ** 32 - 1))
def test_growth_never_alters_written_slices(geo, steps, seed):
    if geo.boundary[0] is Boundary.PERIODIC:
        geo = LatticeGeometry(geo.spatial_dims, geo.spatial_extent, geo.spatial_spacing, geo.time_extent,
                              geo.time_spacing, (Boundary.OPEN,) + geo.boundary[1:])
    state = new_state(geo, initial_present=0, two_time=True, replicas=2)
    rng = np.random.default_rng(seed)
    state.values[:, 0] = rng.normal(size=state.values[:, 0].shape)
    for kind in steps:
        if state.present_index + 1 >= geo.time_extent:
            break
        before = state.stored.copy()
        grow_present(state, SliceInitPolicy(kind, noise_scale=0.1), rng)
        np.testing.assert_array_equal(state.values[:, : before.shape[1]], before)
        # nothing exists beyond the present
        assert np.all(state.values[:, state.present_index + 1:] == 0)
        assert state.stored.shape[1] == state.present_index + 1


@given(geometries(), st.data())
def test_neighbour_relation_is_symmetric(geo, data):
    site = tuple(data.draw(st.integers(0, e - 1)) for e in geo.shape)
    for nb in site_neighbors(geo, site):
        assert site in site_neighbors(geo, nb)
        assert sum(a != b for a, b in zip(site, nb)) == 1


def random_field(rng, shape, complex_=False):
    x = rng.normal(size=shape)
    return x + 1j * rng.normal(size=shape) if complex_ else x


actions = st.sampled_from([
    ("field", "euclidean"), ("field", "minkowski"), ("worldline", "euclidean"), ("worldline", "minkowski")])


def build(kind, mode, mass, quartic, damping):
    if kind == "field":
        geo = LatticeGeometry(1, 4, 1.0, 4, 0.8, (Boundary.OPEN, Boundary.PERIODIC))
        act = ActionSpec("scalar_field", mode, mass=mass, quartic=quartic, damping=damping)
    else:
        geo = LatticeGeometry(0, (), 1.0, 6, 0.5)
        act = ActionSpec("worldline", mode, mass=mass, damping=damping,
                         potential=Potential.double_well(quartic, 1.0))
    return geo, act


params = dict(mass=st.floats(0.1, 2.0), quartic=st.floats(0.0, 1.0), seed=st.integers(0, 2 ** 32 - 1))


@given(kind_mode=actions, eps=st.floats(0.0, 2.0), **params)
def test_damping_term_is_exactly_linear(kind_mode, eps, mass, quartic, seed):
    # minkowski mode refuses zero damping, so compare against a small base value
    kind, mode = kind_mode
    base = 0.01
    eps += base
    geo, act0 = build(kind, mode, mass, quartic, base)
    _, act = build(kind, mode, mass, quartic, eps)
    phi = random_field(np.random.default_rng(seed), (1,) + geo.shape, mode == "minkowski")
    p = geo.time_extent - 1
    diff = drift_array(phi, geo, act, p) - drift_array(phi, geo, act0, p)
    np.testing.assert_allclose(diff, -(eps - base) * phi, rtol=1e-12, atol=1e-12)


@given(kind_mode=actions, **params)
def test_drift_is_local(kind_mode, mass, quartic, seed):
    kind, mode = kind_mode
    geo, act = build(kind, mode, mass, quartic, 0.1)
    rng = np.random.default_rng(seed)
    phi = random_field(rng, (1,) + geo.shape, mode == "minkowski")
    site = tuple(int(rng.integers(e)) for e in geo.shape)
    p = geo.time_extent - 1
    moved = phi.copy()
    moved[(0,) + site] += 0.37
    changed = np.abs(drift_array(moved, geo, act, p) - drift_array(phi, geo, act, p))[0] > 0
    allowed = {site, *site_neighbors(geo, site)}
    assert {tuple(int(i) for i in idx) for idx in np.argwhere(changed)} <= allowed


@settings(max_examples=15)
@given(kind_mode=actions, **params)
def test_drift_is_numerical_gradient(kind_mode, mass, quartic, seed):
    kind, mode = kind_mode
    damping = 0.1 if mode == "minkowski" else 0.0
    geo, act = build(kind, mode, mass, quartic, damping)
    phi = np.random.default_rng(seed).normal(size=geo.shape)
    if mode == "minkowski":
        phi = phi.astype(complex)
    d = drift_array(phi[None], geo, act, geo.time_extent - 1)[0]
    h = 1e-5
    g = np.zeros(geo.shape, dtype=phi.dtype)
    for idx in np.ndindex(geo.shape):
        up, dn = phi.copy(), phi.copy()
        up[idx] += h
        dn[idx] -= h
        g[idx] = (lattice_action(up, geo, act) - lattice_action(dn, geo, act)) / (2 * h)
    g = g / geo.cell_volume
    ref = (-g if mode == "euclidean" else 1j * g) - damping * phi
    np.testing.assert_allclose(d, ref, rtol=1e-5, atol=1e-6)


@given(st.integers(0, 2 ** 63 - 1), st.integers(0, 10_000), st.integers(0, 100_000), st.text(max_size=8))
def test_noise_is_a_pure_function_of_its_key(seed, replica, step, purpose):
    geo = LatticeGeometry(1, 3, 1.0, 2, 1.0)
    spec = NoiseSpec.for_geometry(geo, 0.01, master_seed=seed)
    np.testing.assert_array_equal(sample_noise(geo, spec, step, replica), sample_noise(geo, spec, step, replica))
    a = counter_generator(seed, replica, purpose, step).standard_normal(4)
    b = counter_generator(seed, replica, purpose, step).standard_normal(4)
    np.testing.assert_array_equal(a, b)


@given(st.integers(2, 300), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_full_span_window_equals_time_average(n, reps, seed):
    x = np.random.default_rng(seed).normal(size=(n, reps))
    dt = 0.1
    tr = LangevinTrajectory(dt * np.arange(1, n + 1), np.zeros(n, int), {"x": x}, tuple(range(reps)), dt)
    lo, hi = dt, dt * n
    sch = MeasurementSchedule(0.0, 0.5 * (lo + hi), hi - lo)
    est = windowed_correlator(tr, sch, ["x"])
    assert est.n_samples == n
    np.testing.assert_allclose(est.values, x.mean(axis=0), rtol=1e-12)
