import numpy as np
import pytest

from twotime.statistics import (SeriesTooShort, autocorrelation, autocorrelation_time, bin_series, count_flips,
                                fit_log_slope, flip_time, jackknife, pooled_flip_time)


def ou_series(n, k, dt, rng, reps=1):
    # exact AR(1) discretisation of dx = -k x dt + sqrt(2) dB
    a = np.exp(-k * dt)
    s = np.sqrt((1 - a * a) / k)
    x = np.empty((n, reps))
    x[0] = rng.normal(scale=1 / np.sqrt(k), size=reps)
    z = rng.normal(size=(n, reps))
    for i in range(1, n):
        x[i] = a * x[i - 1] + s * z[i]
    return x


def test_white_noise_tau_half(rng):
    st = autocorrelation_time(rng.normal(size=100_000))
    assert abs(st.tau_int - 0.5) < 3 * st.tau_int_error + 0.02


def test_ou_delta_is_one_over_k(rng):
    x = ou_series(400_000, 1.0, 0.01, rng)
    st = autocorrelation_time(x[:, 0], 0.01)
    # for a first-order process, tau_int (integral of exp(-k t)) -> 1/k
    assert st.delta == pytest.approx(1.0, rel=0.1)


def test_constant_series_rejected():
    with pytest.raises(ValueError):
        autocorrelation_time(np.ones(1000))


def test_short_series_rejected(rng):
    x = ou_series(500, 1.0, 0.01, rng)
    with pytest.raises(SeriesTooShort):
        autocorrelation_time(x[:, 0], 0.01)


def test_autocorrelation_normalised(rng):
    rho = autocorrelation(rng.normal(size=1000))
    assert rho[0] == pytest.approx(1.0)


def test_jackknife_of_mean_is_standard_error(rng):
    x = rng.normal(size=200)
    mean, err = jackknife(x)
    assert mean == pytest.approx(x.mean())
    assert err == pytest.approx(x.std(ddof=1) / np.sqrt(200))


def test_jackknife_error_shrinks_with_length(rng):
    x = ou_series(2 ** 17, 1.0, 0.05, rng)[:, 0]
    errs = []
    for n in (2 ** 14, 2 ** 15, 2 ** 16, 2 ** 17):
        errs.append(autocorrelation_time(x[:n], 0.05).jackknife_error)
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    np.testing.assert_allclose(ratios, np.sqrt(2), rtol=0.35)


def test_bin_series_shapes():
    assert bin_series(np.arange(10.0), 3).tolist() == [1.0, 4.0, 7.0]
    with pytest.raises(ValueError):
        bin_series(np.arange(3.0), 5)


def test_square_wave_flip_time():
    x = np.tile(np.r_[np.ones(50), -np.ones(50)], 20)
    r = flip_time(x, 0.5)
    assert r.mean == pytest.approx(50)
    assert not r.censored


def test_hysteresis_ignores_jitter():
    x = np.r_[np.ones(10), 0.2, -0.3, 0.1, np.ones(10), -np.ones(5)]
    assert count_flips(x, 0.5) == 1


def test_censored_run_reports_lower_bound():
    x = np.ones(1000)
    r = flip_time(x, 0.5, langevin_step=0.1)
    assert r.censored and r.n_flips == 0
    assert r.lower_bound == pytest.approx(99.9)


def test_pooled_flip_time_counts_exposure():
    a = flip_time(np.tile(np.r_[np.ones(50), -np.ones(50)], 10), 0.5)
    b = flip_time(np.ones(500), 0.5)
    p = pooled_flip_time([a, b])
    assert p.mean == pytest.approx((a.exposure + b.exposure) / a.n_flips)


def test_kramers_order_of_magnitude():
    # single overdamped particle in U = b (x^2 - 1)^2, D = 1
    from twotime.oracles import kramers_time
    rng = np.random.default_rng(2)
    b, dt, n, reps = 2.0, 0.005, 400_000, 8
    x = np.ones(reps)
    rec = np.empty((n // 10, reps))
    for i in range(n):
        x = x - dt * 4 * b * x * (x * x - 1) + np.sqrt(2 * dt) * rng.normal(size=reps)
        if i % 10 == 9:
            rec[i // 10] = x
    p = pooled_flip_time([flip_time(rec[:, j], 0.5, 10 * dt) for j in range(reps)])
    ref = kramers_time(8 * b, -4 * b, b, 1.0)
    assert ref / 3 < p.mean < ref * 3


def test_log_slope_fit():
    x = np.array([8.0, 16.0, 32.0])
    t = 3.0 * np.exp(0.1 * x)
    slope, err = fit_log_slope(x, t, 0.05 * t)
    assert slope == pytest.approx(0.1)
    assert err > 0
