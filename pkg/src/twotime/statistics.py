"""Estimators for correlated Langevin series.

Integrated autocorrelation times use the self-consistent window of Madras
and Sokal (sum the normalised autocorrelation up to the first ``W`` with
``W >= c * tau(W)``).  Errors of means come from binned jackknife.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np


class SeriesTooShort(ValueError):
    pass


@dataclass
class SeriesStatistics:
    mean: float
    variance: float
    tau_int: float
    tau_int_error: float
    window: int
    n_samples: int
    n_effective: float
    error: float
    jackknife_error: float
    langevin_step: float = 1.0

    @property
    def delta(self) -> float:
        """Autocorrelation time in Langevin-time units."""
        return self.tau_int * self.langevin_step

    def to_dict(self):
        d = asdict(self)
        d["delta"] = self.delta
        return d


def autocorrelation(series: np.ndarray, max_lag: int | None = None) -> np.ndarray:
    """Normalised autocorrelation, averaged over replicas on axis 1 if present."""
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    x = x - x.mean(axis=0)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, n=nfft, axis=0)
    acov = np.fft.irfft(f * np.conj(f), n=nfft, axis=0)[:n].mean(axis=1)
    acov /= np.arange(n, 0, -1)
    if acov[0] <= 0:
        raise ValueError("series has zero variance")
    rho = acov / acov[0]
    return rho if max_lag is None else rho[: max_lag + 1]


def jackknife(samples, estimator: Callable = np.mean) -> tuple[float, float]:
    """Delete-one jackknife over the first axis of ``samples``."""
    s = np.asarray(samples)
    n = s.shape[0]
    if n < 2:
        raise ValueError("jackknife needs at least two samples")
    full = estimator(s)
    idx = np.arange(n)
    loo = np.array([estimator(s[idx != i]) for i in range(n)])
    err = np.sqrt((n - 1) / n * np.sum(np.abs(loo - loo.mean(axis=0)) ** 2, axis=0))
    return full, err


def bin_series(series: np.ndarray, bin_size: int) -> np.ndarray:
    x = np.asarray(series)
    nb = x.shape[0] // bin_size
    if nb < 1:
        raise ValueError("series shorter than one bin")
    return x[: nb * bin_size].reshape((nb, bin_size) + x.shape[1:]).mean(axis=1)


def autocorrelation_time(series, langevin_step: float = 1.0, c: float = 6.0,
                         min_ratio: float = 100.0) -> SeriesStatistics:
    """Integrated autocorrelation time with automatic windowing.

    ``series`` is ``(n,)`` or ``(n, replicas)``.  Raises
    :class:`SeriesTooShort` when no window satisfies the self-consistency
    rule or the series is shorter than ``min_ratio * tau_int``.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, reps = x.shape
    if n < 4:
        raise SeriesTooShort("need at least 4 samples")
    if np.all(x.var(axis=0) == 0):
        raise ValueError("series has zero variance")
    rho = autocorrelation(x)
    taus = 0.5 + np.cumsum(rho[1:])
    w = np.arange(1, n)
    ok = np.flatnonzero(w >= c * taus)
    if ok.size == 0:
        raise SeriesTooShort("no self-consistent summation window")
    window = int(w[ok[0]])
    tau = float(max(taus[ok[0]], 0.5))
    if n < min_ratio * tau:
        raise SeriesTooShort(f"series of {n} samples is shorter than {min_ratio:g} x tau_int={tau:.3g}")
    tau_err = tau * np.sqrt(2.0 * (2 * window + 1) / n)
    mean = float(x.mean())
    var = float(x.var(ddof=1)) if x.size > 1 else 0.0
    n_total = n * reps
    n_eff = n_total / (2 * tau)
    err = np.sqrt(var / n_eff)
    bsize = max(1, int(np.ceil(4 * tau)))
    bins = bin_series(x, bsize).reshape(-1) if n >= 2 * bsize else x.mean(axis=0)
    jk = jackknife(bins)[1] if bins.size >= 2 else float("nan")
    return SeriesStatistics(mean, var, tau, float(tau_err), window, n_total, float(n_eff),
                            float(err), float(jk), float(langevin_step))


@dataclass
class FlipTimeResult:
    """Mean Langevin time between sign-settled crossings.

    When fewer than ``min_flips`` flips occur the run is censored: ``mean``
    is then exposure / max(flips, 1), a lower bound when no flip happened.
    """

    mean: float
    error: float
    n_flips: int
    exposure: float
    censored: bool

    @property
    def lower_bound(self) -> float:
        return self.exposure if self.n_flips == 0 else self.mean


def flip_events(series, threshold: float) -> tuple[int, np.ndarray]:
    """Index of first settling and indices of subsequent sign flips.

    A sign is settled once ``|x| >= threshold``; a flip is recorded when the
    series next reaches the opposite threshold.
    """
    x = np.asarray(series, dtype=float)
    hits = np.flatnonzero(np.abs(x) >= threshold)
    if hits.size == 0:
        return -1, np.empty(0, dtype=int)
    signs = np.sign(x[hits])
    change = np.flatnonzero(signs[1:] != signs[:-1]) + 1
    return int(hits[0]), hits[change]


def count_flips(series, threshold: float) -> int:
    return len(flip_events(series, threshold)[1])


def flip_time(series, threshold: float, langevin_step: float = 1.0, min_flips: int = 5) -> FlipTimeResult:
    first, flips = flip_events(series, threshold)
    if first < 0:
        raise ValueError("series never settles beyond the threshold")
    n = len(np.asarray(series))
    exposure = (n - 1 - first) * langevin_step
    k = len(flips)
    if k >= min_flips:
        gaps = np.diff(np.concatenate([[first], flips])) * langevin_step
        return FlipTimeResult(float(gaps.mean()), float(gaps.std(ddof=1) / np.sqrt(k)), k,
                              exposure, False)
    mean = exposure / max(k, 1)
    err = mean / np.sqrt(k) if k else float("inf")
    return FlipTimeResult(float(mean), float(err), k, exposure, True)


def pooled_flip_time(results: Sequence[FlipTimeResult]) -> FlipTimeResult:
    """Exposure-weighted flip time over independent runs.

    Censored runs contribute their exposure without a flip, which is the
    maximum-likelihood treatment for memoryless escapes.
    """
    exposure = float(sum(r.exposure for r in results))
    k = int(sum(r.n_flips for r in results))
    if k == 0:
        return FlipTimeResult(exposure, float("inf"), 0, exposure, True)
    mean = exposure / k
    return FlipTimeResult(mean, mean / np.sqrt(k), k, exposure, False)


def fit_log_slope(x, times, errors) -> tuple[float, float]:
    """Weighted least-squares slope of ``log(times)`` against ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.log(np.asarray(times, dtype=float))
    sy = np.asarray(errors, dtype=float) / np.asarray(times, dtype=float)
    w = 1.0 / sy ** 2
    sw, sx, sxx = w.sum(), (w * x).sum(), (w * x * x).sum()
    sy_, sxy = (w * y).sum(), (w * x * y).sum()
    det = sw * sxx - sx ** 2
    slope = (sw * sxy - sx * sy_) / det
    return float(slope), float(np.sqrt(sw / det))
