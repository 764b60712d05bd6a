"""Measurement protocol: preparation/readout scheduling, windowed time
averages, post-probability ensemble statistics and the symmetry-breaking
pointer device.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .engine import LangevinTrajectory, Point
from .noise import BLOCK_STEPS, counter_generator
from .statistics import count_flips, jackknife


@dataclass(frozen=True)
class MeasurementSchedule:
    """Preparation at ``t1``, readout window of width ``window`` centred on ``t2``.

    All times are Langevin times (equal to the present coordinate time in
    two-time runs).  ``termination`` defaults to the window's end.
    """

    t1: float
    t2: float
    window: float
    cadence: int = 1
    termination: float | None = None

    def __post_init__(self):
        if not self.t1 < self.t2:
            raise ValueError("preparation time t1 must precede readout time t2")
        if not self.window > 0:
            raise ValueError("window must be positive")
        if self.cadence < 1:
            raise ValueError("cadence must be >= 1")
        end = self.t2 + 0.5 * self.window
        if self.termination is None:
            object.__setattr__(self, "termination", end)
        elif self.termination < end - 1e-12:
            raise ValueError("termination must not precede the end of the readout window")

    @property
    def window_bounds(self) -> tuple[float, float]:
        return self.t2 - 0.5 * self.window, self.t2 + 0.5 * self.window

    def with_window(self, window: float) -> "MeasurementSchedule":
        return MeasurementSchedule(self.t1, self.t2, window, self.cadence, self.termination)


@dataclass
class WindowedEstimate:
    """Per-replica time average over one readout window."""

    observable: str
    window: tuple[float, float]
    n_samples: int
    values: np.ndarray

    @property
    def probability(self) -> np.ndarray:
        """Squared magnitude, the default per-run probability quantity."""
        return np.abs(self.values) ** 2

    @property
    def value(self):
        return self.values[0] if len(self.values) == 1 else self.values


class WindowError(ValueError):
    pass


def _window_mask(traj: LangevinTrajectory, lo: float, hi: float) -> np.ndarray:
    if traj.times.size == 0:
        raise WindowError("trajectory holds no samples")
    spacing = np.min(np.diff(traj.times)) if traj.times.size > 1 else traj.langevin_step
    tol = spacing * (1 + 1e-9)
    if traj.times[0] > lo + tol or traj.times[-1] < hi - tol:
        raise WindowError(f"trajectory [{traj.times[0]:.4g}, {traj.times[-1]:.4g}] "
                          f"does not cover window [{lo:.4g}, {hi:.4g}]")
    mask = traj.window(lo, hi)
    if not mask.any():
        raise WindowError("no samples inside the window")
    return mask


def windowed_correlator(traj: LangevinTrajectory, schedule: MeasurementSchedule,
                        points: Sequence[Point | str]) -> WindowedEstimate:
    """Time average of the product of recorded values over the readout window.

    The discretised form of ``(1/Delta) int phi(p1, t') phi(p2, t') dt'``
    with the mean over samples standing in for the integral.  ``points``
    may hold one or more recorded :class:`Point` (or observable names).
    """
    keys = [p.key if isinstance(p, Point) else str(p) for p in points]
    if not keys:
        raise ValueError("need at least one point")
    lo, hi = schedule.window_bounds
    mask = _window_mask(traj, lo, hi)
    prod = np.ones_like(traj.series(keys[0])[mask])
    for k in keys:
        prod = prod * traj.series(k)[mask]
    return WindowedEstimate("*".join(keys), (lo, hi), int(mask.sum()), prod.mean(axis=0))


def ensemble_mode_estimate(traj: LangevinTrajectory, points: Sequence[Point | str], t: float):
    """Standard ensemble average: product at one Langevin time, averaged over replicas.

    Returns ``(mean, error)`` with the error over independent replicas.
    """
    keys = [p.key if isinstance(p, Point) else str(p) for p in points]
    i = int(np.argmin(np.abs(traj.times - t)))
    prod = np.ones(len(traj.replica_ids))
    for k in keys:
        prod = prod * traj.series(k)[i]
    prod = np.real(prod)
    return float(prod.mean()), float(prod.std(ddof=1) / np.sqrt(len(prod)))


# -- post-probability statistics ---------------------------------------------

@dataclass
class PointerOutcome:
    replica: int
    outcome: int
    settled: bool
    final: float
    transcript: np.ndarray | None = None


@dataclass
class DistributionSummary:
    kind: str
    n: int
    counts: dict
    p_plus: float | None = None
    p_plus_error: float | None = None
    mean: float | None = None
    error: float | None = None
    histogram: dict | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _probabilities(results) -> tuple[str, np.ndarray]:
    items = list(results) if not isinstance(results, np.ndarray) else results
    if isinstance(items, np.ndarray):
        arr = items
    elif items and isinstance(items[0], PointerOutcome):
        return "outcome", np.array([r.outcome for r in items], dtype=int)
    elif items and isinstance(items[0], WindowedEstimate):
        arr = np.concatenate([np.atleast_1d(r.probability) for r in items])
    else:
        arr = np.asarray(items)
    if arr.size == 0:
        raise ValueError("no runs to summarise")
    if np.iscomplexobj(arr):
        raise TypeError("ensemble averaging takes probabilities, not amplitudes; "
                        "form |amplitude|^2 per run first")
    if arr.dtype.kind in "iu":
        if not np.all(np.isin(arr, (-1, 0, 1))):
            raise ValueError("integer outcomes must be +1, -1 (0 for unresolved)")
        return "outcome", arr.astype(int)
    arr = arr.astype(float)
    if np.any(arr < 0):
        raise ValueError("probability quantities must be non-negative")
    return "probability", arr


def ensemble_probability(results, bins: int = 20) -> DistributionSummary:
    """Empirical distribution of per-run probability quantities.

    Accepts discrete pointer outcomes (+1/-1, 0 = unresolved) or
    non-negative probabilities such as squared windowed amplitudes.  Complex
    input is rejected so amplitudes are never averaged across runs.
    """
    kind, arr = _probabilities(results)
    if arr.size == 0:
        raise ValueError("no runs to summarise")
    if kind == "outcome":
        plus, minus = int(np.sum(arr == 1)), int(np.sum(arr == -1))
        resolved = plus + minus
        counts = {"+1": plus, "-1": minus, "unresolved": int(np.sum(arr == 0))}
        if resolved == 0:
            return DistributionSummary(kind, int(arr.size), counts)
        p = plus / resolved
        return DistributionSummary(kind, int(arr.size), counts, p, float(np.sqrt(p * (1 - p) / resolved)))
    mean, err = (float(arr[0]), float("nan")) if arr.size < 2 else map(float, jackknife(arr))
    edges = np.histogram_bin_edges(arr, bins=bins)
    hist, _ = np.histogram(arr, bins=edges)
    return DistributionSummary(kind, int(arr.size), {"runs": int(arr.size)}, mean=mean, error=err,
                               histogram={"edges": edges.tolist(), "counts": hist.tolist()})


# -- pointer device --------------------------------------------------------------

class UnresolvedMeasurement(RuntimeError):
    def __init__(self, outcome: PointerOutcome):
        super().__init__(f"pointer did not settle: |M| = {abs(outcome.final):.3g}")
        self.outcome = outcome


@dataclass(frozen=True)
class PointerDevice:
    """Collective coordinate ``M`` of ``N`` strongly coupled degrees of freedom.

    Total potential ``N g(t') (M^2 - v^2)^2 - kappa M O(t')``; ``g`` ramps
    linearly from 0 to ``depth`` between ``ramp_start`` and ``ramp_end``.
    ``M`` follows ``dM = -(1/N) dU/dM dt' + sqrt(2 hbar dt'/N) xi`` so the
    barrier between the phases grows linearly with ``N``.
    """

    separation: float = 1.0
    coupling: float = 0.0
    n_dof: float = 1.0
    depth: float = 1.0
    ramp_start: float = 0.0
    ramp_end: float = 1.0
    hbar: float = 1.0
    ramp_coupling: bool = False

    def __post_init__(self):
        if not self.separation > 0:
            raise ValueError("well separation must be positive")
        if self.n_dof < 1:
            raise ValueError("n_dof must be >= 1")
        if self.ramp_end < self.ramp_start or self.depth < 0:
            raise ValueError("ramp must be monotone non-decreasing")

    def knob(self, t):
        span = self.ramp_end - self.ramp_start
        if span == 0:
            return self.depth * (np.asarray(t) >= self.ramp_start)
        return self.depth * np.clip((np.asarray(t) - self.ramp_start) / span, 0.0, 1.0)

    @property
    def barrier(self) -> float:
        """Barrier height of the fully ramped device, ``N g v^4``."""
        return self.n_dof * self.depth * self.separation ** 4

    def drift(self, M, t, system_value):
        g = self.knob(t)
        v = self.separation
        k = self.coupling * (g / self.depth if self.ramp_coupling and self.depth else 1.0)
        return -4.0 * g * M * (M * M - v * v) + k * system_value / self.n_dof


def _system_values(system, times, n_rep):
    if callable(system):
        return np.broadcast_to(np.asarray([system(t) for t in times], dtype=float)[:, None],
                               (len(times), n_rep))
    arr = np.asarray(system, dtype=float)
    if arr.ndim == 0:
        return np.broadcast_to(arr, (len(times), n_rep))
    if arr.ndim == 1:
        if len(arr) < len(times):
            raise ValueError("system series shorter than the pointer run")
        return np.broadcast_to(arr[: len(times), None], (len(times), n_rep))
    if arr.shape[0] < len(times) or arr.shape[1] != n_rep:
        raise ValueError("system series must be (steps, replicas)")
    return arr[: len(times)]


def pointer_ensemble(system, device: PointerDevice, *, langevin_step: float, termination: float,
                     replica_ids: Sequence[int] = (0,), master_seed: int = 0, start: float = 0.0,
                     initial: float = 0.0, record_every: int = 1, purpose: str = "pointer"):
    """Evolve one pointer per replica; returns ``(times, M)`` with ``M`` of shape
    ``(records, replicas)``.

    ``system`` is a constant, a callable of ``t'``, a per-step series, or a
    ``(steps, replicas)`` array sampled at the step start times.
    """
    n_rep = len(replica_ids)
    dt = langevin_step
    n_steps = int(round((termination - start) / dt))
    t_start = start + dt * np.arange(n_steps)
    sysv = _system_values(system, t_start, n_rep)
    M = np.full(n_rep, float(initial))
    amp = np.sqrt(2 * device.hbar * dt / device.n_dof)
    times, rec = [], []
    noise = None
    for i in range(n_steps):
        b, row = divmod(i, BLOCK_STEPS)
        if row == 0:
            noise = np.stack([counter_generator(master_seed, r, purpose, b).standard_normal(BLOCK_STEPS)
                              for r in replica_ids], axis=1)
        M = M + dt * device.drift(M, t_start[i], sysv[i]) + amp * noise[row]
        if (i + 1) % record_every == 0:
            times.append(t_start[i] + dt)
            rec.append(M.copy())
    return np.array(times), np.array(rec)


def pointer_measurement(system, device: PointerDevice, *, langevin_step: float, termination: float,
                        replica: int = 0, master_seed: int = 0, start: float = 0.0,
                        raise_unresolved: bool = True) -> PointerOutcome:
    """Single-replica measurement: ramp the knob, read ``sign(M)``.

    Raises :class:`UnresolvedMeasurement` if ``|M| < v/2`` at termination.
    """
    if termination < device.ramp_end:
        raise ValueError("run must last until the ramp completes")
    times, M = pointer_ensemble(system, device, langevin_step=langevin_step, termination=termination,
                                replica_ids=(replica,), master_seed=master_seed, start=start)
    final = float(M[-1, 0])
    settled = abs(final) >= 0.5 * device.separation
    out = PointerOutcome(replica, int(np.sign(final)) if settled else 0, settled, final,
                         np.column_stack([times, M[:, 0]]))
    if not settled and raise_unresolved:
        raise UnresolvedMeasurement(out)
    return out


def pointer_outcomes(system, device: PointerDevice, replica_ids: Sequence[int], *, langevin_step: float,
                     termination: float, master_seed: int = 0, start: float = 0.0) -> list[PointerOutcome]:
    """Batched :func:`pointer_measurement`; unresolved runs get outcome 0."""
    times, M = pointer_ensemble(system, device, langevin_step=langevin_step, termination=termination,
                                replica_ids=replica_ids, master_seed=master_seed, start=start)
    out = []
    for j, r in enumerate(replica_ids):
        final = float(M[-1, j])
        settled = abs(final) >= 0.5 * device.separation
        out.append(PointerOutcome(int(r), int(np.sign(final)) if settled else 0, settled, final,
                                  np.column_stack([times, M[:, j]])))
    return out


def post_ramp_flips(outcome: PointerOutcome, device: PointerDevice) -> int:
    """Sign flips of ``M`` (hysteresis at ``v/2``) after the ramp completes."""
    tr = outcome.transcript
    after = tr[tr[:, 0] >= device.ramp_end, 1]
    return count_flips(after, 0.5 * device.separation)


def first_flip_times(device: PointerDevice, replica_ids: Sequence[int], *, langevin_step: float,
                     max_time: float, master_seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Time for a settled pointer (starting at ``+v``, knob fully on) to reach ``-v/2``.

    Returns ``(times, censored)``; censored runs report ``max_time``.
    """
    dev = PointerDevice(device.separation, 0.0, device.n_dof, device.depth, 0.0, 0.0, device.hbar)
    t, M = pointer_ensemble(0.0, dev, langevin_step=langevin_step, termination=max_time,
                            replica_ids=replica_ids, master_seed=master_seed,
                            initial=device.separation, purpose="pointer-flip")
    out = np.full(len(replica_ids), float(max_time))
    cens = np.ones(len(replica_ids), dtype=bool)
    for j in range(len(replica_ids)):
        hit = np.flatnonzero(M[:, j] <= -0.5 * device.separation)
        if hit.size:
            out[j] = t[hit[0]]
            cens[j] = False
    return out, cens


# -- window sweep ----------------------------------------------------------------

@dataclass
class SweepRow:
    delta_over_deltafluct: float
    windowed: float
    ensemble_ref: float
    diff: float
    err: float
    run_variance: float
    n_samples: int


def deviation_sweep(traj: LangevinTrajectory, schedule: MeasurementSchedule, windows: Iterable[float],
                    delta_fluct: float, reference: tuple[float, float],
                    points: Sequence[Point | str]) -> list[SweepRow]:
    """Windowed estimates for nested windows around ``t2`` against a reference.

    ``reference`` is ``(value, error)`` of the ensemble-mode estimate.  Each
    row holds the replica mean of the windowed estimate, its difference to
    the reference with the combined error, and the run-to-run variance.
    """
    ref, ref_err = reference
    rows = []
    for w in windows:
        est = windowed_correlator(traj, schedule.with_window(w), points)
        vals = np.real(est.values)
        n = len(vals)
        mean = float(vals.mean())
        var = float(vals.var(ddof=1)) if n > 1 else float("nan")
        err = float(np.sqrt(var / n + ref_err ** 2)) if n > 1 else float("nan")
        rows.append(SweepRow(w / delta_fluct, mean, ref, mean - ref, err, var, est.n_samples))
    return rows
