"""Euler-Maruyama integration of the field / worldline Langevin equation.

One step updates every stored, unpinned site from the pre-step snapshot::

    value <- value + dt * drift + dt * eta,   var(eta) = 2 hbar / (a^n a_t dt)

In two-time mode the present grows by one slice after every
``steps_per_coordinate_tick`` steps, which keeps ``present * a_t`` equal to
the Langevin clock.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .dynamics import ActionSpec, drift_array
from .lattice import LangevinState, SliceInitPolicy, grow_present, load_state, save_state
from .noise import NoiseCache, NoiseSpec, counter_generator
from .statistics import SeriesStatistics, SeriesTooShort, autocorrelation_time

log = logging.getLogger(__name__)


class RunawayError(RuntimeError):
    """Drift exceeded the safeguard; typical complex-Langevin instability."""

    def __init__(self, step: int, norm: float, replica_ids=()):
        super().__init__(f"runaway at step {step}: drift norm {norm:.3e}")
        self.step = step
        self.norm = norm
        self.replica_ids = tuple(replica_ids)


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class EngineParams:
    langevin_step: float
    steps_per_coordinate_tick: int | None = None
    burn_in_steps: int = 0
    max_drift_norm: float = math.inf
    adaptive: bool = False
    max_halvings: int = 10

    def __post_init__(self):
        if not self.langevin_step > 0:
            raise ValueError("langevin_step must be positive")
        spt = self.steps_per_coordinate_tick
        if spt is not None and (int(spt) != spt or spt < 1):
            raise ValueError("steps_per_coordinate_tick must be a positive integer")
        if self.burn_in_steps < 0:
            raise ValueError("burn_in_steps must be >= 0")

    @classmethod
    def for_tick(cls, time_spacing: float, steps_per_tick: int, **kw) -> "EngineParams":
        """Step size chosen so that ``steps_per_tick`` steps span one slice."""
        return cls(langevin_step=time_spacing / steps_per_tick,
                   steps_per_coordinate_tick=int(steps_per_tick), **kw)

    def check_tick(self, time_spacing: float):
        spt = self.steps_per_coordinate_tick
        if spt is None:
            raise ScheduleError("two-time runs need steps_per_coordinate_tick")
        if not math.isclose(spt * self.langevin_step, time_spacing, rel_tol=1e-9):
            raise ScheduleError(
                f"steps_per_coordinate_tick * langevin_step = {spt * self.langevin_step} "
                f"must equal time_spacing = {time_spacing}")


@dataclass(frozen=True)
class Point:
    """A stored site, either absolute or a lag behind the present."""

    slice: int
    site: tuple[int, ...] = ()
    relative: bool = False

    def resolve(self, present: int) -> int:
        return present - self.slice if self.relative else self.slice

    @property
    def key(self) -> str:
        t = f"present-{self.slice}" if self.relative else f"t{self.slice}"
        return t if not self.site else t + "@" + ",".join(map(str, self.site))


Observable = Callable[[LangevinState], np.ndarray]


def point_value(point: Point) -> Observable:
    def obs(state: LangevinState):
        t = point.resolve(state.present_index)
        if not 0 <= t <= state.present_index:
            raise IndexError(f"{point.key} is not a stored slice")
        return state.values[(slice(None), t) + tuple(point.site)].copy()
    return obs


def magnetization(state: LangevinState) -> np.ndarray:
    """Mean stored value per replica."""
    axes = tuple(range(1, state.values.ndim))
    return state.stored.mean(axis=axes)


@dataclass
class LangevinTrajectory:
    """Recorded observable series, ``samples[name]`` has shape ``(n, replicas)``."""

    times: np.ndarray
    present: np.ndarray
    samples: dict[str, np.ndarray]
    replica_ids: tuple[int, ...]
    langevin_step: float
    events: list[dict] = field(default_factory=list)

    def series(self, name: str) -> np.ndarray:
        try:
            return self.samples[name]
        except KeyError:
            raise KeyError(f"observable {name!r} was not recorded") from None

    def window(self, lo: float, hi: float) -> np.ndarray:
        eps = 1e-9 * max(1.0, abs(hi))
        return (self.times >= lo - eps) & (self.times <= hi + eps)

    def records(self):
        """Tabular transcript rows ``(replica, t', observable, value)``."""
        for name in sorted(self.samples):
            data = self.samples[name]
            for j, rep in enumerate(self.replica_ids):
                for t, v in zip(self.times, data[:, j]):
                    yield rep, float(t), name, v


class _Recorder:
    def __init__(self, observables: Mapping[str, Observable]):
        self.observables = dict(observables)
        self.times, self.present = [], []
        self.data = {k: [] for k in self.observables}

    def __call__(self, state: LangevinState):
        self.times.append(state.langevin_clock)
        self.present.append(state.present_index)
        for k, f in self.observables.items():
            self.data[k].append(np.asarray(f(state)))

    def trajectory(self, state, dt, events=()):
        samples = {}
        for k, v in self.data.items():
            samples[k] = np.array(v) if v else np.empty((0, state.n_replicas))
        return LangevinTrajectory(np.array(self.times, dtype=float), np.array(self.present, dtype=int),
                                  samples, state.replica_ids, dt, list(events))


class LangevinEngine:
    """Stateful driver bound to one (possibly batched) state.

    Keeps the current noise block cached; the draws are identical to
    :func:`twotime.noise.sample_noise` for the same step and replica.
    """

    def __init__(self, state: LangevinState, action: ActionSpec, spec: NoiseSpec,
                 params: EngineParams, policy: SliceInitPolicy | None = None):
        if not math.isclose(spec.langevin_step, params.langevin_step, rel_tol=1e-12):
            raise ValueError("noise spec and engine params disagree on langevin_step")
        self.state = state
        self.action = action
        self.spec = spec
        self.params = params
        self.policy = policy or SliceInitPolicy.default_for(state.geometry, params.langevin_step, spec.hbar)
        self.noise = NoiseCache(state.geometry.shape, spec, state.replica_ids)
        self.events: list[dict] = []

    def _drift(self):
        st = self.state
        d = drift_array(st.values, st.geometry, self.action, st.present_index)
        return d, float(np.max(np.abs(d)))

    def step(self) -> LangevinState:
        st = self.state
        p = st.present_index
        dt = self.params.langevin_step
        d, norm = self._drift()
        if not np.isfinite(norm) or norm > self.params.max_drift_norm:
            if not self.params.adaptive:
                self._runaway(norm)
            self._adaptive_step(norm)
        else:
            inc = dt * (d[:, : p + 1] + self.spec.std * self.noise.unit(st.step)[:, : p + 1])
            self._apply(inc)
        st.langevin_clock += dt
        st.step += 1
        return st

    def _apply(self, inc):
        st = self.state
        p = st.present_index
        pins = st.pinned[: p + 1]
        if pins.any():
            inc = np.where(pins, 0, inc)
        st.values[:, : p + 1] += inc

    def _runaway(self, norm):
        st = self.state
        ev = {"step": st.step, "drift_norm": norm, "replicas": list(st.replica_ids)}
        self.events.append(ev)
        log.warning("runaway at step %d, drift norm %.3e, replicas %s", st.step, norm, st.replica_ids)
        raise RunawayError(st.step, norm, st.replica_ids)

    def _adaptive_step(self, norm):
        st = self.state
        dt = self.params.langevin_step
        p = st.present_index
        limit = self.params.max_drift_norm
        if not np.isfinite(norm):
            self._runaway(norm)
        # halve until the per-substep displacement matches what the
        # threshold allows for a full step
        k = max(1, math.ceil(math.log2(norm / limit)))
        if k > self.params.max_halvings:
            self._runaway(norm)
        n_sub = 2 ** k
        h = dt / n_sub
        log.info("adaptive step %d: %d substeps (drift norm %.3e)", st.step, n_sub, norm)
        std_sub = self.spec.std * np.sqrt(n_sub)  # var of eta scales as 1/h
        gens = [counter_generator(self.spec.master_seed, r, "adaptive", st.step) for r in st.replica_ids]
        shape = st.geometry.shape
        draws = np.stack([g.standard_normal((n_sub,) + shape) for g in gens], axis=1)
        for j in range(n_sub):
            d, sub_norm = self._drift()
            if not np.isfinite(sub_norm) or sub_norm > limit * 2 ** self.params.max_halvings:
                self._runaway(sub_norm)
            self._apply(h * (d[:, : p + 1] + std_sub * draws[j][:, : p + 1]))

    def grow(self):
        st = self.state
        gens = [counter_generator(self.spec.master_seed, r, "grow", st.grow_count) for r in st.replica_ids]
        grow_present(st, self.policy, gens)

    def maybe_grow(self):
        st = self.state
        at = st.geometry.time_spacing
        if st.two_time and st.langevin_clock >= (st.present_index + 1) * at - 0.5 * self.params.langevin_step:
            self.grow()

    def advance(self, n_steps: int, recorder=None, record_every: int = 1):
        for _ in range(int(n_steps)):
            self.step()
            self.maybe_grow()
            if recorder is not None and self.state.step % record_every == 0:
                recorder(self.state)
        return self.state

    def checkpoint(self, path):
        save_state(path, self.state, extra={
            "action": self.action.to_dict(),
            "noise": self.spec.to_dict(),
            "engine": asdict(self.params),
            "rng_counters": {"langevin_step_index": self.state.step, "grow_count": self.state.grow_count},
        })


def restore_engine(path, action: ActionSpec, policy: SliceInitPolicy | None = None) -> LangevinEngine:
    """Rebuild an engine from :meth:`LangevinEngine.checkpoint`; the RNG
    counters are the saved step and growth counts."""
    state, extra = load_state(path)
    nd = extra["noise"]
    spec = NoiseSpec(nd["hbar"], nd["langevin_step"], nd["variance"], nd["master_seed"], tuple(nd["stream"]))
    ep = dict(extra["engine"])
    params = EngineParams(**ep)
    return LangevinEngine(state, action, spec, params, policy)


def langevin_step(state: LangevinState, action: ActionSpec, spec: NoiseSpec,
                  params: EngineParams) -> LangevinState:
    """Single Euler-Maruyama step.  Mutates and returns ``state``."""
    return LangevinEngine(state, action, spec, params).step()


@dataclass
class BurnInReport:
    steps: int
    probe: SeriesStatistics | None
    probe_series: np.ndarray


def run_burn_in(state: LangevinState, action: ActionSpec, spec: NoiseSpec, params: EngineParams,
                probe: Observable | None = magnetization, engine: LangevinEngine | None = None,
                policy: SliceInitPolicy | None = None) -> tuple[LangevinState, BurnInReport]:
    """Discard ``params.burn_in_steps`` steps, tracking a probe observable.

    The probe's integrated autocorrelation time is reported when the
    burn-in is long enough to estimate it, otherwise ``probe`` is ``None``.
    """
    eng = engine or LangevinEngine(state, action, spec, params, policy)
    series = []
    rec = (lambda s: series.append(np.real(probe(s)))) if probe is not None else None
    eng.advance(params.burn_in_steps, rec)
    arr = np.array(series) if series else np.empty((0, state.n_replicas))
    stats = None
    if len(arr) >= 8:
        try:
            stats = autocorrelation_time(arr, params.langevin_step, min_ratio=0)
        except (SeriesTooShort, ValueError):
            stats = None
    return state, BurnInReport(params.burn_in_steps, stats, arr)


def run_two_time(state: LangevinState, action: ActionSpec, spec: NoiseSpec, params: EngineParams,
                 schedule, *, points: Sequence[Point] = (), observables: Mapping[str, Observable] | None = None,
                 policy: SliceInitPolicy | None = None, pin: bool = True, pin_sites=None,
                 record_all: bool = False, engine: LangevinEngine | None = None) -> LangevinTrajectory:
    """Run from the current clock to ``schedule.termination``.

    With ``state.two_time`` the present advances one slice per tick.  At
    ``t' = t1`` the slice at coordinate time ``t1`` is pinned (if ``pin``).
    Observables and point values are recorded every ``schedule.cadence``
    steps inside the readout window (or throughout with ``record_all``).
    """
    geo = state.geometry
    dt = params.langevin_step
    if state.two_time:
        params.check_tick(geo.time_spacing)
        last = int(round(schedule.termination / geo.time_spacing))
        if last >= geo.time_extent:
            raise ScheduleError(f"schedule ends at slice {last} beyond time_extent {geo.time_extent}")
        if state.langevin_clock > schedule.t1 + 1e-12 and pin:
            raise ScheduleError("state clock is already past the preparation time")
    n_steps = int(round((schedule.termination - state.langevin_clock) / dt))
    if n_steps < 0:
        raise ScheduleError("state clock is past the schedule termination")
    obs = {p.key: point_value(p) for p in points}
    obs.update(observables or {})
    rec = _Recorder(obs)
    eng = engine or LangevinEngine(state, action, spec, params, policy)
    lo, hi = schedule.window_bounds
    pin_slice = int(round(schedule.t1 / geo.time_spacing))
    pinned = not pin
    tol = 0.5 * dt
    for _ in range(n_steps):
        if not pinned and state.langevin_clock >= schedule.t1 - tol:
            if pin_slice > state.present_index:
                raise ScheduleError("preparation slice does not exist yet")
            state.pin_slice(pin_slice, pin_sites)
            pinned = True
        eng.step()
        eng.maybe_grow()
        t = state.langevin_clock
        if state.step % schedule.cadence == 0 and (record_all or lo - tol <= t <= hi + tol):
            rec(state)
    return rec.trajectory(state, dt, eng.events)


def save_trajectory(path, traj: LangevinTrajectory):
    doc = {"times": traj.times.tolist(), "present": traj.present.tolist(),
           "replica_ids": list(traj.replica_ids), "langevin_step": traj.langevin_step,
           "samples": {k: [np.real(v).tolist(), np.imag(v).tolist()] for k, v in traj.samples.items()}}
    Path(path).write_text(json.dumps(doc))
