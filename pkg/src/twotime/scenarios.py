"""Scenario catalog.

A scenario bundles default parameters, a chunk runner that evolves a set of
replica ids, and an aggregator that folds chunk results (in replica order)
into tables and oracle checks.  Chunk results are plain JSON so they can be
checkpointed and resumed.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .config import ConfigError, Param, RunConfig, non_negative, positive
from .dynamics import ActionSpec, Potential, compute_v, nelson_sample, solve_w
from .engine import EngineParams, LangevinEngine, Point, magnetization, run_two_time
from .lattice import Boundary, LatticeGeometry, new_state
from .measurement import (MeasurementSchedule, PointerDevice, ensemble_probability, pointer_outcomes,
                          post_ramp_flips, windowed_correlator)
from .noise import BLOCK_STEPS, NoiseSpec, counter_generator, noise_block
from .oracles import free_field_propagator_exact, ho_correlator_exact, ou_stationary
from .statistics import (FlipTimeResult, SeriesTooShort, autocorrelation_time, fit_log_slope, flip_time,
                         jackknife, pooled_flip_time)


@dataclass
class Check:
    """One oracle comparison.

    ``kind`` is ``"sigma"`` (``|measured - expected| <= max(tol * error, floor)``),
    ``"min"`` (``measured - tol * error >= expected``), ``"above"`` (strict),
    ``"max"`` (``measured + tol * error <= expected``) or ``"exploratory"``.
    """

    quantity: str
    measured: float
    error: float
    expected: float
    tolerance_sigma: float = 3.0
    abs_floor: float = 0.0
    kind: str = "sigma"

    @property
    def delta_sigma(self) -> float:
        d = self.measured - self.expected
        if self.error > 0 and math.isfinite(self.error):
            return d / self.error
        if self.kind != "sigma":
            return math.nan
        return 0.0 if d == 0 else math.copysign(math.inf, d)

    @property
    def passed(self) -> bool | None:
        m, e, x, tol = self.measured, self.error, self.expected, self.tolerance_sigma
        err = e if math.isfinite(e) else math.inf
        if not math.isfinite(m):
            return False if self.kind != "exploratory" else None
        if self.kind == "sigma":
            return bool(abs(m - x) <= max(tol * err, self.abs_floor))
        if self.kind == "min":
            return bool(m - tol * err >= x)
        if self.kind == "above":
            return bool(m - tol * err > x)
        if self.kind == "max":
            return bool(m + tol * err <= x)
        return None

    def row(self):
        p = self.passed
        return [self.quantity, float(self.measured), float(self.error), float(self.expected),
                float(self.delta_sigma), self.kind, float(self.tolerance_sigma), float(self.abs_floor),
                "exploratory" if p is None else ("pass" if p else "fail")]

    def to_dict(self):
        d = asdict(self)
        d["delta_sigma"] = self.delta_sigma
        d["passed"] = self.passed
        return d


CHECK_COLUMNS = ["quantity", "measured", "error", "expected", "delta_sigma", "kind", "tolerance_sigma",
                 "abs_floor", "verdict"]


@dataclass
class Aggregate:
    tables: dict[str, tuple[list[str], list[list]]]
    checks: list[Check]
    summary: dict = field(default_factory=dict)
    replicas: tuple[list[str], list[list]] | None = None
    json_files: dict[str, dict] = field(default_factory=dict)


@dataclass
class Scenario:
    name: str
    description: str
    oracle: str
    tolerance: str
    statistic: str
    params: list[Param]
    run_chunk: Callable[[RunConfig, list[int], dict], dict]
    aggregate: Callable[[RunConfig, list[dict], dict], Aggregate]
    default_replicas: int = 16
    default_batch: int = 16
    prepare: Callable[[RunConfig], dict] | None = None
    check_config: Callable[[RunConfig], None] | None = None

    def validate(self, cfg: RunConfig):
        if self.check_config is not None:
            self.check_config(cfg)

    def is_exploratory(self, cfg: RunConfig) -> bool:
        return cfg.params.get("mode", "euclidean") == "minkowski"

    def defaults(self) -> dict:
        return {p.name: p.default for p in self.params}


def _cat(chunks, key):
    out = []
    for c in chunks:
        out.extend(c[key])
    return out


def _mean_err(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.shape[0] < 2:
        return float(v.mean(axis=0)), math.nan
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.shape[0]))


def _mode_param():
    return Param("mode", str, "euclidean", lambda s: s in ("euclidean", "minkowski"),
                 "must be 'euclidean' or 'minkowski'", "action signature")


def _check_damping(cfg):
    if cfg["mode"] == "minkowski" and not cfg["damping"] > 0:
        raise ConfigError("damping must be positive in minkowski mode")


def _langevin_step_param(default):
    return Param("langevin_step", float, default, positive, "must be positive", "Langevin step dt'")


# -- ou_check ----------------------------------------------------------------

def _ou_chunk(cfg, ids, ctx):
    geo = LatticeGeometry(1, 1, 1.0, 1, 1.0)
    act = ActionSpec("scalar_field", "euclidean", mass=cfg["mass"])
    dt = cfg["langevin_step"]
    st = new_state(geo, "euclidean", replicas=ids)
    spec = NoiseSpec.for_geometry(geo, dt, cfg["hbar"], cfg.seed)
    eng = LangevinEngine(st, act, spec, EngineParams(dt))
    eng.advance(cfg["burn_in_steps"])
    rec = []
    eng.advance(cfg["steps"], lambda s: rec.append(s.values[:, 0, 0].copy()), cfg["record_every"])
    x = np.array(rec)
    deltas = []
    for j in range(len(ids)):
        try:
            deltas.append(autocorrelation_time(x[:, j] ** 2, dt * cfg["record_every"], min_ratio=0).delta)
        except (SeriesTooShort, ValueError):
            deltas.append(math.nan)
    return {"replicas": list(ids), "mean": x.mean(axis=0).tolist(),
            "mean_sq": (x ** 2).mean(axis=0).tolist(), "delta": deltas}


def _ou_aggregate(cfg, chunks, ctx):
    ids, msq, mean, dl = _cat(chunks, "replicas"), _cat(chunks, "mean_sq"), _cat(chunks, "mean"), _cat(chunks, "delta")
    k = cfg["mass"] ** 2
    oracle = ou_stationary(k, cfg["hbar"])
    var, var_err = _mean_err(msq)
    checks = [Check("stationary_variance", var, var_err, oracle.variance, 3.0)]
    # moments of the discretised noise actually fed to replica 0
    n_draws = cfg["noise_draws"]
    if n_draws:
        geo = LatticeGeometry(1, 1, 1.0, 1, 1.0)
        spec = NoiseSpec.for_geometry(geo, cfg["langevin_step"], cfg["hbar"], cfg.seed)
        blocks = -(-n_draws // BLOCK_STEPS)
        z = np.concatenate([noise_block(geo.shape, spec, b, ids[0]).ravel() for b in range(blocks)])[:n_draws]
        eta = spec.std * z
        m2, m4 = float(np.mean(eta ** 2)), float(np.mean(eta ** 4))
        checks += [
            Check("noise_variance_rel_dev", abs(m2 / spec.variance - 1), 0.0, 0.01, 0.0, kind="max"),
            Check("noise_fourth_moment_rel_dev", abs(m4 / (3 * spec.variance ** 2) - 1), 0.0, 0.01, 0.0, kind="max"),
            Check("noise_mean_over_std", abs(float(eta.mean()) / spec.std), 0.0, 0.01, 0.0, kind="max"),
        ]
    rows = [[r, m, s, d] for r, m, s, d in zip(ids, mean, msq, dl)]
    dfin = [d for d in dl if math.isfinite(d)]
    table = (["quantity", "value", "error", "exact", "euler_exact"],
             [["variance", var, var_err, oracle.variance, oracle.euler_variance(cfg["langevin_step"])]])
    return Aggregate({"ou.csv": table}, checks,
                     {"delta": float(np.mean(dfin)) if dfin else math.nan, "replicas": len(ids)},
                     (["replica", "mean_phi", "mean_phi_sq", "delta"], rows))


OU_CHECK = Scenario(
    "ou_check",
    "Single-site Gaussian model: stationary variance and noise law",
    "OU stationary law: variance hbar/m^2; noise variance 2 hbar/(a^n a_t dt')",
    "3 sigma on the variance; 1% on noise moments",
    "replica mean of time-averaged phi^2, error from replica scatter",
    [Param("mass", float, 1.0, positive, "must be positive"),
     Param("hbar", float, 1.0, positive, "must be positive"),
     _langevin_step_param(0.01),
     Param("burn_in_steps", int, 2000, non_negative, "must be >= 0"),
     Param("steps", int, 200_000, positive, "must be positive"),
     Param("record_every", int, 10, positive, "must be positive"),
     Param("noise_draws", int, 1_000_000, non_negative, "must be >= 0")],
    _ou_chunk, _ou_aggregate, default_replicas=16, default_batch=16,
)


# -- free_field ----------------------------------------------------------------

def _ff_geometry(cfg):
    return LatticeGeometry(1, cfg["spatial_extent"], 1.0, cfg["time_extent"], 1.0, Boundary.PERIODIC)


def _ff_chunk(cfg, ids, ctx):
    geo = _ff_geometry(cfg)
    mode = cfg["mode"]
    act = ActionSpec("scalar_field", mode, mass=cfg["mass"], damping=cfg["damping"])
    dt = cfg["langevin_step"]
    st = new_state(geo, mode, replicas=ids)
    spec = NoiseSpec.for_geometry(geo, dt, cfg["hbar"], cfg.seed)
    eng = LangevinEngine(st, act, spec, EngineParams(dt))
    eng.advance(int(round(cfg["burn_in_time"] / dt)))
    acc = np.zeros((len(ids),) + geo.shape)
    n = 0

    def rec(s):
        nonlocal n
        ft = np.fft.fftn(s.values, axes=tuple(range(1, s.values.ndim)), norm="ortho")
        acc[...] += np.abs(ft) ** 2
        n += 1

    eng.advance(cfg["steps"], rec, cfg["record_every"])
    g = acc / n * geo.cell_volume / cfg["hbar"]
    return {"replicas": list(ids), "G": g.reshape(len(ids), -1).tolist()}


def _ff_aggregate(cfg, chunks, ctx):
    geo = _ff_geometry(cfg)
    ids = _cat(chunks, "replicas")
    G = np.array(_cat(chunks, "G"))
    mom, exact = free_field_propagator_exact(geo, cfg["mass"])
    exact = exact.ravel()
    mean = G.mean(axis=0)
    err = np.array([jackknife(G[:, i])[1] for i in range(G.shape[1])])
    exploratory = cfg["mode"] == "minkowski"
    kind = "exploratory" if exploratory else "sigma"
    checks = [Check(f"G[{','.join(str(int(round(q / (2 * np.pi / e)))) for q, e in zip(p, geo.shape))}]",
                    float(m), float(e), float(x), 3.0, kind=kind)
              for p, m, e, x in zip(mom, mean, err, exact)]
    cols = ["p_t", "p_x", "measured", "error", "exact"]
    rows = [[float(p[0]), float(p[1]), float(m), float(e), float(x)] for p, m, e, x in zip(mom, mean, err, exact)]
    zero = checks[0]
    summary = {"zero_mode": zero.measured, "zero_mode_error": zero.error, "max_abs_delta_sigma":
               float(max(abs(c.delta_sigma) for c in checks))}
    reps = (["replica", "G_zero_mode"], [[r, float(g[0])] for r, g in zip(ids, G)])
    return Aggregate({"propagator.csv": (cols, rows)}, checks, summary, reps)


FREE_FIELD = Scenario(
    "free_field",
    "Free scalar field on a periodic 1+1-d lattice, standard (non-growing) mode",
    "exact lattice propagator 1/(p_hat^2 + m^2)",
    "3 sigma (jackknife over replicas) at every momentum",
    "replica mean of time-averaged |phi(p)|^2",
    [Param("spatial_extent", int, 8, positive, "must be positive"),
     Param("time_extent", int, 8, positive, "must be positive"),
     Param("mass", float, 1.0, positive, "must be positive"),
     Param("hbar", float, 1.0, positive, "must be positive"),
     _langevin_step_param(0.001),
     Param("burn_in_time", float, 10.0, non_negative, "must be >= 0"),
     Param("steps", int, 60_000, positive, "must be positive"),
     Param("record_every", int, 50, positive, "must be positive"),
     _mode_param(),
     Param("damping", float, 0.0, non_negative, "must be >= 0")],
    _ff_chunk, _ff_aggregate, default_replicas=32, default_batch=32, check_config=_check_damping,
)


# -- ho_ground_state ---------------------------------------------------------------

def _ho_points(a, cfg):
    tick = int(round(1 / a))
    lag0 = int(round(cfg["lag"] / a))
    bases = [lag0 + int(round(max(cfg["taus"]) / a)) + k * tick for k in range(cfg["n_bases"])]
    pairs = {}
    for tau in cfg["taus"]:
        pairs[tau] = [(Point(b, relative=True), Point(b - int(round(tau / a)), relative=True)) for b in bases]
    pts = sorted({p for v in pairs.values() for pair in v for p in pair}, key=lambda p: p.slice)
    return pts, pairs


def _ho_schedule(cfg):
    t1 = cfg["t1"]
    t2 = t1 + cfg["gap"] + 0.5 * cfg["window"]
    return t1, t2


def _ho_chunk(cfg, ids, ctx):
    mode = cfg["mode"]
    act = ActionSpec("worldline", mode, mass=cfg["mass"], damping=cfg["damping"],
                     potential=Potential.harmonic(cfg["omega"], cfg["mass"]))
    t1, t2 = _ho_schedule(cfg)
    out = {"replicas": list(ids), "spacings": {}}
    for a in cfg["time_spacings"]:
        spt = max(1, int(round(1.0 / (cfg["step_factor"] * a))))
        dt = a / spt
        cadence = max(1, spt // 4)
        sch = MeasurementSchedule(t1, t2, cfg["window"], cadence=cadence)
        T = int(round(sch.termination / a)) + 2
        geo = LatticeGeometry(0, (), 1.0, T, a)
        st = new_state(geo, mode, 0, two_time=True, replicas=ids)
        spec = NoiseSpec.for_geometry(geo, dt, cfg["hbar"], cfg.seed)
        pts, pairs = _ho_points(a, cfg)
        tr = run_two_time(st, act, spec, EngineParams(dt, spt), sch, points=pts, pin=cfg["pin"])
        corr = {}
        for tau, plist in pairs.items():
            vals = [np.real(windowed_correlator(tr, sch, list(pair)).values) for pair in plist]
            corr[repr(float(tau))] = np.mean(vals, axis=0).tolist()
        first = pairs[cfg["taus"][0]][0][0]
        x = np.real(tr.series(first.key))
        dts = cadence * dt
        deltas = []
        for series in (x, x ** 2):
            try:
                deltas.append(autocorrelation_time(series, dts, min_ratio=0).delta)
            except (SeriesTooShort, ValueError):
                deltas.append(math.inf)
        out["spacings"][repr(float(a))] = {"C": corr, "delta": max(deltas), "langevin_step": dt}
    return out


def _richardson(a1, v1, e1, a2, v2, e2):
    """Extrapolate ``v(a) = v0 + c a^2`` from two spacings."""
    w1, w2 = a1 ** 2, a2 ** 2
    v0 = (w1 * v2 - w2 * v1) / (w1 - w2)
    e0 = math.hypot(w1 * e2, w2 * e1) / abs(w1 - w2)
    return v0, e0


def _ho_aggregate(cfg, chunks, ctx):
    ids = _cat(chunks, "replicas")
    hbar, m, w = cfg["hbar"], cfg["mass"], cfg["omega"]
    rows, per = [], {}
    delta = 0.0
    for a in cfg["time_spacings"]:
        key = repr(float(a))
        delta = max(delta, max(c["spacings"][key]["delta"] for c in chunks))
        for tau in cfg["taus"]:
            vals = []
            for c in chunks:
                vals.extend(c["spacings"][key]["C"][repr(float(tau))])
            mval, merr = _mean_err(vals)
            per[(a, tau)] = (mval, merr)
            lat = ho_correlator_exact(w, tau, a, m, hbar)
            rows.append([a, tau, mval, merr, lat, ho_correlator_exact(w, tau, None, m, hbar)])
    exploratory = cfg["mode"] == "minkowski"
    kind = "exploratory" if exploratory else "sigma"
    checks = []
    sp = sorted(cfg["time_spacings"], reverse=True)
    for tau in cfg["taus"]:
        cont = ho_correlator_exact(w, tau, None, m, hbar)
        if len(sp) >= 2:
            (a1, a2) = sp[-2], sp[-1]
            v0, e0 = _richardson(a1, *per[(a1, tau)], a2, *per[(a2, tau)])
        else:
            v0, e0 = per[(sp[0], tau)]
        rows.append([0.0, tau, v0, e0, cont, cont])
        name = "x2" if tau == 0 else f"C({tau:g})"
        checks.append(Check(name, v0, e0, cont, 3.0, kind=kind))
    ratio = cfg["window"] / delta if delta > 0 else math.inf
    checks.append(Check("window_over_delta", ratio, 0.0, cfg["min_window_ratio"], 0.0,
                        kind="exploratory" if exploratory else "min"))
    cols = ["time_spacing", "tau", "measured", "error", "lattice_exact", "continuum_exact"]
    reps = []
    for c in chunks:
        for j, r in enumerate(c["replicas"]):
            for a in cfg["time_spacings"]:
                d = c["spacings"][repr(float(a))]["C"]
                reps.append([r, a] + [d[repr(float(t))][j] for t in cfg["taus"]])
    rep_cols = ["replica", "time_spacing"] + [f"C_{t:g}" for t in cfg["taus"]]
    return Aggregate({"correlator.csv": (cols, rows)}, checks,
                     {"delta": delta, "window_over_delta": ratio, "replicas": len(ids),
                      "extrapolation": "a^2 Richardson over the two finest spacings"},
                     (rep_cols, sorted(reps, key=lambda r: (r[0], -r[1]))))


def _ho_check(cfg):
    _check_damping(cfg)
    if len(cfg["time_spacings"]) < 1 or any(a <= 0 for a in cfg["time_spacings"]):
        raise ConfigError("time_spacings must be positive")
    if any(t < 0 for t in cfg["taus"]):
        raise ConfigError("taus must be non-negative")
    if cfg["lag"] < 0:
        raise ConfigError("lag must be >= 0")


HO_GROUND_STATE = Scenario(
    "ho_ground_state",
    "Harmonic-oscillator worldline in two-time (growing block) mode",
    "continuum correlator hbar/(2 m omega) exp(-omega tau) after a^2 extrapolation",
    "3 sigma on <x^2> and C(tau); window/delta >= min_window_ratio",
    "windowed two-slice products behind the present, averaged over replicas",
    [Param("omega", float, 1.0, positive, "must be positive"),
     Param("mass", float, 1.0, positive, "must be positive"),
     Param("hbar", float, 1.0, positive, "must be positive"),
     Param("time_spacings", list, [0.5, 0.25]),
     Param("step_factor", float, 0.02, positive, "must be positive",
           "langevin_step = step_factor * a_t^2 (rounded to whole steps per tick)"),
     Param("t1", float, 20.0, positive, "must be positive"),
     Param("gap", float, 10.0, non_negative, "must be >= 0"),
     Param("window", float, 60.0, positive, "must be positive"),
     Param("lag", float, 8.0),
     Param("taus", list, [0.0, 1.0, 2.0, 3.0]),
     Param("n_bases", int, 12, positive, "must be positive"),
     Param("pin", bool, False),
     Param("min_window_ratio", float, 100.0, non_negative, "must be >= 0"),
     _mode_param(),
     Param("damping", float, 0.0, non_negative, "must be >= 0")],
    _ho_chunk, _ho_aggregate, default_replicas=32, default_batch=32, check_config=_ho_check,
)


# -- double_well_ssb ---------------------------------------------------------------

def _pointer_device(cfg, coupling):
    return PointerDevice(cfg["separation"], coupling, cfg["n_dof"], cfg["depth"], cfg["ramp_start"],
                         cfg["ramp_end"], cfg["hbar"])


def _tunnel_run(cfg, volume, ids):
    v = cfg["well"]
    lam = 4 * cfg["site_barrier"] / v ** 4
    geo = LatticeGeometry(1, volume, 1.0, 1, 1.0)
    act = ActionSpec("scalar_field", "euclidean", mass=0.0, quartic=lam, vev=v)
    dt = cfg["tunnel_step"]
    st = new_state(geo, "euclidean", replicas=ids)
    st.values[:] = v
    spec = NoiseSpec.for_geometry(geo, dt, cfg["hbar"], cfg.seed, stream=(0, f"tunnel-{volume}"))
    eng = LangevinEngine(st, act, spec, EngineParams(dt))
    ms = []
    every = cfg["tunnel_record_every"]
    eng.advance(int(round(cfg["tunnel_time"] / dt)), lambda s: ms.append(magnetization(s)), every)
    ms = np.array(ms)
    res = [flip_time(ms[:, j], 0.5 * v, dt * every) for j in range(len(ids))]
    return [[r.n_flips, r.exposure] for r in res]


def _ssb_chunk(cfg, ids, ctx):
    dt = cfg["pointer_step"]
    term = cfg["ramp_end"] + cfg["post_ramp_steps"] * dt
    free = pointer_outcomes(cfg["system_value"], _pointer_device(cfg, cfg["coupling"]), ids,
                            langevin_step=dt, termination=term, master_seed=cfg.seed)
    strong = cfg["bias_strength"] * cfg["n_dof"] * cfg["depth"] * cfg["separation"] ** 3
    strong /= abs(cfg["system_value"])
    dev_b = _pointer_device(cfg, strong)
    biased = pointer_outcomes(cfg["system_value"], dev_b, ids, langevin_step=dt, termination=term,
                              master_seed=cfg.seed + 1)
    out = {"replicas": list(ids),
           "outcome": [o.outcome for o in free], "final": [o.final for o in free],
           "flips": [post_ramp_flips(o, _pointer_device(cfg, cfg["coupling"])) for o in free],
           "biased_outcome": [o.outcome for o in biased], "biased_final": [o.final for o in biased],
           "tunnel": {}}
    if cfg["tunneling"]:
        t_ids = [r for r in ids if r < cfg["tunnel_replicas"]]
        if t_ids:
            for L in cfg["volumes"]:
                out["tunnel"][str(int(L))] = {"replicas": t_ids, "runs": _tunnel_run(cfg, int(L), t_ids)}
    return out


def _ssb_aggregate(cfg, chunks, ctx):
    ids = _cat(chunks, "replicas")
    outc = np.array(_cat(chunks, "outcome"), dtype=int)
    flips = _cat(chunks, "flips")
    b_out = np.array(_cat(chunks, "biased_outcome"), dtype=int)
    summ_free = ensemble_probability(outc)
    summ_b = ensemble_probability(b_out)
    n_res = summ_free.counts["+1"] + summ_free.counts["-1"]
    checks = []
    expected_sign = int(np.sign(cfg["system_value"]))
    if cfg["coupling"] * cfg["system_value"] == 0:
        sig = math.sqrt(0.25 / max(n_res, 1))
        p = summ_free.p_plus if summ_free.p_plus is not None else math.nan
        checks.append(Check("p_plus_unbiased", p, sig, 0.5, 3.0))
    frac = float(np.mean(b_out == expected_sign))
    checks.append(Check("biased_sign_fraction", frac, 0.0, cfg["min_biased_fraction"], 0.0, kind="min"))
    settled = [f for f, o in zip(flips, outc) if o != 0]
    checks.append(Check("post_ramp_flips", float(sum(settled)), 0.0, 0.0, 0.0, kind="max"))
    tables = {}
    summary = {"unbiased": asdict(summ_free), "biased": asdict(summ_b),
               "unresolved": summ_free.counts["unresolved"]}
    if cfg["tunneling"]:
        rows, pooled = [], []
        vols = [int(v) for v in cfg["volumes"]]
        for L in vols:
            runs = []
            for c in chunks:
                runs.extend(c["tunnel"].get(str(L), {}).get("runs", []))
            res = [FlipTimeResult(math.nan, math.nan, int(k), float(e), k < 1) for k, e in runs]
            p = pooled_flip_time(res)
            pooled.append(p)
            rows.append([L, p.mean, p.error, p.n_flips, p.exposure, int(p.censored)])
        tables["tunneling.csv"] = (["volume", "flip_time", "error", "n_flips", "exposure", "censored"], rows)
        for (L0, p0), (L1, p1) in zip(zip(vols, pooled), zip(vols[1:], pooled[1:])):
            checks.append(Check(f"flip_time_increase_{L0}_{L1}", p1.mean - p0.mean,
                                math.hypot(p0.error, p1.error) if p0.n_flips and p1.n_flips else math.inf,
                                0.0, 0.0, kind="above"))
        if len(vols) >= 2 and all(p.n_flips > 0 for p in pooled):
            slope, s_err = fit_log_slope(vols, [p.mean for p in pooled], [p.error for p in pooled])
        else:
            # censored volumes are lower bounds: the slope from them is a lower bound too
            slope, s_err = fit_log_slope(vols, [p.lower_bound for p in pooled],
                                         [p.mean if p.n_flips == 0 else p.error for p in pooled])
        checks.append(Check("log_flip_time_slope", slope, s_err, 0.0, cfg["slope_sigma"], kind="above"))
        summary["log_flip_time_slope"] = [slope, s_err]
    reps = (["replica", "outcome", "final", "post_ramp_flips", "biased_outcome", "biased_final"],
            [list(r) for r in zip(ids, outc.tolist(), _cat(chunks, "final"), flips, b_out.tolist(),
                                  _cat(chunks, "biased_final"))])
    tables["outcomes.csv"] = reps
    return Aggregate(tables, checks, summary, reps,
                     {"distribution.json": {"unbiased": asdict(summ_free), "biased": asdict(summ_b),
                                            "statistic": "fraction of resolved replicas with M > 0"}})


def _ssb_check(cfg):
    if cfg["ramp_end"] < cfg["ramp_start"]:
        raise ConfigError("ramp_end must not precede ramp_start")
    if cfg["system_value"] == 0:
        raise ConfigError("system_value must be non-zero")
    if cfg["tunneling"] and (len(cfg["volumes"]) < 2 or any(v < 1 for v in cfg["volumes"])):
        raise ConfigError("volumes needs at least two positive sizes")


DOUBLE_WELL_SSB = Scenario(
    "double_well_ssb",
    "Pointer device driven through symmetry breaking; tunnelling time against volume",
    "symmetry: P(+) = 1/2 without bias; bias selects its sign; flip time grows with volume",
    "3 sigma on P(+); >= min_biased_fraction biased; zero post-ramp flips; "
    "flip times increasing with positive log-slope at slope_sigma",
    "sign of M at termination (|M| >= v/2 resolves); exposure-pooled flip time",
    [Param("n_dof", float, 32.0, lambda x: x >= 1, "must be >= 1"),
     Param("separation", float, 1.0, positive, "must be positive"),
     Param("depth", float, 1.0, positive, "must be positive"),
     Param("ramp_start", float, 0.0, non_negative, "must be >= 0"),
     Param("ramp_end", float, 5.0, non_negative, "must be >= 0"),
     Param("coupling", float, 0.0),
     Param("system_value", float, 1.0),
     Param("bias_strength", float, 10.0, positive, "must be positive",
           "strong coupling in units of barrier / separation"),
     Param("min_biased_fraction", float, 0.99),
     Param("pointer_step", float, 0.01, positive, "must be positive"),
     Param("post_ramp_steps", int, 10_000, positive, "must be positive"),
     Param("hbar", float, 1.0, positive, "must be positive"),
     Param("tunneling", bool, True),
     Param("volumes", list, [8.0, 16.0, 32.0]),
     Param("site_barrier", float, 0.125, positive, "must be positive"),
     Param("well", float, 6.0, positive, "must be positive"),
     Param("tunnel_step", float, 0.1, positive, "must be positive"),
     Param("tunnel_time", float, 8000.0, positive, "must be positive"),
     Param("tunnel_replicas", int, 16, positive, "must be positive"),
     Param("tunnel_record_every", int, 10, positive, "must be positive"),
     Param("slope_sigma", float, 2.0, non_negative, "must be >= 0")],
    _ssb_chunk, _ssb_aggregate, default_replicas=200, default_batch=200, check_config=_ssb_check,
)


# -- two_path_interference -------------------------------------------------------

def fringe_visibility(pattern) -> float:
    """Contrast of the first revival of a decaying intensity pattern.

    With ``i`` the first local minimum, ``(max(I[i:]) - I[i]) / (max(I[i:]) + I[i])``;
    zero for a monotone pattern.
    """
    m = np.asarray(pattern, dtype=float)
    up = np.flatnonzero(np.diff(m) > 0)
    if up.size == 0:
        return 0.0
    i = up[0]
    peak = m[i:].max()
    return float((peak - m[i]) / (peak + m[i]))


def _tp_wavenumbers(cfg):
    return np.linspace(0.0, cfg["max_phase"] / cfg["separation"], cfg["n_wavenumbers"])


def _tp_chunk(cfg, ids, ctx):
    a = cfg["time_spacing"]
    spt = cfg["steps_per_tick"]
    dt = a / spt
    t1 = cfg["t1"]
    t2 = t1 + cfg["gap"] + 0.5 * cfg["window"]
    sch = MeasurementSchedule(t1, t2, cfg["window"], cadence=cfg["cadence"])
    T = int(round(sch.termination / a)) + 2
    geo = LatticeGeometry(0, (), 1.0, T, a)
    act = ActionSpec("worldline", "euclidean", mass=cfg["mass"],
                     potential=Potential.double_well(cfg["quartic"], cfg["separation"]))
    screen = Point(int(round((t1 + cfg["screen_offset"]) / a)))
    s = _tp_wavenumbers(cfg)
    out = {"replicas": list(ids)}
    for label, pin in (("free", False), ("monitored", True)):
        st = new_state(geo, "euclidean", 0, two_time=True, replicas=ids)
        spec = NoiseSpec.for_geometry(geo, dt, cfg["hbar"], cfg.seed)
        tr = run_two_time(st, act, spec, EngineParams(dt, spt), sch, points=[screen], pin=pin)
        x = tr.series(screen.key)[tr.window(*sch.window_bounds)]
        amp = np.exp(1j * s[None, None, :] * x[:, :, None]).mean(axis=0)
        out[label] = (np.abs(amp) ** 2).tolist()
    return out


def _tp_aggregate(cfg, chunks, ctx):
    ids = _cat(chunks, "replicas")
    free = np.array(_cat(chunks, "free"))
    mon = np.array(_cat(chunks, "monitored"))
    s = _tp_wavenumbers(cfg)
    pair = np.stack([free, mon], axis=1)
    v_free, e_free = jackknife(free, lambda a: fringe_visibility(a.mean(axis=0)))
    v_mon, e_mon = jackknife(mon, lambda a: fringe_visibility(a.mean(axis=0)))
    diff, e_diff = jackknife(pair, lambda a: fringe_visibility(a[:, 0].mean(axis=0))
                             - fringe_visibility(a[:, 1].mean(axis=0)))
    checks = [Check("visibility_free_minus_monitored", float(diff), float(e_diff), 0.0,
                    cfg["min_sigma"], kind="above")]
    rows = []
    for j, k in enumerate(s):
        fm, fe = _mean_err(free[:, j])
        mm, me = _mean_err(mon[:, j])
        rows.append([float(k), fm, fe, mm, me])
    vis = (["path", "visibility", "error"], [["free", float(v_free), float(e_free)],
                                             ["monitored", float(v_mon), float(e_mon)]])
    reps = (["replica", "visibility_free", "visibility_monitored"],
            [[r, fringe_visibility(f), fringe_visibility(m)] for r, f, m in zip(ids, free, mon)])
    return Aggregate({"pattern.csv": (["wavenumber", "free", "free_error", "monitored", "monitored_error"], rows),
                      "visibility.csv": vis}, checks,
                     {"visibility_free": float(v_free), "visibility_monitored": float(v_mon)}, reps)


TWO_PATH = Scenario(
    "two_path_interference",
    "Double-well worldline: fringe pattern of the windowed amplitude with and without a pinned slit slice",
    "paired simulation comparison: monitored visibility below free visibility",
    "difference above zero at min_sigma (jackknife over paired replicas)",
    "|window average of exp(i s x)|^2 per replica, averaged over replicas; contrast of the first revival",
    [Param("quartic", float, 4.0, positive, "must be positive"),
     Param("separation", float, 1.0, positive, "must be positive"),
     Param("mass", float, 1.0, positive, "must be positive"),
     Param("hbar", float, 1.0, positive, "must be positive"),
     Param("time_spacing", float, 0.25, positive, "must be positive"),
     Param("steps_per_tick", int, 25, positive, "must be positive"),
     Param("t1", float, 5.0, positive, "must be positive"),
     Param("gap", float, 2.0, non_negative, "must be >= 0"),
     Param("window", float, 40.0, positive, "must be positive"),
     Param("screen_offset", float, 1.0, non_negative, "must be >= 0"),
     Param("n_wavenumbers", int, 25, lambda n: n >= 3, "must be >= 3"),
     Param("max_phase", float, 1.5 * math.pi, positive, "must be positive"),
     Param("cadence", int, 5, positive, "must be positive"),
     Param("min_sigma", float, 3.0, non_negative, "must be >= 0")],
    _tp_chunk, _tp_aggregate, default_replicas=96, default_batch=96,
)


# -- delta_sweep ---------------------------------------------------------------------

def _ds_setup(cfg):
    geo = LatticeGeometry(1, 1, 1.0, 1, 1.0)
    act = ActionSpec("scalar_field", "euclidean", mass=cfg["mass"])
    return geo, act


def _ds_prepare(cfg):
    """Estimate the fluctuation time of phi^2 from an independent pilot ensemble."""
    geo, act = _ds_setup(cfg)
    dt = cfg["langevin_step"]
    ids = list(range(cfg["pilot_replicas"]))
    st = new_state(geo, "euclidean", replicas=ids)
    spec = NoiseSpec.for_geometry(geo, dt, cfg["hbar"], cfg.seed, stream=(0, "pilot"))
    eng = LangevinEngine(st, act, spec, EngineParams(dt))
    eng.advance(int(round(cfg["burn_in_time"] / dt)))
    rec = []
    eng.advance(int(round(cfg["pilot_time"] / dt)), lambda s: rec.append(s.values[:, 0, 0] ** 2))
    stats = autocorrelation_time(np.array(rec), dt)
    return {"delta": stats.delta, "delta_error": stats.tau_int_error * dt}


def _ds_schedule(cfg, ctx):
    delta = ctx["delta"]
    widest = max(cfg["ratios"]) * delta
    t1 = cfg["burn_in_time"]
    t2 = t1 + cfg["margin"] + 0.5 * widest
    return MeasurementSchedule(t1, t2, widest, cadence=1), delta


def _ds_chunk(cfg, ids, ctx):
    geo, act = _ds_setup(cfg)
    dt = cfg["langevin_step"]
    sch, delta = _ds_schedule(cfg, ctx)
    p = Point(0, (0,))
    out = {"replicas": list(ids), "windowed": {}}
    st = new_state(geo, "euclidean", replicas=ids)
    spec = NoiseSpec.for_geometry(geo, dt, cfg["hbar"], cfg.seed)
    tr = run_two_time(st, act, spec, EngineParams(dt), sch, points=[p], pin=False)
    for r in cfg["ratios"]:
        est = windowed_correlator(tr, sch.with_window(r * delta), [p, p])
        out["windowed"][repr(float(r))] = np.real(est.values).tolist()
    # ensemble-mode reference: independent replicas read at the single time t2
    st = new_state(geo, "euclidean", replicas=ids)
    spec = NoiseSpec.for_geometry(geo, dt, cfg["hbar"], cfg.seed, stream=(0, "reference"))
    ref_sch = MeasurementSchedule(sch.t1, sch.t2, dt, cadence=1)
    tr = run_two_time(st, act, spec, EngineParams(dt), ref_sch, points=[p], pin=False)
    i = int(np.argmin(np.abs(tr.times - sch.t2)))
    out["reference"] = (np.real(tr.series(p.key)[i]) ** 2).tolist()
    return out


def _ds_aggregate(cfg, chunks, ctx):
    sch, delta = _ds_schedule(cfg, ctx)
    ref = np.array(_cat(chunks, "reference"))
    ref_mean, ref_err = _mean_err(ref)
    rows, checks = [], []
    ratios = list(cfg["ratios"])
    variances = []
    for r in ratios:
        vals = []
        for c in chunks:
            vals.extend(c["windowed"][repr(float(r))])
        vals = np.array(vals)
        n = len(vals)
        mean = float(vals.mean())
        var = float(vals.var(ddof=1))
        err = math.sqrt(var / n + ref_err ** 2)
        variances.append(var)
        rows.append([float(r), mean, ref_mean, mean - ref_mean, err, var])
    top = rows[ratios.index(max(ratios))]
    checks.append(Check(f"windowed_minus_ensemble_at_{max(ratios):g}", top[3], top[4], 0.0, 3.0))
    order = np.argsort(ratios)
    for i0, i1 in zip(order[:-1], order[1:]):
        checks.append(Check(f"run_variance_change_{ratios[i0]:g}_to_{ratios[i1]:g}",
                            variances[i1] - variances[i0], 0.0, 0.0, 0.0, kind="max"))
    cols = ["delta_over_deltafluct", "windowed", "ensemble_ref", "diff", "err", "run_variance"]
    ids = _cat(chunks, "replicas")
    reps = (["replica"] + [f"windowed_{r:g}" for r in ratios] + ["reference"],
            [[rid] + [c["windowed"][repr(float(r))][j] for r in ratios] + [c["reference"][j]]
             for c in chunks for j, rid in enumerate(c["replicas"])])
    return Aggregate({"delta_sweep.csv": (cols, rows)}, checks,
                     {"delta_fluct": delta, "delta_fluct_error": ctx["delta_error"],
                      "ensemble_reference": [ref_mean, ref_err], "replicas": len(ids),
                      "exact_variance": ou_stationary(cfg["mass"] ** 2, cfg["hbar"]).variance}, reps)


def _ds_check(cfg):
    if len(cfg["ratios"]) < 2 or any(r <= 0 for r in cfg["ratios"]):
        raise ConfigError("ratios needs at least two positive window/delta values")


DELTA_SWEEP = Scenario(
    "delta_sweep",
    "Windowed estimates of <phi^2> for nested windows against an ensemble-mode reference",
    "independent ensemble-mode estimate at t2 (exact OU variance reported alongside)",
    "3 sigma agreement at the widest window; run-to-run variance non-increasing in the window",
    "replica mean and variance of windowed phi^2",
    [Param("mass", float, 1.0, positive, "must be positive"),
     Param("hbar", float, 1.0, positive, "must be positive"),
     _langevin_step_param(0.01),
     Param("burn_in_time", float, 10.0, non_negative, "must be >= 0"),
     Param("margin", float, 1.0, non_negative, "must be >= 0"),
     Param("ratios", list, [0.1, 1.0, 10.0, 100.0]),
     Param("pilot_time", float, 400.0, positive, "must be positive"),
     Param("pilot_replicas", int, 8, positive, "must be positive")],
    _ds_chunk, _ds_aggregate, default_replicas=400, default_batch=400, prepare=_ds_prepare,
    check_config=_ds_check,
)


# -- nelson_oracle -----------------------------------------------------------------

def _nelson_models(cfg):
    hbar, m = cfg["hbar"], cfg["mass"]
    sigma = hbar / m
    n = cfg["grid_points"]
    x_ho = np.linspace(-cfg["ho_extent"], cfg["ho_extent"], n)
    x_dw = np.linspace(-cfg["dw_extent"], cfg["dw_extent"], n)
    ho = Potential.harmonic(cfg["omega"], m)
    dw = Potential.double_well(cfg["quartic"], cfg["separation"])
    return {"harmonic": (solve_w(x_ho, ho(x_ho) / hbar, sigma), ho(x_ho) / hbar),
            "double_well": (solve_w(x_dw, dw(x_dw) / hbar, sigma), dw(x_dw) / hbar)}


def _nelson_chunk(cfg, ids, ctx):
    model = _nelson_models(cfg)["harmonic"][0]
    gens = [counter_generator(cfg.seed, r, "nelson", 0) for r in ids]
    dt = cfg["sampler_step"]
    every = cfg["record_every"]
    burn = cfg["burn_in_steps"] // every
    x = nelson_sample(model, np.zeros(len(ids)), dt, cfg["sampler_steps"], gens, every)[burn:]
    return {"replicas": list(ids), "mean_sq": (x ** 2).mean(axis=0).tolist(), "mean": x.mean(axis=0).tolist()}


def _nelson_aggregate(cfg, chunks, ctx):
    models = _nelson_models(cfg)
    rows, checks = [], []
    for name, (model, V_in) in models.items():
        v_back = compute_v(model)
        diff = v_back - V_in
        mask = model.interior()
        spread = float(np.ptp(diff[mask]))
        checks.append(Check(f"roundtrip_spread_{name}", spread, 0.0, cfg["roundtrip_tol"], 0.0, kind="max"))
        for xi, V, vb, d, ok in zip(model.x, V_in, v_back, diff, mask):
            rows.append([name, float(xi), float(V), float(vb), float(d), int(ok)])
    var, err = _mean_err(_cat(chunks, "mean_sq"))
    expected = cfg["hbar"] / (2 * cfg["mass"] * cfg["omega"])
    checks.append(Check("nelson_variance_harmonic", var, err, expected, 3.0))
    ids = _cat(chunks, "replicas")
    reps = (["replica", "mean_x", "mean_x_sq"],
            [list(r) for r in zip(ids, _cat(chunks, "mean"), _cat(chunks, "mean_sq"))])
    return Aggregate({"riccati.csv": (["potential", "x", "V", "V_roundtrip", "diff", "interior"], rows)},
                     checks, {"ground_energy": {k: m.ground_energy for k, (m, _) in models.items()}}, reps)


NELSON_ORACLE = Scenario(
    "nelson_oracle",
    "Riccati round trip V -> W -> V and the Nelson sampler's stationary law",
    "solve_w/compute_v consistency up to a constant; oscillator variance hbar/(2 m omega)",
    "spread of V_roundtrip - V below roundtrip_tol on the interior; 3 sigma on the variance",
    "walker mean of time-averaged x^2",
    [Param("omega", float, 1.0, positive, "must be positive"),
     Param("quartic", float, 1.0, positive, "must be positive"),
     Param("separation", float, 1.0, positive, "must be positive"),
     Param("mass", float, 1.0, positive, "must be positive"),
     Param("hbar", float, 1.0, positive, "must be positive"),
     Param("grid_points", int, 512, lambda n: n >= 16, "must be >= 16"),
     Param("ho_extent", float, 8.0, positive, "must be positive"),
     Param("dw_extent", float, 4.0, positive, "must be positive"),
     Param("sampler_step", float, 0.005, positive, "must be positive"),
     Param("sampler_steps", int, 200_000, positive, "must be positive"),
     Param("burn_in_steps", int, 2000, non_negative, "must be >= 0"),
     Param("record_every", int, 10, positive, "must be positive"),
     Param("roundtrip_tol", float, 1e-3, positive, "must be positive")],
    _nelson_chunk, _nelson_aggregate, default_replicas=64, default_batch=64,
)


CATALOG: dict[str, Scenario] = {s.name: s for s in (
    HO_GROUND_STATE, FREE_FIELD, OU_CHECK, DOUBLE_WELL_SSB, TWO_PATH, DELTA_SWEEP, NELSON_ORACLE)}
