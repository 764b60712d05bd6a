"""Lattice geometry, Langevin state containers and the growing present.

Storage is slice-major: a state holds an array of shape
``(replicas, time_extent, *spatial_extent)``.  The whole time extent is
allocated up front; only slices ``0 .. present_index`` exist.  Slices ahead
of the present are kept at zero and are never touched by the dynamics.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

CHECKPOINT_VERSION = 1


class Boundary(str, Enum):
    PERIODIC = "periodic"
    OPEN = "open"


class Mode(str, Enum):
    EUCLIDEAN = "euclidean"
    MINKOWSKI = "minkowski"


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeGeometry:
    """Discretisation of ``n`` spatial dimensions plus coordinate time.

    ``spatial_dims == 0`` is the worldline case: one degree of freedom per
    time slice.  ``boundary`` lists one entry per axis in storage order,
    time first.
    """

    spatial_dims: int = 1
    spatial_extent: tuple[int, ...] = (8,)
    spatial_spacing: float = 1.0
    time_extent: int = 16
    time_spacing: float = 1.0
    boundary: tuple[Boundary, ...] | None = None

    def __post_init__(self):
        n = self.spatial_dims
        if n not in (0, 1, 2, 3):
            raise GeometryError(f"spatial_dims must be 0..3, got {n}")
        ext = self.spatial_extent
        if isinstance(ext, (int, np.integer)):
            ext = (int(ext),) * n
        ext = tuple(int(e) for e in ext)
        if n == 0:
            ext = ()
        elif len(ext) == 1 and n > 1:
            ext = ext * n
        if len(ext) != n:
            raise GeometryError(f"spatial_extent needs {n} entries, got {len(ext)}")
        if any(e < 1 for e in ext) or self.time_extent < 1:
            raise GeometryError("all lattice extents must be >= 1")
        if not (self.spatial_spacing > 0 and self.time_spacing > 0):
            raise GeometryError("lattice spacings must be positive")
        object.__setattr__(self, "spatial_extent", ext)
        object.__setattr__(self, "time_extent", int(self.time_extent))
        bnd = self.boundary
        if bnd is None:
            bnd = (Boundary.OPEN,) + (Boundary.PERIODIC,) * n
        elif isinstance(bnd, (str, Boundary)):
            bnd = (Boundary(bnd),) * (n + 1)
        bnd = tuple(Boundary(b) for b in bnd)
        if len(bnd) != n + 1:
            raise GeometryError(f"boundary needs {n + 1} entries, got {len(bnd)}")
        object.__setattr__(self, "boundary", bnd)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.time_extent,) + self.spatial_extent

    @property
    def spacings(self) -> tuple[float, ...]:
        return (self.time_spacing,) + (self.spatial_spacing,) * self.spatial_dims

    @property
    def cell_volume(self) -> float:
        """``a**n * a_t``, the space-time volume of one site."""
        return self.spatial_spacing ** self.spatial_dims * self.time_spacing

    @property
    def spatial_volume(self) -> int:
        return int(np.prod(self.spatial_extent, dtype=np.int64)) if self.spatial_dims else 1

    @property
    def is_worldline(self) -> bool:
        return self.spatial_dims == 0

    def to_dict(self) -> dict:
        return {
            "spatial_dims": self.spatial_dims,
            "spatial_extent": list(self.spatial_extent),
            "spatial_spacing": self.spatial_spacing,
            "time_extent": self.time_extent,
            "time_spacing": self.time_spacing,
            "boundary": [b.value for b in self.boundary],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LatticeGeometry":
        return cls(
            spatial_dims=d["spatial_dims"],
            spatial_extent=tuple(d["spatial_extent"]),
            spatial_spacing=d["spatial_spacing"],
            time_extent=d["time_extent"],
            time_spacing=d["time_spacing"],
            boundary=tuple(d["boundary"]),
        )


def site_neighbors(geometry: LatticeGeometry, site: Sequence[int]) -> list[tuple[int, ...]]:
    """Nearest neighbours of ``site`` (given as ``(t, x1, ..., xn)``).

    Periodic axes wrap, open axes simply lose the missing neighbour.  On
    extents of 1 or 2 a periodic axis would list the same site twice or the
    site itself; duplicates and self-links are dropped.
    """
    site = tuple(int(s) for s in site)
    shape = geometry.shape
    if len(site) != len(shape):
        raise IndexError(f"site {site} has wrong rank for lattice of shape {shape}")
    for s, extent in zip(site, shape):
        if not 0 <= s < extent:
            raise IndexError(f"site {site} out of bounds for lattice of shape {shape}")
    out = []
    for axis, (extent, bnd) in enumerate(zip(shape, geometry.boundary)):
        for step in (-1, 1):
            j = site[axis] + step
            if bnd is Boundary.PERIODIC:
                j %= extent
            elif not 0 <= j < extent:
                continue
            nb = site[:axis] + (j,) + site[axis + 1:]
            if nb != site and nb not in out:
                out.append(nb)
    return out


class SlicePolicy(str, Enum):
    COPY_PREVIOUS_PLUS_NOISE = "copy_previous_plus_noise"
    ZERO = "zero"
    GAUSSIAN_FREE_FIELD = "gaussian_free_field"


@dataclass(frozen=True)
class SliceInitPolicy:
    """How a freshly created present slice is filled.

    ``mass`` and ``hbar`` are only read by the free-field policy.
    """

    kind: SlicePolicy = SlicePolicy.COPY_PREVIOUS_PLUS_NOISE
    noise_scale: float = 0.0
    mass: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SlicePolicy(self.kind))
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")

    @classmethod
    def default_for(cls, geometry: LatticeGeometry, langevin_step: float, hbar: float = 1.0):
        """Copy-plus-noise with the width of one Langevin kick."""
        scale = np.sqrt(2.0 * hbar * langevin_step / geometry.cell_volume)
        return cls(SlicePolicy.COPY_PREVIOUS_PLUS_NOISE, float(scale), hbar=hbar)


@dataclass
class LangevinState:
    """Field or worldline configuration evolving in Langevin time.

    ``values[r, t, ...]`` is replica ``r`` at slice ``t``.  All replicas
    share the present index and clock; each replica draws noise from its own
    stream so a batch of replicas is equivalent to running them one by one.
    """

    geometry: LatticeGeometry
    mode: Mode
    values: np.ndarray
    langevin_clock: float
    present_index: int
    two_time: bool = False
    pinned: np.ndarray | None = None
    replica_ids: tuple[int, ...] = (0,)
    step: int = 0
    grow_count: int = 0

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.pinned is None:
            self.pinned = np.zeros(self.geometry.shape, dtype=bool)

    @property
    def n_replicas(self) -> int:
        return self.values.shape[0]

    @property
    def stored(self) -> np.ndarray:
        """View of the existing slices ``0 .. present_index``."""
        return self.values[:, : self.present_index + 1]

    @property
    def present_time(self) -> float:
        return self.present_index * self.geometry.time_spacing

    def copy(self) -> "LangevinState":
        return LangevinState(
            geometry=self.geometry,
            mode=self.mode,
            values=self.values.copy(),
            langevin_clock=self.langevin_clock,
            present_index=self.present_index,
            two_time=self.two_time,
            pinned=self.pinned.copy(),
            replica_ids=self.replica_ids,
            step=self.step,
            grow_count=self.grow_count,
        )

    def pin_slice(self, index: int, sites=None):
        """Freeze slice ``index`` (or the listed spatial sites of it)."""
        if index > self.present_index:
            raise IndexError(f"cannot pin slice {index} beyond present {self.present_index}")
        if sites is None:
            self.pinned[index] = True
        else:
            for s in sites:
                self.pinned[(index,) + tuple(s)] = True


def new_state(
    geometry: LatticeGeometry,
    mode: Mode | str = Mode.EUCLIDEAN,
    initial_present: int | None = None,
    *,
    two_time: bool = False,
    replicas: int | Sequence[int] = 1,
) -> LangevinState:
    """All-zero state with slices ``0 .. initial_present`` in existence.

    ``replicas`` is either a count or an explicit list of replica ids.  The
    clock starts at the coordinate time of the present slice.
    """
    mode = Mode(mode)
    if initial_present is None:
        initial_present = geometry.time_extent - 1
    if not 0 <= initial_present < geometry.time_extent:
        raise GeometryError(
            f"initial_present {initial_present} outside 0..{geometry.time_extent - 1}")
    if two_time and geometry.boundary[0] is Boundary.PERIODIC:
        raise GeometryError("a growing present needs an open time boundary")
    ids = tuple(range(replicas)) if isinstance(replicas, (int, np.integer)) else tuple(replicas)
    if not ids:
        raise ValueError("at least one replica required")
    dtype = np.complex128 if mode is Mode.MINKOWSKI else np.float64
    values = np.zeros((len(ids),) + geometry.shape, dtype=dtype)
    return LangevinState(
        geometry=geometry,
        mode=mode,
        values=values,
        langevin_clock=initial_present * geometry.time_spacing,
        present_index=initial_present,
        two_time=two_time,
        replica_ids=ids,
    )


def _free_slice_std(geometry: LatticeGeometry, mass: float, hbar: float) -> np.ndarray:
    # per-momentum std of the equal-time vacuum marginal of the lattice free field
    a, at = geometry.spatial_spacing, geometry.time_spacing
    w2 = np.full(geometry.spatial_extent, mass ** 2, dtype=float)
    for axis, extent in enumerate(geometry.spatial_extent):
        p = 2 * np.pi * np.fft.fftfreq(extent)
        sh = [1] * geometry.spatial_dims
        sh[axis] = extent
        w2 = w2 + ((2 - 2 * np.cos(p)) / a ** 2).reshape(sh)
    theta = np.arccosh(1 + 0.5 * at ** 2 * w2)
    var = hbar / a ** geometry.spatial_dims * at / (2 * np.sinh(theta))
    return np.sqrt(var)


def _as_generators(rng, n):
    if isinstance(rng, np.random.Generator) or rng is None:
        rng = rng if rng is not None else np.random.default_rng()
        return [rng] * n
    rng = list(rng)
    if len(rng) != n:
        raise ValueError(f"need {n} generators, got {len(rng)}")
    return rng


def grow_present(state: LangevinState, policy: SliceInitPolicy | None = None, rng=None) -> LangevinState:
    """Create the next slice and advance the present by one tick.

    ``rng`` is a Generator or one Generator per replica.  Existing slices
    are left untouched.  Mutates and returns ``state``.
    """
    geo = state.geometry
    p = state.present_index
    if p + 1 >= geo.time_extent:
        raise GeometryError(f"cannot grow beyond time_extent={geo.time_extent}")
    policy = policy or SliceInitPolicy(SlicePolicy.ZERO)
    new = p + 1
    kind = policy.kind
    if kind is SlicePolicy.ZERO:
        state.values[:, new] = 0
    elif kind is SlicePolicy.COPY_PREVIOUS_PLUS_NOISE:
        state.values[:, new] = state.values[:, p]
        if policy.noise_scale > 0:
            gens = _as_generators(rng, state.n_replicas)
            for r, g in enumerate(gens):
                state.values[r, new] += policy.noise_scale * g.standard_normal(geo.spatial_extent)
    elif kind is SlicePolicy.GAUSSIAN_FREE_FIELD:
        gens = _as_generators(rng, state.n_replicas)
        if geo.is_worldline:
            at = geo.time_spacing
            theta = np.arccosh(1 + 0.5 * at ** 2 * policy.mass ** 2)
            std = np.sqrt(policy.hbar * at / (2 * np.sinh(theta)))
            for r, g in enumerate(gens):
                state.values[r, new] = std * g.standard_normal()
        else:
            std = _free_slice_std(geo, policy.mass, policy.hbar)
            for r, g in enumerate(gens):
                z = g.standard_normal(geo.spatial_extent) + 1j * g.standard_normal(geo.spatial_extent)
                # E|z|^2 = 2 and E z^2 = 0, so the real part carries exactly the
                # target covariance
                state.values[r, new] = np.fft.ifftn(std * z, norm="ortho").real
    state.present_index = new
    # inside a two-time run the Langevin steps have already moved the clock
    # up to the new present; standalone growth advances it by one tick
    state.langevin_clock = max(state.langevin_clock, new * geo.time_spacing)
    state.grow_count += 1
    return state


def save_state(path, state: LangevinState, extra: dict | None = None):
    """Write a JSON checkpoint; only existing slices are stored."""
    stored = state.stored
    if np.iscomplexobj(stored):
        vals = np.stack([stored.real, stored.imag], axis=-1).tolist()
    else:
        vals = stored.tolist()
    doc = {
        "version": CHECKPOINT_VERSION,
        "geometry": state.geometry.to_dict(),
        "mode": state.mode.value,
        "langevin_clock": state.langevin_clock,
        "present_index": state.present_index,
        "two_time": state.two_time,
        "replica_ids": list(state.replica_ids),
        "step": state.step,
        "grow_count": state.grow_count,
        "complex": bool(np.iscomplexobj(stored)),
        "values": vals,
        "pinned": np.argwhere(state.pinned).tolist(),
    }
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc))


def load_state(path) -> tuple[LangevinState, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    geo = LatticeGeometry.from_dict(doc["geometry"])
    state = new_state(geo, doc["mode"], doc["present_index"], two_time=doc["two_time"],
                      replicas=doc["replica_ids"])
    vals = np.asarray(doc["values"], dtype=float)
    if doc["complex"]:
        vals = vals[..., 0] + 1j * vals[..., 1]
    state.values[:, : state.present_index + 1] = vals
    state.langevin_clock = doc["langevin_clock"]
    state.step = doc["step"]
    state.grow_count = doc["grow_count"]
    for idx in doc["pinned"]:
        state.pinned[tuple(idx)] = True
    return state, doc.get("extra", {})
