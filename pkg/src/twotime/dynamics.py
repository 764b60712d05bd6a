"""Lattice actions, Langevin drifts and the single-time Riccati model.

Conventions (all drifts are per unit Langevin time):

* Euclidean field:  ``S_E = sum a^n a_t [ 1/2 sum_mu (d_mu phi)^2 + U(phi) ]``
  with ``U = m^2 phi^2 / 2 + lam/4 (phi^2 - v^2)^2`` and drift
  ``-(1/(a^n a_t)) dS_E/dphi - eps*phi``.
* Minkowski field:  time gradient enters with ``+``, spatial gradient and
  ``U`` with ``-``; drift ``i (1/(a^n a_t)) dS_M/dphi - eps*phi``.
* Worldline:  ``S = sum a_t [ m/2 (dx/dt)^2 +- V(x) ]`` with the same
  normalisation (``n = 0``).

With these normalisations the Euclidean stationary density is
``exp(-S_E / hbar)`` when the noise follows :mod:`twotime.noise`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh

from .lattice import Boundary, LangevinState, LatticeGeometry, Mode


class ActionKind(str, Enum):
    SCALAR_FIELD = "scalar_field"
    WORLDLINE = "worldline"


@dataclass(frozen=True)
class Potential:
    """Polynomial potential ``V(x) = sum_k coeffs[k] x**k``.

    Polynomials are holomorphic, so the same object serves real and
    complexified configurations.
    """

    coeffs: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    def __call__(self, x):
        return P.polyval(x, self.coeffs)

    def grad(self, x):
        d = P.polyder(self.coeffs) if len(self.coeffs) > 1 else (0.0,)
        return P.polyval(x, d)

    @classmethod
    def zero(cls):
        return cls((0.0,))

    @classmethod
    def harmonic(cls, omega: float = 1.0, mass: float = 1.0):
        return cls((0.0, 0.0, 0.5 * mass * omega ** 2))

    @classmethod
    def double_well(cls, lam: float = 1.0, v: float = 1.0):
        """``lam * (x^2 - v^2)^2``."""
        return cls((lam * v ** 4, 0.0, -2.0 * lam * v ** 2, 0.0, lam))

    def to_dict(self):
        return {"coeffs": list(self.coeffs)}


@dataclass(frozen=True)
class ActionSpec:
    kind: ActionKind = ActionKind.SCALAR_FIELD
    mode: Mode = Mode.EUCLIDEAN
    mass: float = 1.0
    quartic: float = 0.0
    damping: float = 0.0
    vev: float = 0.0
    potential: Potential = field(default_factory=Potential.zero)

    def __post_init__(self):
        object.__setattr__(self, "kind", ActionKind(self.kind))
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.mass < 0 or self.quartic < 0 or self.damping < 0 or self.vev < 0:
            raise ValueError("mass, quartic, damping and vev must be non-negative")
        if self.mode is Mode.MINKOWSKI and not self.damping > 0:
            raise ValueError("minkowski mode requires damping > 0")

    def site_potential_grad(self, phi):
        """``dU/dphi`` for the field potential."""
        lam, v = self.quartic, self.vev
        return self.mass ** 2 * phi + lam * phi * (phi * phi - v * v)

    def site_potential(self, phi):
        lam, v = self.quartic, self.vev
        return 0.5 * self.mass ** 2 * phi ** 2 + 0.25 * lam * (phi ** 2 - v * v) ** 2

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "mode": self.mode.value,
            "mass": self.mass,
            "quartic": self.quartic,
            "damping": self.damping,
            "vev": self.vev,
            "potential": self.potential.to_dict(),
        }


def _axis_laplacian(phi, axis, periodic, spacing):
    """``sum_{y nbr x along axis} (phi_x - phi_y) / spacing^2`` on the stored block."""
    n = phi.shape[axis]
    out = np.zeros_like(phi)
    if n == 1:
        return out
    if periodic and n > 2:
        out = 2 * phi - np.roll(phi, 1, axis=axis) - np.roll(phi, -1, axis=axis)
    else:
        d = np.diff(phi, axis=axis)
        lo = [slice(None)] * phi.ndim
        hi = [slice(None)] * phi.ndim
        lo[axis] = slice(0, n - 1)
        hi[axis] = slice(1, n)
        out[tuple(lo)] -= d
        out[tuple(hi)] += d
        if periodic:
            # n == 2: both links join the same pair of sites
            out *= 2
    return out / spacing ** 2


def kinetic_terms(block: np.ndarray, geometry: LatticeGeometry):
    """Time and spatial lattice Laplacians of ``block`` (batch axis first)."""
    time_part = _axis_laplacian(block, 1, geometry.boundary[0] is Boundary.PERIODIC,
                                geometry.time_spacing)
    space_part = np.zeros_like(block)
    for i in range(geometry.spatial_dims):
        space_part += _axis_laplacian(block, 2 + i, geometry.boundary[1 + i] is Boundary.PERIODIC,
                                      geometry.spatial_spacing)
    return time_part, space_part


def _check_time_wrap(geometry, present):
    if geometry.boundary[0] is Boundary.PERIODIC and present != geometry.time_extent - 1:
        raise ValueError("periodic time requires the full time extent to exist")


def drift_array(values: np.ndarray, geometry: LatticeGeometry, action: ActionSpec,
                present: int) -> np.ndarray:
    """Drift for every site of a batch ``values[r, t, ...]``.

    Slices beyond ``present`` get zero drift.
    """
    _check_time_wrap(geometry, present)
    block = values[:, : present + 1]
    kt, ks = kinetic_terms(block, geometry)
    out = np.zeros_like(values, dtype=np.result_type(values, float))
    eucl = action.mode is Mode.EUCLIDEAN
    if action.kind is ActionKind.SCALAR_FIELD:
        upot = action.site_potential_grad(block)
        if eucl:
            d = -(kt + ks + upot)
        else:
            d = 1j * (kt - ks - upot)
    else:
        if geometry.spatial_dims != 0:
            raise ValueError("worldline actions need a spatial_dims = 0 geometry")
        m = action.mass
        vpot = action.potential.grad(block)
        if eucl:
            d = -(m * kt + vpot)
        else:
            d = 1j * (m * kt - vpot)
    if action.damping:
        d = d - action.damping * block
    out[:, : present + 1] = d
    return out


def lattice_action(config: np.ndarray, geometry: LatticeGeometry, action: ActionSpec,
                   present: int | None = None):
    """Discretised action of a single configuration ``config[t, ...]``.

    Independent of :func:`drift_array`: links are enumerated explicitly.
    """
    if present is None:
        present = geometry.time_extent - 1
    _check_time_wrap(geometry, present)
    c = config[: present + 1]
    vol = geometry.cell_volume
    eucl = action.mode is Mode.EUCLIDEAN
    s_time = 0.0
    s_space = 0.0
    axes = [(0, geometry.time_spacing, geometry.boundary[0])]
    axes += [(1 + i, geometry.spatial_spacing, geometry.boundary[1 + i])
             for i in range(geometry.spatial_dims)]
    for axis, spacing, bnd in axes:
        n = c.shape[axis]
        if n == 1:
            continue
        links = np.diff(c, axis=axis)
        total = np.sum(links ** 2)
        if bnd is Boundary.PERIODIC:
            first = np.take(c, 0, axis=axis)
            last = np.take(c, n - 1, axis=axis)
            total = total + np.sum((first - last) ** 2)
        term = 0.5 * vol * total / spacing ** 2
        if axis == 0:
            s_time = s_time + term
        else:
            s_space = s_space + term
    if action.kind is ActionKind.SCALAR_FIELD:
        pot = vol * np.sum(action.site_potential(c))
        if eucl:
            return s_time + s_space + pot
        return s_time - s_space - pot
    kin = action.mass * s_time
    pot = vol * np.sum(action.potential(c))
    return kin + pot if eucl else kin - pot


def _site_drift(state: LangevinState, action: ActionSpec, site):
    site = tuple(int(s) for s in site)
    if site[0] > state.present_index:
        raise IndexError(f"slice {site[0]} lies beyond the present {state.present_index}")
    d = drift_array(state.values, state.geometry, action, state.present_index)
    out = d[(slice(None),) + site]
    return out[0] if state.n_replicas == 1 else out


def drift_field(state: LangevinState, action: ActionSpec, site):
    """Field drift at ``site = (t, x1, ..., xn)``."""
    if action.kind is not ActionKind.SCALAR_FIELD:
        raise ValueError("drift_field needs a scalar_field action")
    return _site_drift(state, action, site)


def drift_worldline(state: LangevinState, action: ActionSpec, slice_index: int):
    """Worldline drift at one time slice.

    The drift of a pinned slice is still reported; the integrator is what
    leaves pinned slices alone.
    """
    if action.kind is not ActionKind.WORLDLINE:
        raise ValueError("drift_worldline needs a worldline action")
    return _site_drift(state, action, (slice_index,))


# -- single-time stochastic mechanics -------------------------------------

def _central_derivatives(f: np.ndarray, h: float):
    """First and second derivative, 4th order in the bulk, 2nd order near edges."""
    n = len(f)
    if n < 3:
        raise ValueError("need at least 3 grid points")
    d1 = np.gradient(f, h, edge_order=2)
    d2 = np.empty_like(f)
    d2[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / h ** 2
    if n >= 4:
        d2[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / h ** 2
        d2[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / h ** 2
    else:
        d2[0] = d2[-1] = d2[1]
    if n >= 5:
        d1[2:-2] = (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12 * h)
        d2[2:-2] = (-f[4:] + 16 * f[3:-1] - 30 * f[2:-2] + 16 * f[1:-3] - f[:-4]) / (12 * h ** 2)
    return d1, d2


@dataclass
class NelsonModel:
    """Drift potential ``W`` on a uniform grid with diffusion normalisation ``sigma``.

    The Langevin process ``dx = -W'(x) dt + sqrt(sigma) dB`` has stationary
    density ``exp(-2 W / sigma)``.
    """

    x: np.ndarray
    W: np.ndarray
    sigma: float = 1.0
    ground_energy: float | None = None
    psi0: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.W = np.asarray(self.W, dtype=float)
        if self.x.shape != self.W.shape or self.x.ndim != 1:
            raise ValueError("x and W must be 1-d arrays of equal length")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        h = np.diff(self.x)
        if len(h) and not np.allclose(h, h[0], rtol=1e-9, atol=0):
            raise ValueError("grid must be uniform")
        self._spline = None

    @property
    def spacing(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def V(self) -> np.ndarray:
        return compute_v(self)

    def interior(self, rel_floor: float = 1e-6, edge: int = 2) -> np.ndarray:
        """Mask of grid points where ``W`` is numerically reliable."""
        mask = np.ones(len(self.x), dtype=bool)
        if self.psi0 is not None:
            mask &= np.abs(self.psi0) >= rel_floor * np.abs(self.psi0).max()
        mask[:edge] = False
        if edge:
            mask[-edge:] = False
        return mask

    def drift_spline(self):
        if self._spline is None:
            self._spline = CubicSpline(self.x, self.W).derivative()
        return self._spline


def nelson_drift(x, model: NelsonModel):
    """``-dW/dx`` at ``x`` (scalar or array), spline-interpolated."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < model.x[0]) or np.any(xa > model.x[-1]):
        raise ValueError("position outside the model grid")
    out = -model.drift_spline()(xa)
    return float(out) if np.ndim(out) == 0 else out


def compute_v(model: NelsonModel) -> np.ndarray:
    """Quantum potential ``V = W'^2 / (2 sigma) - W'' / 2`` by central differences."""
    if len(model.W) < 3:
        raise ValueError("need at least 3 grid points")
    d1, d2 = _central_derivatives(model.W, model.spacing)
    return d1 ** 2 / (2 * model.sigma) - 0.5 * d2


def _sinc_dvr_kinetic(n: int, h: float) -> np.ndarray:
    i = np.arange(n)
    d = i[:, None] - i[None, :]
    off = 2.0 * (-1.0) ** d / np.where(d == 0, 1, d) ** 2
    return np.where(d == 0, np.pi ** 2 / 3, off) / (2 * h * h)


def _fourier_kinetic(n: int, h: float) -> np.ndarray:
    k = 2 * np.pi * np.fft.fftfreq(n, d=h)
    f = np.fft.fft(np.eye(n), axis=0)
    return np.real(np.conj(f).T @ np.diag(0.5 * k ** 2) @ f) / n


def hamiltonian_matrix(x, V, sigma: float = 1.0, boundary: str = "box") -> np.ndarray:
    """``-(sigma/2) d^2/dx^2 + V`` on a uniform grid.

    ``box`` uses the sinc discrete-variable representation (hard walls just
    outside the grid); ``periodic`` uses the Fourier Laplacian.
    """
    x = np.asarray(x, dtype=float)
    h = x[1] - x[0]
    n = len(x)
    if boundary == "box":
        kin = _sinc_dvr_kinetic(n, h)
    elif boundary == "periodic":
        kin = _fourier_kinetic(n, h)
    else:
        raise ValueError(f"unknown boundary {boundary!r}")
    return sigma * kin + np.diag(np.asarray(V, dtype=float))


class RiccatiError(RuntimeError):
    pass


def solve_w(x, V, sigma: float = 1.0, boundary: str = "box") -> NelsonModel:
    """Invert the Riccati relation: ``W = -sigma ln psi0``.

    ``psi0`` is the ground state of :func:`hamiltonian_matrix`, normalised to
    unit maximum so ``min W = 0``.  ``compute_v`` of the result reproduces
    ``V - E0``.
    """
    x = np.asarray(x, dtype=float)
    V = np.asarray(V, dtype=float)
    if V.shape != x.shape or len(x) < 3:
        raise ValueError("V must be sampled on the same grid of >= 3 points")
    if not np.all(np.isfinite(V)):
        raise ValueError("V must be finite on the grid")
    H = hamiltonian_matrix(x, V, sigma, boundary)
    evals, evecs = eigh(H, subset_by_index=[0, 1])
    scale = max(1.0, float(np.abs(evals).max()))
    if evals[1] - evals[0] < 1e-10 * scale:
        raise RiccatiError("ground state is degenerate")
    psi = evecs[:, 0]
    psi = psi / psi[np.argmax(np.abs(psi))]
    significant = np.abs(psi) > 1e-10
    if np.any(psi[significant] < 0):
        raise RiccatiError("no nodeless ground state found")
    psi = np.clip(psi, np.finfo(float).tiny, None)
    W = -sigma * np.log(psi)
    return NelsonModel(x, W, sigma, ground_energy=float(evals[0]), psi0=psi)


def nelson_sample(model: NelsonModel, x0, dt: float, n_steps: int, rng,
                  record_every: int = 1) -> np.ndarray:
    """Euler-Maruyama trajectory of ``dx = -W' dt + sqrt(sigma) dB``.

    ``x0`` may be an array of independent walkers.  ``rng`` is one
    generator for all walkers, or a sequence with one generator per walker
    (``x0`` one-dimensional) so each walker's path does not depend on how
    walkers are batched.  Returns the recorded positions with shape
    ``(n_records, *x0.shape)``.  Walkers leaving the grid are reflected
    back at the edge.
    """
    x = np.array(x0, dtype=float, copy=True)
    lo, hi = model.x[0], model.x[-1]
    spline = model.drift_spline()
    amp = np.sqrt(model.sigma * dt)
    per_walker = not isinstance(rng, np.random.Generator)
    if per_walker and (x.ndim != 1 or len(rng) != len(x)):
        raise ValueError("need one generator per walker")
    block = 64
    out = []
    for k in range(n_steps):
        if per_walker:
            row = k % block
            if row == 0:
                draws = np.stack([g.standard_normal(block) for g in rng], axis=1)
            z = draws[row]
        else:
            z = rng.standard_normal(x.shape)
        x = x - dt * spline(x) + amp * z
        x = np.where(x < lo, 2 * lo - x, x)
        x = np.where(x > hi, 2 * hi - x, x)
        if (k + 1) % record_every == 0:
            out.append(x.copy())
    return np.asarray(out)

