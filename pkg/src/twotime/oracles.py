"""Exact and brute-force references.

Nothing here touches the Langevin engine; the only shared ingredient is the
definition of the lattice action.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.linalg import eigh

from .lattice import Boundary, LatticeGeometry


def lattice_momenta(geometry: LatticeGeometry) -> np.ndarray:
    """All lattice momenta ``(p_t, p_x1, ...)`` in storage order, shape ``(N, n+1)``."""
    axes = [2 * np.pi * np.fft.fftfreq(e, d=s) for e, s in zip(geometry.shape, geometry.spacings)]
    return np.array(list(itertools.product(*axes)))


def free_field_propagator_exact(geometry: LatticeGeometry, mass: float) -> tuple[np.ndarray, np.ndarray]:
    """``G(p) = 1 / (sum_mu (2 - 2 cos p_mu a_mu) / a_mu^2 + m^2)`` for every lattice momentum.

    Returns ``(momenta, G)``; ``G`` has the lattice shape, indexed like
    ``numpy.fft.fftn`` output.
    """
    if any(b is not Boundary.PERIODIC for b in geometry.boundary):
        raise ValueError("momentum-space propagator needs periodic boundaries on all axes")
    if mass <= 0:
        raise ValueError("zero mode is singular for mass <= 0")
    denom = np.full(geometry.shape, mass ** 2, dtype=float)
    for axis, (extent, a) in enumerate(zip(geometry.shape, geometry.spacings)):
        p = 2 * np.pi * np.fft.fftfreq(extent, d=a)
        sh = [1] * len(geometry.shape)
        sh[axis] = extent
        denom = denom + ((2 - 2 * np.cos(p * a)) / a ** 2).reshape(sh)
    return lattice_momenta(geometry), 1.0 / denom


def ho_correlator_exact(omega: float, tau, time_spacing: float | None = None,
                        mass: float = 1.0, hbar: float = 1.0):
    """Euclidean oscillator two-point function ``<x(0) x(tau)>``.

    Continuum ``hbar/(2 m omega) exp(-omega tau)``; with ``time_spacing`` the
    infinite-lattice result for the nearest-neighbour action,
    ``a exp(-W tau) / (2 m sinh(W a))`` with ``cosh(W a) = 1 + (omega a)^2 / 2``.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be non-negative")
    if time_spacing is None:
        out = hbar / (2 * mass * omega) * np.exp(-omega * tau)
    else:
        a = time_spacing
        w = np.arccosh(1 + 0.5 * (omega * a) ** 2) / a
        out = hbar * a * np.exp(-w * tau) / (2 * mass * np.sinh(w * a))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class OUStationary:
    """Stationary law of ``dx = -k x dt + sqrt(2 D) dB``."""

    k: float
    D: float

    @property
    def variance(self) -> float:
        return self.D / self.k

    def autocorrelation(self, tau):
        return np.exp(-self.k * np.asarray(tau, dtype=float))

    def tau_int_steps(self, langevin_step: float) -> float:
        """Integrated autocorrelation time of ``x`` in steps, leading order."""
        return 1.0 / (self.k * langevin_step)

    def euler_variance(self, langevin_step: float) -> float:
        """Exact stationary variance of the Euler-Maruyama discretisation."""
        return self.D / (self.k * (1 - 0.5 * self.k * langevin_step))


def ou_stationary(k: float, D: float) -> OUStationary:
    if k <= 0 or D < 0:
        raise ValueError("need k > 0 and D >= 0")
    return OUStationary(k, D)


class SpectrumError(RuntimeError):
    pass


@dataclass
class TransferResult:
    x: np.ndarray
    energies: np.ndarray
    states: np.ndarray
    time_spacing: float

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def psi0(self) -> np.ndarray:
        return self.states[:, 0]

    def correlator(self, tau, op=None):
        """``<op(0) op(tau)>`` from the spectral sum (``op = x`` by default)."""
        o = self.x if op is None else op(self.x)
        amp = self.states[:, 0] @ (o[:, None] * self.states)
        gaps = self.energies - self.energies[0]
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        out = (np.abs(amp[None, :]) ** 2 * np.exp(-np.outer(tau, gaps))).sum(axis=1)
        return out if out.size > 1 else float(out[0])


def transfer_matrix_ground_state(x, V, time_spacing: float, mass: float = 1.0,
                                 hbar: float = 1.0, n_states: int | None = None) -> TransferResult:
    """Dense diagonalisation of the Euclidean transfer operator on a grid.

    Kernel ``sqrt(m/(2 pi hbar a)) exp(-m (x-y)^2/(2 hbar a) - a (V(x)+V(y))/(2 hbar)) dx``,
    the exact one-step propagator of the nearest-neighbour lattice action.
    """
    x = np.asarray(x, dtype=float)
    V = np.asarray(V, dtype=float)
    if len(x) > 2048:
        raise ValueError("grid larger than 2048 points")
    a = time_spacing
    h = x[1] - x[0]
    dx = x[:, None] - x[None, :]
    kern = np.sqrt(mass / (2 * np.pi * hbar * a)) * np.exp(
        -mass * dx ** 2 / (2 * hbar * a) - a * (V[:, None] + V[None, :]) / (2 * hbar)) * h
    lam, vec = eigh(kern)
    lam, vec = lam[::-1], vec[:, ::-1]
    k = len(x) if n_states is None else n_states
    lam, vec = lam[:k], vec[:, :k]
    if not lam[0] > 0 or not np.all(np.isfinite(lam)):
        raise SpectrumError("transfer matrix has no positive leading eigenvalue")
    keep = lam > lam[0] * 1e-300
    lam, vec = lam[keep], vec[:, keep]
    psi0 = vec[:, 0] * np.sign(vec[np.argmax(np.abs(vec[:, 0])), 0])
    if np.any(psi0 < -1e-8 * psi0.max()):
        raise SpectrumError("leading eigenvector has nodes")
    vec[:, 0] = psi0
    energies = -hbar * np.log(lam) / a
    return TransferResult(x, energies, vec, a)


def free_field_slice_variance(geometry: LatticeGeometry, mass: float, hbar: float = 1.0,
                              time_extent: int = 256) -> float:
    """Single-site variance of one time slice of the free field, by dense inversion.

    The time direction is made periodic and long so the slice sees the
    vacuum; the lattice action's quadratic form is built site by site.
    """
    geo = LatticeGeometry(geometry.spatial_dims, geometry.spatial_extent, geometry.spatial_spacing,
                          time_extent, geometry.time_spacing, Boundary.PERIODIC)
    shape = geo.shape
    n = int(np.prod(shape))
    idx = np.arange(n).reshape(shape)
    vol = geo.cell_volume
    K = np.zeros((n, n))
    K[np.arange(n), np.arange(n)] += vol * mass ** 2
    for axis, a in enumerate(geo.spacings):
        nb = np.roll(idx, -1, axis=axis).ravel()
        i = idx.ravel()
        c = vol / a ** 2
        if shape[axis] == 1:
            continue
        np.add.at(K, (i, i), c)
        np.add.at(K, (nb, nb), c)
        np.add.at(K, (i, nb), -c)
        np.add.at(K, (nb, i), -c)
    cov = hbar * np.linalg.inv(K)
    return float(np.mean(np.diag(cov)))


def kramers_time(curvature_min: float, curvature_saddle: float, barrier: float,
                 diffusion: float) -> float:
    """Mean escape time for ``dx = -U'(x) dt + sqrt(2 D) dB`` over a barrier ``barrier``."""
    return 2 * np.pi / np.sqrt(curvature_min * abs(curvature_saddle)) * np.exp(barrier / diffusion)


class ReferenceKind(str, Enum):
    FREE_FIELD_PROPAGATOR = "free_field_propagator"
    HO_CORRELATOR = "ho_correlator"
    OU_STATIONARY = "ou_stationary"
    TRANSFER_MATRIX = "transfer_matrix"


@dataclass
class ExactReference:
    """Named oracle with its parameters; ``table()`` gives exportable rows."""

    kind: ReferenceKind
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = ReferenceKind(self.kind)
        for key in ("mass", "omega", "k", "time_spacing"):
            if key in self.params and not self.params[key] > 0:
                raise ValueError(f"{key} must be positive")

    def table(self) -> tuple[list[str], list[list]]:
        p = self.params
        if self.kind is ReferenceKind.FREE_FIELD_PROPAGATOR:
            geo = p["geometry"]
            mom, g = free_field_propagator_exact(geo, p["mass"])
            cols = [f"p{i}" for i in range(mom.shape[1])] + ["G"]
            return cols, [list(row) + [val] for row, val in zip(mom.tolist(), g.ravel().tolist())]
        if self.kind is ReferenceKind.HO_CORRELATOR:
            taus = np.asarray(p.get("taus", np.arange(0, 4.01, 0.25)))
            vals = ho_correlator_exact(p["omega"], taus, p.get("time_spacing"))
            return ["tau", "C"], [[t, v] for t, v in zip(taus.tolist(), np.atleast_1d(vals).tolist())]
        if self.kind is ReferenceKind.OU_STATIONARY:
            ou = ou_stationary(p["k"], p["D"])
            taus = np.asarray(p.get("taus", np.linspace(0, 5 / p["k"], 21)))
            return ["tau", "acf", "variance"], [[t, a, ou.variance] for t, a in
                                                zip(taus.tolist(), ou.autocorrelation(taus).tolist())]
        x = np.asarray(p["x"])
        res = transfer_matrix_ground_state(x, p["V"], p["time_spacing"], p.get("mass", 1.0))
        return ["x", "psi0"], [[a, b] for a, b in zip(x.tolist(), res.psi0.tolist())]


def export_csv(path, columns, rows):
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
