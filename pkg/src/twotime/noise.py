"""Discretised Markov noise with counter-based, replica-parallel streams.

Every draw is a pure function of ``(master_seed, replica, purpose, step,
site)``.  A stream key is derived from :class:`numpy.random.SeedSequence`;
the Philox counter's second word holds the step-block index, so any block
of steps can be regenerated in isolation without replaying the stream.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .lattice import LatticeGeometry

BLOCK_STEPS = 64


def purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


@lru_cache(maxsize=4096)
def stream_key(master_seed: int, replica: int, purpose: str) -> tuple[int, int]:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(replica), purpose_code(purpose)))
    k = ss.generate_state(2, dtype=np.uint64)
    return int(k[0]), int(k[1])


def counter_generator(master_seed: int, replica: int, purpose: str, counter: int) -> np.random.Generator:
    """Generator positioned at ``counter`` within the keyed stream."""
    key = np.array(stream_key(master_seed, replica, purpose), dtype=np.uint64)
    bitgen = np.random.Philox(key=key, counter=np.array([0, int(counter), 0, 0], dtype=np.uint64))
    return np.random.Generator(bitgen)


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian white noise of the Langevin equation.

    ``variance`` is the per-site variance of the discretised noise,
    ``2 hbar / (a^n a_t dt)``, so that one Euler step adds an increment of
    variance ``2 hbar dt / (a^n a_t)``.
    """

    hbar: float
    langevin_step: float
    variance: float
    master_seed: int = 0
    stream: tuple[int, str] = (0, "langevin")

    def __post_init__(self):
        if not self.langevin_step > 0:
            raise ValueError("langevin_step must be positive")
        if not self.hbar > 0 or not self.variance > 0:
            raise ValueError("hbar and derived variance must be positive")

    @classmethod
    def for_geometry(cls, geometry: LatticeGeometry, langevin_step: float, hbar: float = 1.0,
                     master_seed: int = 0, stream: tuple[int, str] = (0, "langevin")) -> "NoiseSpec":
        if not langevin_step > 0:
            raise ValueError("langevin_step must be positive")
        var = 2.0 * hbar / (geometry.cell_volume * langevin_step)
        return cls(hbar, langevin_step, var, int(master_seed), tuple(stream))

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))

    def with_replica(self, replica: int) -> "NoiseSpec":
        return NoiseSpec(self.hbar, self.langevin_step, self.variance, self.master_seed,
                         (int(replica), self.stream[1]))

    def to_dict(self):
        return {"hbar": self.hbar, "langevin_step": self.langevin_step, "variance": self.variance,
                "master_seed": self.master_seed, "stream": list(self.stream)}


def noise_block(shape: tuple[int, ...], spec: NoiseSpec, block: int, replica: int | None = None,
                purpose: str | None = None) -> np.ndarray:
    """Standard-normal draws for steps ``block*BLOCK_STEPS ...``, unit variance."""
    rep = spec.stream[0] if replica is None else replica
    g = counter_generator(spec.master_seed, rep, purpose or spec.stream[1], block)
    return g.standard_normal((BLOCK_STEPS,) + tuple(shape))


def sample_noise(geometry: LatticeGeometry, spec: NoiseSpec, step_index: int,
                 replica: int | None = None) -> np.ndarray:
    """Noise field for one step, variance ``spec.variance`` at every allocated site."""
    block, row = divmod(int(step_index), BLOCK_STEPS)
    return spec.std * noise_block(geometry.shape, spec, block, replica)[row]


class NoiseCache:
    """Per-replica cache of the current noise block (unit variance)."""

    def __init__(self, shape, spec: NoiseSpec, replica_ids, purpose: str | None = None):
        self.shape = tuple(shape)
        self.spec = spec
        self.replica_ids = tuple(replica_ids)
        self.purpose = purpose
        self._block = None
        self._data = None

    def unit(self, step_index: int) -> np.ndarray:
        block, row = divmod(int(step_index), BLOCK_STEPS)
        if block != self._block:
            self._data = np.stack([noise_block(self.shape, self.spec, block, r, self.purpose)
                                   for r in self.replica_ids], axis=1)
            self._block = block
        return self._data[row]
