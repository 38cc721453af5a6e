"""Keyed counter-based random streams.

Every draw is a pure function of ``(seed, replicate, purpose, time, i, j)``.
The key is pushed through a SplitMix64-style avalanche hash, so the value for
a given key never depends on how many other draws were made, in which order,
or in which process.  This is what lets the particle system and its coupled
mean-field copy read *the same* noise and edge uniforms, and what makes
parallel runs bit-identical to serial ones.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

__all__ = ["Purpose", "RngStream", "hash_keys"]

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_U64 = np.uint64


class Purpose(enum.IntEnum):
    INIT_LATENT = 1
    NOISE = 2
    EDGE = 3
    SAMPLE = 4


def _mix_int(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U64(30))) * _U64(_M1)
    z = (z ^ (z >> _U64(27))) * _U64(_M2)
    return z ^ (z >> _U64(31))


def _combine_int(h: int, x: int) -> int:
    return _mix_int(h ^ _mix_int(x + _GOLDEN))


def _combine(h, x: np.ndarray) -> np.ndarray:
    return _mix(h ^ _mix(x + _U64(_GOLDEN)))


def _prefix(*parts: int) -> int:
    h = _mix_int(_GOLDEN)
    for p in parts:
        if p < 0:
            raise ValueError(f"key components must be nonnegative, got {p}")
        h = _combine_int(h, int(p))
    return h


def hash_keys(prefix_parts: tuple[int, ...], i, j=None) -> np.ndarray:
    """Hash a scalar key prefix plus broadcast index arrays to uint64."""
    i = np.asarray(i, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _combine(_U64(_prefix(*prefix_parts)), i)
        if j is not None:
            h = _combine(h, np.asarray(j, dtype=np.uint64))
    return h


def _to_unit(h: np.ndarray) -> np.ndarray:
    # 53 high bits, shifted to the open interval (0, 1)
    return ((h >> _U64(11)).astype(np.float64) + 0.5) * (1.0 / (1 << 53))


@dataclass(frozen=True)
class RngStream:
    """Addressable uniform/normal source for one ``(seed, replicate)`` cell."""

    seed: int
    replicate: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= _MASK:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.replicate < 0:
            raise ValueError("replicate must be nonnegative")

    def uniform(self, purpose: Purpose, time: int, i, j=None) -> np.ndarray:
        """Uniforms in (0, 1) for the broadcast index arrays ``i`` (and ``j``)."""
        parts = (self.seed, self.replicate, int(purpose), time)
        return _to_unit(hash_keys(parts, i, j))

    def normal(self, purpose: Purpose, time: int, i, j=None) -> np.ndarray:
        return ndtri(self.uniform(purpose, time, i, j))

    def pair_uniforms(self, time: int, n: int) -> np.ndarray:
        """Symmetric ``n x n`` edge uniforms keyed by ``(time, min(i,j), max(i,j))``.

        The diagonal is set to 0 so that ``U < p`` holds for any ``p > 0``;
        callers overwrite it with the unit self-loop anyway.
        """
        iu, ju = np.triu_indices(n, k=1)
        u = np.zeros((n, n))
        vals = self.uniform(Purpose.EDGE, time, iu, ju)
        u[iu, ju] = vals
        u[ju, iu] = vals
        return u

    def latent_normals(self, purpose: Purpose, time: int, agents, d: int) -> np.ndarray:
        """Normals shaped ``(len(agents), d)`` keyed by ``(time, agent, coordinate)``."""
        agents = np.asarray(agents, dtype=np.int64)
        return self.normal(purpose, time, agents[:, None], np.arange(d)[None, :])
