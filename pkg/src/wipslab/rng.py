"""Counter-based keyed noise.

Every random number used by the library is addressed by a
:class:`NoiseKey` ``(seed, stream, replicate, particle, step)``. The first
four-ish coordinates select a Philox key, and ``particle`` selects the
position inside that key's counter space, so a draw is a pure function of
its key: execution order, batching and chunking cannot change results.

Layout: for a fixed ``(seed, stream, replicate, step)`` the Philox key is
``(seed, stream << 60 | replicate << 32 | step)`` and the ``j``-th of
``width`` coordinates of particle ``i`` is raw 64-bit draw number
``i * width + j`` (counter ``k // 4``, lane ``k % 4``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

_MAX_REPLICATE = 1 << 28
_MAX_STEP = 1 << 32
_TWO53 = 2.0 ** -53


class Stream(enum.IntEnum):
    SYSTEM = 0
    AUXILIARY = 1
    COUPLING = 2
    INITIAL = 3


@dataclass(frozen=True)
class NoiseKey:
    seed: int
    stream: Stream = Stream.SYSTEM
    replicate: int = 0
    particle: int = 0
    step: int = 0

    def with_(self, **changes) -> "NoiseKey":
        fields = {"seed": self.seed, "stream": self.stream, "replicate": self.replicate,
                  "particle": self.particle, "step": self.step}
        fields.update(changes)
        return NoiseKey(**fields)


def philox_key(seed: int, stream: int, replicate: int, step: int) -> np.ndarray:
    if not 0 <= seed < 1 << 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    if not 0 <= replicate < _MAX_REPLICATE:
        raise ValueError(f"replicate index out of range: {replicate}")
    if not 0 <= step < _MAX_STEP:
        raise ValueError(f"step index out of range: {step}")
    word = (int(stream) << 60) | (replicate << 32) | step
    return np.array([seed, word], dtype=np.uint64)


def _raw(key: np.ndarray, start: int, count: int) -> np.ndarray:
    counter = np.zeros(4, dtype=np.uint64)
    counter[0] = start // 4
    bits = Philox(key=key, counter=counter).random_raw(count + start % 4)
    return bits[start % 4:]


def _to_unit(bits: np.ndarray) -> np.ndarray:
    # 53-bit mantissa, centred in its cell: strictly inside (0, 1)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO53


def uniforms(seed: int, stream: int, replicate: int, step: int, n_particles: int,
             width: int, particles=None) -> np.ndarray:
    """Uniform(0,1) block of shape ``(n, width)`` for one replicate and step.

    Row ``r`` holds the draws of particle ``particles[r]`` (default
    ``r``); rows depend only on their own particle index.
    """
    key = philox_key(seed, stream, replicate, step)
    if particles is None:
        bits = _raw(key, 0, n_particles * width)
        return _to_unit(bits).reshape(n_particles, width)
    particles = np.asarray(particles, dtype=np.int64)
    if particles.size == 0:
        return np.empty((0, width))
    top = int(particles.max()) + 1
    block = _to_unit(_raw(key, 0, top * width)).reshape(top, width)
    return block[particles]


def uniforms_batch(seed: int, stream: int, replicates, step: int, n_particles: int,
                   width: int, particles=None) -> np.ndarray:
    reps = np.atleast_1d(np.asarray(replicates, dtype=np.int64))
    out = np.empty((reps.size, n_particles if particles is None else len(particles), width))
    for r, rep in enumerate(reps):
        out[r] = uniforms(seed, stream, int(rep), step, n_particles, width, particles)
    return out


def draw_uniform(key: NoiseKey, width: int) -> np.ndarray:
    """The ``width`` uniforms addressed by a single key (one particle)."""
    pk = philox_key(key.seed, key.stream, key.replicate, key.step)
    return _to_unit(_raw(pk, key.particle * width, width))


def normal_from_uniform(u: np.ndarray) -> np.ndarray:
    return ndtri(u)
