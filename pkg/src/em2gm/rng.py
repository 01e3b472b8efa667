"""Deterministic random number utilities.

Everything stochastic in this package flows through a counter-based Philox
generator and a fixed uniform-to-normal convention, so that any statistic is
reproducible bit for bit from its seed, on any machine, regardless of how the
work is scheduled across replicates.

Conventions (documented once, here):

* Uniforms are drawn as ``(k + 0.5) * 2**-53`` with ``k`` a 53-bit integer,
  which lands strictly inside (0, 1) and keeps the inverse normal CDF finite.
* Normals are produced by the inverse-CDF transform ``ndtri(u)`` of those
  uniforms, not by Box-Muller or ziggurat rejection, so the mapping from seed
  to sample is a pure function with no data-dependent consumption.
* Child seeds for replicate fan-out come from ``numpy.random.SeedSequence``
  spawn keys, which gives independent streams indexed by an integer path.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

__all__ = [
    "make_generator",
    "open_uniforms",
    "standard_normals",
    "derive_seed",
]

_INV_2_53 = 2.0 ** -53


def make_generator(seed: int) -> np.random.Generator:
    """Philox generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def open_uniforms(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniform draws strictly inside (0, 1)."""
    k = rng.integers(0, 1 << 53, size=shape, dtype=np.int64)
    return (k + 0.5) * _INV_2_53


def standard_normals(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normal draws via the inverse-CDF convention."""
    return ndtri(open_uniforms(rng, shape))


def derive_seed(master_seed: int, *path: int) -> int:
    """Child seed for the stream at an integer path below ``master_seed``.

    Used for replicate fan-out: ``derive_seed(master, grid_index, replicate,
    stream)`` is stable under any execution order, so parallel sweeps are
    reproducible.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
