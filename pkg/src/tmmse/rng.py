"""Named, counter-derived random streams.

Every random quantity in a run is drawn from a stream identified by a name
and an integer index tuple, derived from a single root seed. Streams are
independent of each other and of the order in which they are requested, so
adding a scheme or changing the worker count never perturbs existing draws.
"""

from __future__ import annotations

import zlib

import numpy as np


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Return the generator for stream ``name`` at ``index`` under ``seed``."""
    key = (_name_key(name),) + tuple(int(i) for i in index)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def complex_normal(rng: np.random.Generator, shape, scale: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with variance ``scale``."""
    std = np.sqrt(scale / 2.0)
    return std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
