"""Seed handling shared by all simulators."""

import numpy as np


def as_generator(rng):
    """Return a ``numpy.random.Generator`` for ``rng``.

    Accepts an existing generator, a ``SeedSequence`` or anything
    ``np.random.default_rng`` accepts (int seeds, None).
    """
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def spawn(rng, n):
    """Split ``rng`` into ``n`` statistically independent child generators."""
    return as_generator(rng).spawn(n)


def chunk_seeds(seed, n_chunks):
    """Deterministic per-chunk seed sequences derived from an integer seed.

    Chunk ``k`` always gets the same stream regardless of how chunks are
    distributed over workers.
    """
    return np.random.SeedSequence(seed).spawn(n_chunks)
