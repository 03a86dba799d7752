"""Reproducible, splittable random number streams.

All Monte Carlo code in this package draws from numpy Generators backed by
the Philox counter-based bit generator.  Replica r of a run with master seed
s uses the stream derived from ``SeedSequence(s, spawn_key=(r,))``, so the
set of streams is a pure function of (seed, replica count) and independent
of scheduling or worker layout.
"""
from __future__ import annotations

import numpy as np

GENERATOR_ID = "philox4x64-seedseq-spawnkey"


def master_stream(seed: int) -> np.random.Generator:
    """Stream for single-shot (non-replicated) sampling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def replica_stream(seed: int, replica: int) -> np.random.Generator:
    """Derived stream for one replica; disjoint across replica indices."""
    ss = np.random.SeedSequence(seed, spawn_key=(replica,))
    return np.random.Generator(np.random.Philox(ss))


def replica_streams(seed: int, n: int) -> list[np.random.Generator]:
    return [replica_stream(seed, r) for r in range(n)]
