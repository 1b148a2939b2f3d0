"""Deterministic RNG sub-streams.

Every randomized stage of the pipeline draws from its own generator,
derived from the user seed plus a fixed integer path that names the
stage (and, where relevant, the hypothesis index, replicate index, or
draw batch).  Two consequences:

- results are reproducible from the seed alone, regardless of thread
  count or evaluation order, and
- unrelated stages never share a stream, so adding draws to one stage
  cannot shift the values of another.
"""
from __future__ import annotations

import numpy as np

# Stage tags.  These are part of the reproducibility contract: changing
# them changes every seeded result, so treat them as frozen constants.
GLOBAL_DRAWS = 1      # Gaussian null draws for the global test
MARGINAL_DRAWS = 2    # per-hypothesis Gaussian null draws (tag, q)
RADEMACHER = 3        # sign multipliers for the distributed sampler
DATASET = 4           # simulated data, one child per replicate
KMEANS = 5            # region partition initialization
EXPERIMENT = 6        # per-replicate test seeds inside an experiment


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the sub-stream identified by ``(seed, *path)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.default_rng(ss)
