"""Deterministic seed derivation.

One master seed reproduces a whole pipeline.  Stage seeds are derived by a
counter scheme: stage ``k`` gets the first word of
``SeedSequence([master, k])``.  Per-realization streams inside a stage use
``SeedSequence([stage_seed, realization_index])`` the same way, so
realizations can be generated in any order (or in parallel) with identical
results.
"""

from __future__ import annotations

import numpy as np

# Counter positions of the pipeline stages under the master seed.
STAGE_COUNTERS = {
    "generation": 0,
    "surrogate": 1,
    "split": 2,
    "init": 3,
    "shuffle": 4,
}


def derived_seed(seed: int, counter: int) -> int:
    """Child seed for (seed, counter), stable across processes."""
    ss = np.random.SeedSequence([int(seed), int(counter)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stage_seed(master_seed: int, stage: str) -> int:
    if stage not in STAGE_COUNTERS:
        raise KeyError(f"unknown pipeline stage {stage!r}")
    return derived_seed(master_seed, STAGE_COUNTERS[stage])


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent RNG stream for realization ``index`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))
