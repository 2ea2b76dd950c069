"""Deterministic random-stream derivation.

All randomness in the package flows from numpy ``SeedSequence`` trees feeding
counter-based Philox generators.  The derivation is fixed: a seed spawns an
ordered list of children, and each consumer takes the child at a documented
position.  This makes every experiment a pure function of its top-level seed
and lets independent components (particles, replications, controllers) draw
from non-overlapping streams without coordination.
"""

from __future__ import annotations

import numpy as np


def generator(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Philox generator for a single seed or an already-spawned sequence."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def spawn_generators(seed: int | np.random.SeedSequence, n: int) -> list[np.random.Generator]:
    """``n`` independent Philox generators derived from ``seed`` in order."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.Philox(child)) for child in ss.spawn(n)]


def derive_seeds(seed: int | np.random.SeedSequence, n: int) -> list[int]:
    """``n`` independent 64-bit child seeds of ``seed`` (stable derivation)."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [int(child.generate_state(1, np.uint64)[0]) for child in ss.spawn(n)]
