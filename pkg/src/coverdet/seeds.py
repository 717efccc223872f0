"""Deterministic per-stage seed derivation.

Every stochastic stage derives its own seed from (master_seed, stage_name)
via SHA-256, so e.g. changing how evaluation batches are drawn cannot
perturb the training trajectory. Python's builtin hash() is salted per
process and must never be used here.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 63) - 1


def derive_seed(master_seed: int, *stage: object) -> int:
    """Derive a reproducible 63-bit seed from a master seed and stage labels."""
    text = ":".join([str(int(master_seed))] + [str(s) for s in stage])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & _MASK


def rng_for(master_seed: int, *stage: object) -> np.random.Generator:
    """Generator seeded for one named stage."""
    return np.random.default_rng(derive_seed(master_seed, *stage))
