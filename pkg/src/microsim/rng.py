"""Named, independently seeded RNG streams.

Every stochastic component of a run (arrival process, each service's
sampler, routing, cold starts, ...) draws from its own stream, derived
deterministically from the run seed and the component name. Adding or
removing one component therefore never perturbs the draws of another,
and two runs with the same seed are bit-identical.
"""

from __future__ import annotations

import hashlib
import random


def stream(seed: int, name: str) -> random.Random:
    """Return an independent generator for component `name` under `seed`."""
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:16], "big"))


def derive_seed(seed: int, name: str) -> int:
    """Derive a child 64-bit seed (for sub-runs such as search probes)."""
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[16:24], "big")
