"""Counter-based random streams.

Every stochastic routine takes a ``numpy.random.Generator``. Streams are
derived from integer keys through ``SeedSequence`` into a Philox4x64-10
bit generator, so a ``(seed, index)`` pair names the same stream on every
platform and in every worker.
"""

from __future__ import annotations

import numpy as np

RNG_NAME = "numpy.Philox4x64-10/SeedSequence"


def make_rng(*keys: int) -> np.random.Generator:
    if not keys:
        raise ValueError("make_rng needs at least one integer key")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in keys])))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a 63-bit seed for deriving independent sub-streams."""
    return int(rng.integers(0, 2**63 - 1))


def state_to_json(rng: np.random.Generator) -> dict:
    st = rng.bit_generator.state
    inner = st["state"]
    return {
        "bit_generator": st["bit_generator"],
        "counter": [int(v) for v in inner["counter"]],
        "key": [int(v) for v in inner["key"]],
        "buffer": [int(v) for v in st["buffer"]],
        "buffer_pos": int(st["buffer_pos"]),
        "has_uint32": int(st["has_uint32"]),
        "uinteger": int(st["uinteger"]),
    }


def rng_from_json(doc: dict) -> np.random.Generator:
    bg = np.random.Philox()
    bg.state = {
        "bit_generator": doc["bit_generator"],
        "state": {
            "counter": np.array(doc["counter"], dtype=np.uint64),
            "key": np.array(doc["key"], dtype=np.uint64),
        },
        "buffer": np.array(doc["buffer"], dtype=np.uint64),
        "buffer_pos": doc["buffer_pos"],
        "has_uint32": doc["has_uint32"],
        "uinteger": doc["uinteger"],
    }
    return np.random.Generator(bg)
