import hashlib

import numpy as np

# ---------------------------------------------------------
# 🎲 RNG
# ---------------------------------------------------------
# Every generator is numpy's PCG64 seeded with a plain integer, so the same
# seed gives the same stream on any platform numpy supports.
RNG_ALGORITHM = "PCG64"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(seed: int, component: str, index: int = 0) -> int:
    """Sub-seed for one component of a run.

    Derivation: the first 8 bytes (little-endian) of
    blake2b(f"{seed}:{component}:{index}", digest_size=8).
    """
    digest = hashlib.blake2b(f"{int(seed)}:{component}:{int(index)}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")
