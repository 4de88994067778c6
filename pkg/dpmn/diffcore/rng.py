# dpmn/diffcore/rng.py
'''Seeded counter-based random streams'''

import zlib
from dataclasses import dataclass

import numpy as np


def _key_int(key: int | str) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key)


@dataclass(frozen=True)
class Rng:
    """Philox stream addressed by (seed, key path); identical inputs give identical bits."""
    seed: int
    key: tuple[int, ...] = ()
    algorithm: str = "philox"

    def child(self, *keys: int | str) -> "Rng":
        return Rng(self.seed, self.key + tuple(_key_int(k) for k in keys), self.algorithm)

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(sequence))

    def derive_seed(self, *keys: int | str) -> int:
        """A 63-bit integer seed for a child stream, e.g. to record per-sample seeds."""
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.child(*keys).key)
        high, low = sequence.generate_state(2, dtype=np.uint32)
        return ((int(high) << 32) | int(low)) >> 1
