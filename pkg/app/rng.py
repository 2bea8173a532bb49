"""
Splittable deterministic random streams.

Every stream is a numpy ``Generator`` driven by the counter-based Philox
bit generator and seeded through a ``SeedSequence``. Child streams are
derived by label via spawn keys, so one pipeline stage never shifts the
draws of another and per-point sweep streams do not depend on execution
order.
"""
import hashlib
import os
from typing import Optional, Union

import numpy as np

from app.errors import ConfigError

SEED_BITS = 64
SEED_MAX = (1 << SEED_BITS) - 1

Label = Union[str, int]


def _label_key(label: Label) -> int:
    """Map a label to a stable 32-bit spawn-key word."""
    if isinstance(label, int):
        if label < 0:
            raise ConfigError(f"integer stream labels must be non-negative, got {label}")
        return label
    # hash() is salted per process; blake2b is stable across runs
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "big")


def entropy_seed() -> int:
    """Draw a fresh 64-bit seed from the operating system."""
    return int.from_bytes(os.urandom(8), "big")


class RandomStream:
    """Single-owner deterministic random stream.

    Two streams built from the same seed and the same chain of split labels
    produce identical draws. A stream must not be shared between threads;
    split one child per task instead.
    """

    def __init__(self, seed: int, spawn_key: tuple[int, ...] = ()):
        if not 0 <= seed <= SEED_MAX:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self._seed = seed
        self._spawn_key = tuple(spawn_key)
        sequence = np.random.SeedSequence(entropy=seed, spawn_key=self._spawn_key)
        self._generator = np.random.Generator(np.random.Philox(sequence))

    def __repr__(self) -> str:
        return f"RandomStream(seed={self._seed}, spawn_key={self._spawn_key})"

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def spawn_key(self) -> tuple[int, ...]:
        return self._spawn_key

    def split(self, *labels: Label) -> "RandomStream":
        """Derive an independent child stream identified by ``labels``."""
        return RandomStream(self._seed, self._spawn_key + tuple(_label_key(lb) for lb in labels))

    def derive_seed(self, *labels: Label) -> int:
        """Derive a standalone 64-bit seed for the child identified by ``labels``."""
        key = self._spawn_key + tuple(_label_key(lb) for lb in labels)
        state = np.random.SeedSequence(entropy=self._seed, spawn_key=key).generate_state(1, dtype=np.uint64)
        return int(state[0])

    def random(self, size: Optional[int] = None):
        """Uniform floats in [0, 1)."""
        return self._generator.random(size)

    def bit(self) -> int:
        return int(self._generator.integers(0, 2))

    def bits(self, size: int) -> np.ndarray:
        """``size`` i.i.d. uniform bits as a uint8 array."""
        return self._generator.integers(0, 2, size=size, dtype=np.uint8)

    def bernoulli(self, p: float, size: int) -> np.ndarray:
        """Boolean mask where each entry is True with probability ``p``."""
        return self._generator.random(size) < p

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def sample_without_replacement(self, population: np.ndarray, k: int) -> np.ndarray:
        """Uniform ``k``-subset of ``population``, returned in ascending order."""
        chosen = self._generator.choice(population, size=k, replace=False)
        return np.sort(chosen)
