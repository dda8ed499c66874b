"""Index-addressed normal streams.

Every block of variates is drawn from its own generator keyed by
(seed, purpose, *indices), so a variate depends only on the seed and its
address, never on evaluation order or on how many other blocks were drawn.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


def _key_part(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    k = int(k)
    if k < 0:
        raise ValueError("stream indices must be nonnegative")
    return k


@dataclass(frozen=True)
class SeededStream:
    seed: int

    def generator(self, *key) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1),
                                    spawn_key=tuple(_key_part(k) for k in key))
        return np.random.Generator(np.random.PCG64(ss))

    def normals(self, *key, size) -> np.ndarray:
        """Standard normals addressed by ``key`` (purpose tag first, then indices)."""
        return self.generator(*key).standard_normal(size)

    def replica(self, index: int) -> "ReplicaStream":
        return ReplicaStream(self, index)


@dataclass(frozen=True)
class ReplicaStream:
    """View of a master stream with the replica index prepended to every key."""

    parent: SeededStream
    index: int

    @property
    def seed(self) -> int:
        return self.parent.seed

    def normals(self, tag, *key, size) -> np.ndarray:
        return self.parent.normals(tag, "replica", self.index, *key, size=size)
