"""
Seedable random streams.

Every stream is numpy's Philox4x64 counter-based generator. A child stream is
keyed by ``(seed, crc32(name))`` through ``numpy.random.SeedSequence``, so the
same seed and name reproduce the same draws on any platform.
"""

import zlib
from typing import Tuple

import numpy as np

from .autodiff import Tensor


class Rng:
    """A named, reproducible random stream."""

    def __init__(self, seed: int, path: Tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError(f"Seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self.path = tuple(path)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.Philox(sequence))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"

    def spawn(self, name: str) -> "Rng":
        """Independent child stream; does not advance this one."""
        return Rng(self.seed, self.path + (zlib.crc32(name.encode("utf-8")),))

    def normal(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self.generator.uniform(low, high, shape)

    def integers(self, low: int, high: int, size=None):
        return self.generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)


def gaussian_sample(rng: Rng, shape) -> Tensor:
    """I.i.d. standard normal draws as a constant tensor."""
    return Tensor(rng.normal(shape))
