"""
Seeded Random Streams
One deterministic random source per scenario, split into named sub-streams
"""

import zlib
from typing import Dict

import numpy as np


class ScenarioRandom:
    """
    Deterministic random source for one scenario.

    Each behavior draws from its own named sub-stream, so switching a behavior
    off (or drawing more often in one of them) leaves the draws of the others
    untouched. Sub-streams are derived from the base seed and a stable hash of
    the stream name.
    """

    STREAMS = ("spawn", "inflow", "exit", "merge", "schedule", "lane_change", "warmup")

    def __init__(self, seed: int):
        """
        Initialize the scenario random source

        Args:
            seed: Non-negative base seed of the scenario
        """
        if seed < 0:
            raise ValueError(f"Seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self._streams: Dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        """
        Get (and lazily create) a named sub-stream

        Args:
            name: Sub-stream name

        Returns:
            numpy Generator dedicated to that name
        """
        generator = self._streams.get(name)
        if generator is None:
            key = zlib.crc32(name.encode("utf-8"))
            sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(key,))
            generator = np.random.Generator(np.random.PCG64(sequence))
            self._streams[name] = generator
        return generator

    def random(self, name: str) -> float:
        """Uniform draw in [0, 1) from the named stream"""
        return float(self.stream(name).random())

    def uniform(self, name: str, low: float, high: float) -> float:
        return float(self.stream(name).uniform(low, high))

    def normal(self, name: str, mean: float, sigma: float) -> float:
        return float(self.stream(name).normal(mean, sigma))
