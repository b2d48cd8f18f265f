"""Seeded random streams.

Every stochastic component draws from its own PCG64 stream derived from
the network seed, so changing one component never reshuffles another.
"""
import numpy as np

GENERATOR_NAME = "numpy.PCG64"

PLACEMENT = 0
DESTINATIONS = 1
CONTROL = 2
TRAFFIC = 3
CALIBRATION = 4
FLOODS = 5


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))
