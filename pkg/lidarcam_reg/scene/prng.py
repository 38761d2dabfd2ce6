"""
SplitMix64 counter-based generator
Published constants, so any reimplementation reproduces the same streams
"""

from typing import Union

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
MASK64 = (1 << 64) - 1
INV_2_53 = 1.0 / (1 << 53)


def mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on a uint64 array"""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * MIX1
        z = (z ^ (z >> np.uint64(27))) * MIX2
    return z ^ (z >> np.uint64(31))


def hash_ints(seed: int, values: np.ndarray, salt: int = 0) -> np.ndarray:
    """Stateless 64-bit hash of integer keys (used for procedural textures)"""
    keys = np.asarray(values, dtype=np.int64).view(np.uint64)
    base = np.uint64((seed * 0x9E3779B97F4A7C15 + salt * 0xD1B54A32D192ED03) & MASK64)
    with np.errstate(over="ignore"):
        return mix64(mix64(keys + base) ^ base)


class SplitMix64:
    """
    Stream i of the generator is mix64(seed + (i + 1)·γ)

    Every draw advances the counter, so a fixed call sequence yields the
    same numbers on every platform.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.counter = 0

    def next_u64(self, n: int = 1) -> np.ndarray:
        steps = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            states = np.uint64(self.seed) + steps * GAMMA
        return mix64(states)

    def random(self, n: int = 1) -> np.ndarray:
        """Uniform doubles in [0, 1) from the top 53 bits"""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * INV_2_53

    def uniform(self, low: float, high: float, n: int = 1) -> np.ndarray:
        return low + (high - low) * self.random(n)

    def normal(self, n: int = 1) -> np.ndarray:
        """Standard normals via Box-Muller (two uniforms per sample)"""
        u = self.random(2 * n).reshape(n, 2)
        radius = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
        return radius * np.cos(2.0 * np.pi * u[:, 1])

    def sample_distinct(self, population: int, k: int) -> np.ndarray:
        """k distinct indices from range(population) by partial Fisher-Yates"""
        if k > population:
            raise ValueError(f"cannot draw {k} distinct items from {population}")
        pool = {}
        draws = self.random(k)
        out = np.empty(k, dtype=np.int64)
        for i in range(k):
            j = i + min(int(draws[i] * (population - i)), population - i - 1)
            out[i] = pool.get(j, j)
            pool[j] = pool.get(i, i)
        return out

    def fork(self, stream: Union[int, str]) -> "SplitMix64":
        """Independent child generator for a named or numbered substream"""
        if isinstance(stream, str):
            data, folded = stream.encode("utf-8"), 0
            for i in range(0, len(data), 8):
                chunk = int.from_bytes(data[i:i + 8].ljust(8, b"\0"), "little")
                folded = int(mix64(np.array([folded ^ chunk], dtype=np.uint64))[0])
            stream = folded
        child = mix64(np.array([(self.seed ^ (int(stream) * 0xD1B54A32D192ED03)) & MASK64],
                               dtype=np.uint64))
        return SplitMix64(int(child[0]))
