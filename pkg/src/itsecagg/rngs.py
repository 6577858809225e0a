"""Seedable, splittable randomness.

Every consumer asks for a stream by a purpose label plus integer ids, so the
draws a party sees never depend on the order other parties were served.
"""

from __future__ import annotations

import math
import zlib

import numpy as np

from .field import Modulus


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def stream(seed: int, *key) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(_key(k) for k in key))
    return np.random.default_rng(ss)


class FieldSampler:
    """Uniform field elements from a numpy generator.

    Moduli below 2^63 use exact integer sampling; larger ones draw 64 extra
    bits and reduce, which leaves a statistical distance below 2^-64.
    """

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def uniform(self, modulus: Modulus, shape) -> np.ndarray:
        shape = (int(shape),) if np.ndim(shape) == 0 else tuple(int(s) for s in shape)
        count = math.prod(shape)
        p = modulus.p
        if p < 1 << 63:
            vals = self.rng.integers(0, p, size=count, dtype=np.int64).tolist()
        else:
            width = (p.bit_length() + 64 + 7) // 8
            raw = self.rng.bytes(width * count)
            vals = [int.from_bytes(raw[i : i + width], "big") % p for i in range(0, width * count, width)]
        return np.array(vals, dtype=object).reshape(shape)

    def nonzero(self, modulus: Modulus) -> int:
        while True:
            v = self.uniform(modulus, 1)[0]
            if v != 0:
                return v
