"""Normalization, unbiased stochastic quantization and field embedding of
model updates."""

from __future__ import annotations

import numpy as np

from .field import Modulus, embed_array, lift_array


class DegenerateUpdate(ValueError):
    """The update has zero norm and cannot be normalized."""


def normalize(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("update must be a non-empty vector")
    if not np.all(np.isfinite(u)):
        raise ValueError("update has non-finite entries")
    norm = np.linalg.norm(u)
    if norm == 0:
        raise DegenerateUpdate("degenerate update")
    return u / norm


def quantize(u: np.ndarray, q: int, rng: np.random.Generator) -> np.ndarray:
    """Round each coordinate of ``q * u`` up or down at random so the
    expectation equals ``q * u``.  Returns int64 values in [-q, q]."""
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(u) > 1.0):
        raise ValueError("out of range")
    scaled = q * u
    low = np.floor(scaled)
    frac = scaled - low
    up = rng.random(u.shape) < frac
    out = low.astype(np.int64) + up
    return np.clip(out, -q, q)


def embed(qu: np.ndarray, modulus: Modulus) -> np.ndarray:
    return embed_array(qu, modulus)


def deembed(values: np.ndarray, modulus: Modulus) -> np.ndarray:
    return lift_array(values, modulus).astype(np.int64)


def dequantize_ratio(num: int, den: int, q: int) -> float:
    """Real value of the decoded fraction num/den.

    The aggregate numerator carries one extra factor q (the quantized update)
    relative to the denominator, hence the final division by q.
    """
    if den == 0:
        raise ZeroDivisionError("zero denominator")
    return num / den / q
