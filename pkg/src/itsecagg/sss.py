"""(n, t) Shamir sharing over evaluation points 1..n.

``share_array`` is the workhorse: it shares a whole array of secrets at once
with independent polynomials per entry and returns an ``(n, *shape)`` array
whose row ``i - 1`` holds party ``i``'s shares.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .field import FieldElement, Modulus


class SharingError(ValueError):
    pass


@dataclass(frozen=True)
class ValueShare:
    index: int
    value: FieldElement


def _check_params(n: int, t: int, modulus: Modulus) -> None:
    if not n > t >= 0:
        raise SharingError(f"need n > t >= 0, got n={n}, t={t}")
    if modulus.p <= n:
        raise SharingError("not enough evaluation points")


def share_array(secrets: np.ndarray, n: int, t: int, modulus: Modulus, sampler) -> np.ndarray:
    _check_params(n, t, modulus)
    secrets = np.asarray(secrets, dtype=object)
    p = modulus.p
    coeffs = [sampler.uniform(modulus, secrets.shape) for _ in range(t)]
    out = np.empty((n,) + secrets.shape, dtype=object)
    for i in range(1, n + 1):
        acc = modulus.zeros(secrets.shape)
        for c in reversed(coeffs):
            acc = (acc + c) * i % p
        out[i - 1] = (acc + secrets) % p
    return out


def share(secret: FieldElement, n: int, t: int, sampler) -> list[ValueShare]:
    m = secret.modulus
    vals = share_array(np.array([secret.value], dtype=object), n, t, m, sampler)
    return [ValueShare(i + 1, FieldElement(int(vals[i, 0]), m)) for i in range(n)]


@lru_cache(maxsize=4096)
def lagrange_at_zero(points: tuple[int, ...], p: int) -> tuple[int, ...]:
    """Weights l_i with f(0) = sum l_i f(x_i) for deg f < len(points)."""
    if len(set(points)) != len(points):
        raise SharingError("duplicate share indices")
    weights = []
    for i, xi in enumerate(points):
        num, den = 1, 1
        for j, xj in enumerate(points):
            if i != j:
                num = num * (-xj) % p
                den = den * (xi - xj) % p
        weights.append(num * pow(den, -1, p) % p)
    return tuple(weights)


def reconstruct_array(points: Sequence[int], shares: Sequence[np.ndarray], modulus: Modulus):
    """Interpolate at zero from equally-shaped share arrays."""
    w = lagrange_at_zero(tuple(points), modulus.p)
    acc = 0
    for wi, s in zip(w, shares):
        acc = acc + wi * s
    return acc % modulus.p


def reconstruct(shares: Sequence[ValueShare], t: int) -> FieldElement:
    if len(shares) < t + 1:
        raise SharingError(f"need at least {t + 1} shares, got {len(shares)}")
    m = shares[0].value.modulus
    pts = [s.index for s in shares]
    if len(set(pts)) != len(pts):
        raise SharingError("duplicate share indices")
    val = reconstruct_array(pts, [s.value.value for s in shares], m)
    return FieldElement(int(val), m)


def interpolate_coeffs(points: Sequence[int], values: Sequence, modulus: Modulus) -> list:
    """Coefficients (low to high) of the polynomial through the points.

    Works on any values supporting ring operations, which the view analysis
    relies on.
    """
    p = modulus.p
    k = len(points)
    coeffs = [0] * k
    for i, xi in enumerate(points):
        # basis polynomial prod_{j != i} (x - xj) / (xi - xj)
        basis = [1]
        den = 1
        for j, xj in enumerate(points):
            if j == i:
                continue
            basis = [(a - xj * b) % p for a, b in zip([0] + basis, basis + [0])]
            den = den * (xi - xj) % p
        scale = pow(den, -1, p)
        for m in range(k):
            coeffs[m] = coeffs[m] + values[i] * (basis[m] * scale % p)
    return [c % p for c in coeffs]


def is_consistent(points: Sequence[int], values: Sequence[int], t: int, modulus: Modulus) -> bool:
    """True if the points lie on a polynomial of degree <= t."""
    coeffs = interpolate_coeffs(points, values, modulus)
    return all(c % modulus.p == 0 for c in coeffs[t + 1 :])


def lincomb(
    shares: Sequence[ValueShare],
    coeffs: Sequence[FieldElement],
    offset: FieldElement | None = None,
    index: int | None = None,
) -> ValueShare:
    """Share of sum c_j s_j + offset from shares held at one index."""
    if len(shares) != len(coeffs):
        raise ValueError("one coefficient per share")
    if offset is None and not shares:
        raise ValueError("empty combination needs an offset to fix the field")
    idx = {s.index for s in shares}
    if len(idx) > 1:
        raise SharingError("shares come from different indices")
    m = offset.modulus if offset is not None else shares[0].value.modulus
    acc = m(0) if offset is None else offset
    for s, c in zip(shares, coeffs):
        acc = acc + c * s.value
    if idx:
        index = idx.pop()
    return ValueShare(index or 0, acc)
