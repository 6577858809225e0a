"""Prime-field arithmetic, signed embedding, modulus selection and rational
reconstruction.

Scalars are plain Python ints reduced mod ``p``; vectors are numpy arrays of
dtype ``object`` so residues of any size fit.  Everything downstream only
uses ``+``, ``-``, ``*`` and ``% p`` on array entries, which keeps the
protocol code usable with symbolic stand-ins for field elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

# Deterministic Miller-Rabin witnesses for n < 3.3e24 (covers all 64-bit n).
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
_PROBABILISTIC_ROUNDS = 64


class FieldError(ValueError):
    """Raised for arithmetic that has no meaning in the field."""


class ModulusMismatch(FieldError):
    pass


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for sp in _MR_BASES:
        if n % sp == 0:
            return n == sp
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1

    def witness(a: int) -> bool:
        x = pow(a, d, n)
        if x in (1, n - 1):
            return False
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                return False
        return True

    if n < 1 << 64:
        return not any(witness(a) for a in _MR_BASES)
    # Bases drawn from a fixed-seed generator so results are reproducible.
    gen = np.random.default_rng(n % (1 << 63))
    for _ in range(_PROBABILISTIC_ROUNDS):
        a = 2 + int.from_bytes(gen.bytes((n.bit_length() + 7) // 8 + 8), "big") % (n - 3)
        if witness(a):
            return False
    return True


def next_prime(n: int) -> int:
    """Smallest prime >= n."""
    if n <= 2:
        return 2
    c = n | 1
    while not is_prime(c):
        c += 2
    return c


@dataclass(frozen=True)
class Modulus:
    """A prime modulus.  ``bit_width_hint`` is ``p.bit_length()``."""

    p: int

    def __post_init__(self) -> None:
        if self.p < 3 or self.p % 2 == 0 or not is_prime(self.p):
            raise FieldError(f"modulus must be an odd prime >= 3, got {self.p}")

    @property
    def bit_width_hint(self) -> int:
        return self.p.bit_length()

    @property
    def fits_word(self) -> bool:
        return self.p < 1 << 63

    @property
    def byte_width(self) -> int:
        """Bytes needed to write one residue big-endian."""
        return (self.p.bit_length() + 7) // 8

    @property
    def half(self) -> int:
        return (self.p - 1) // 2

    def __call__(self, value: int) -> "FieldElement":
        return FieldElement(value % self.p, self)

    def inv(self, a: int) -> int:
        a %= self.p
        if a == 0:
            raise FieldError("no inverse")
        return pow(a, -1, self.p)

    def array(self, values: Iterable | np.ndarray) -> np.ndarray:
        """Reduce ``values`` into an object array of residues."""
        arr = np.array(values, dtype=object)
        return arr % self.p

    def zeros(self, shape) -> np.ndarray:
        return np.zeros(shape, dtype=object)

    def dot(self, a: np.ndarray, b: np.ndarray, axis: int = -1) -> np.ndarray:
        return (a * b).sum(axis=axis) % self.p


@dataclass(frozen=True)
class FieldElement:
    value: int
    modulus: Modulus

    def __post_init__(self) -> None:
        if not 0 <= self.value < self.modulus.p:
            raise FieldError(f"{self.value} is not a residue mod {self.modulus.p}")

    def _check(self, other: "FieldElement") -> None:
        if not isinstance(other, FieldElement) or other.modulus.p != self.modulus.p:
            raise ModulusMismatch("operands live in different fields")

    def __add__(self, other: "FieldElement") -> "FieldElement":
        self._check(other)
        return self.modulus(self.value + other.value)

    def __sub__(self, other: "FieldElement") -> "FieldElement":
        self._check(other)
        return self.modulus(self.value - other.value)

    def __mul__(self, other: "FieldElement") -> "FieldElement":
        self._check(other)
        return self.modulus(self.value * other.value)

    def __neg__(self) -> "FieldElement":
        return self.modulus(-self.value)

    def inverse(self) -> "FieldElement":
        return FieldElement(self.modulus.inv(self.value), self.modulus)

    def __truediv__(self, other: "FieldElement") -> "FieldElement":
        self._check(other)
        return self * other.inverse()

    def __int__(self) -> int:
        return self.value


_OPS = {
    "add": FieldElement.__add__,
    "sub": FieldElement.__sub__,
    "mul": FieldElement.__mul__,
}


def arith(a: FieldElement, b: FieldElement, op: str) -> FieldElement:
    try:
        fn = _OPS[op]
    except KeyError:
        raise ValueError(f"unknown op {op!r}") from None
    return fn(a, b)


def inverse(a: FieldElement) -> FieldElement:
    return a.inverse()


def phi(x: int, modulus: Modulus) -> FieldElement:
    """Embed a signed integer; the representable range is +-(p-1)/2."""
    if abs(x) > modulus.half:
        raise FieldError("embedding overflow")
    return modulus(x)


def phi_inv(e: FieldElement | int, modulus: Modulus | None = None) -> int:
    """Lift a residue to the symmetric range [-(p-1)/2, (p-1)/2]."""
    if isinstance(e, FieldElement):
        modulus, v = e.modulus, e.value
    else:
        if modulus is None:
            raise TypeError("raw residues need an explicit modulus")
        v = int(e) % modulus.p
    return v - modulus.p if v > modulus.half else v


def embed_array(values: np.ndarray, modulus: Modulus) -> np.ndarray:
    ints = np.asarray(values)
    if ints.size and int(np.max(np.abs(ints))) > modulus.half:
        raise FieldError("embedding overflow")
    return modulus.array([int(v) for v in ints.ravel()]).reshape(ints.shape)


def lift_array(values: np.ndarray, modulus: Modulus) -> np.ndarray:
    """Coordinate-wise ``phi_inv``; returns an object array of Python ints."""
    flat = [phi_inv(v, modulus) for v in np.asarray(values, dtype=object).ravel()]
    return np.array(flat, dtype=object).reshape(np.shape(values))


# ---------------------------------------------------------------------------
# modulus selection
# ---------------------------------------------------------------------------


def base_bound(n: int, d: int, k: int, q: int) -> int:
    """No-wrap bound 2*n*d^k*q^(2k+1) + 1 for the aggregate coordinates."""
    return 2 * n * d**k * q ** (2 * k + 1) + 1


def decode_bounds(n: int, d: int, k: int, q: int, coeff_mass: int) -> tuple[int, int]:
    """Magnitude bounds (N, D) on the aggregate numerator and denominator.

    With every coordinate in [-q, q] the raw cosine satisfies |C| <= d*q^2,
    so each power term |h_j| * |C|^j * q^(2(k-j)) is at most
    |h_j| * d^k * q^(2k).  ``coeff_mass`` is the sum of the absolute encoded
    coefficients.
    """
    den = n * coeff_mass * d**k * q ** (2 * k)
    return den * q, den


def min_modulus(
    n: int,
    d: int,
    k: int,
    q: int,
    coeff_scale: int,
    coeff_mass: int | None = None,
    *,
    headroom: bool = True,
) -> Modulus:
    """Smallest prime large enough for a round with these parameters.

    ``coeff_mass`` defaults to ``(k + 1) * coeff_scale``, the worst case for
    real coefficients of magnitude at most one.
    """
    if min(n, d, k, q, coeff_scale) < 1:
        raise ValueError("all parameters must be >= 1")
    if coeff_mass is None:
        coeff_mass = (k + 1) * coeff_scale
    lower = max(base_bound(n, d, k, q), n + 1, 2 * q + 1, 2 * d * q * q + 1)
    if headroom:
        num, den = decode_bounds(n, d, k, q, coeff_mass)
        lower = max(lower, 2 * num * den + 1)
    return Modulus(next_prime(max(lower, 3)))


# ---------------------------------------------------------------------------
# rational reconstruction
# ---------------------------------------------------------------------------


def rational_reconstruct(
    e: FieldElement | int,
    num_bound: int,
    den_bound: int,
    modulus: Modulus | None = None,
) -> tuple[int, int]:
    """Recover ``(a, b)`` with ``a / b == e`` in the field.

    Runs the extended Euclidean algorithm on (p, e) and stops at the first
    remainder not exceeding ``num_bound``.  The result has |a| <= num_bound,
    0 < b <= den_bound and gcd(a, b) == 1; it is unique when
    2 * num_bound * den_bound < p.
    """
    if isinstance(e, FieldElement):
        modulus, v = e.modulus, e.value
    else:
        if modulus is None:
            raise TypeError("raw residues need an explicit modulus")
        v = int(e) % modulus.p
    p = modulus.p
    r0, r1 = p, v
    t0, t1 = 0, 1
    while r1 > num_bound:
        qt = r0 // r1
        r0, r1 = r1, r0 - qt * r1
        t0, t1 = t1, t0 - qt * t1
    if t1 == 0 or abs(t1) > den_bound or math.gcd(r1, abs(t1)) != 1:
        raise FieldError("reconstruction failure")
    a, b = (r1, t1) if t1 > 0 else (-r1, -t1)
    return a, b
