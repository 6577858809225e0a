"""Trust-score polynomial: real reference, fixed-point encoding and the
multiplication schedule used to evaluate it on shares.

With an integer cosine ``C = <u0, ui>`` (about ``q^2 * cos``), the encoded
trust score is

    TS = sum_j hhat_j * C^j * q^(2(k - j))

so every term carries the scale ``q_c * q^(2k)``.  Lower powers are lifted
to the common scale with public ``q^2`` factors rather than by rescaling
shares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

DEFAULT_COEFFS = (0.01363545, 0.1860353, 0.56578977, 0.46897526)


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


@dataclass(frozen=True)
class DiscriminatorPoly:
    """Real coefficients ``h_0..h_k`` (low to high) and the integer scale
    ``coeff_scale`` used to encode them."""

    coeffs: tuple[float, ...]
    coeff_scale: int = 1

    def __post_init__(self) -> None:
        if len(self.coeffs) < 2:
            raise ValueError("discriminator needs degree >= 1")
        if self.coeff_scale < 1:
            raise ValueError("coeff_scale must be >= 1")
        if not all(math.isfinite(c) for c in self.coeffs):
            raise ValueError("coefficients must be finite")

    @property
    def k(self) -> int:
        return len(self.coeffs) - 1

    @property
    def encoded(self) -> tuple[int, ...]:
        return tuple(_round_half_up(c * self.coeff_scale) for c in self.coeffs)

    @property
    def coeff_mass(self) -> int:
        """Sum of absolute encoded coefficients; enters the modulus bound."""
        return max(1, sum(abs(c) for c in self.encoded))

    def with_scale(self, coeff_scale: int) -> "DiscriminatorPoly":
        return DiscriminatorPoly(self.coeffs, coeff_scale)


def default_h(coeff_scale: int = 1) -> DiscriminatorPoly:
    return DiscriminatorPoly(DEFAULT_COEFFS, coeff_scale)


def from_config(coeffs: Sequence[float] | None, coeff_scale: int) -> DiscriminatorPoly:
    if coeffs is None:
        return default_h(coeff_scale)
    return DiscriminatorPoly(tuple(float(c) for c in coeffs), coeff_scale)


def eval_real(h: DiscriminatorPoly, x):
    acc = np.zeros_like(np.asarray(x, dtype=float))
    for c in reversed(h.coeffs):
        acc = acc * x + c
    return acc if np.ndim(acc) else float(acc)


def derivative_real(h: DiscriminatorPoly, x):
    acc = np.zeros_like(np.asarray(x, dtype=float))
    for j in range(h.k, 0, -1):
        acc = acc * x + j * h.coeffs[j]
    return acc if np.ndim(acc) else float(acc)


def ts_integer(h: DiscriminatorPoly, cos_int: int, q: int) -> int:
    """Encoded trust score from an integer cosine, in plain integers."""
    k = h.k
    q2 = q * q
    return sum(c * cos_int**j * q2 ** (k - j) for j, c in enumerate(h.encoded))


def ts_scale(h: DiscriminatorPoly, q: int) -> int:
    return h.coeff_scale * q ** (2 * h.k)


def ts_fixed_point(h: DiscriminatorPoly, cos_int: int, q: int) -> Fraction:
    """``ts_integer`` divided by its scale, as an exact fraction."""
    return Fraction(ts_integer(h, cos_int, q), ts_scale(h, q))


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TsStep:
    """One step of the shared evaluation for client ``client``.

    ``op`` is ``cos`` (linear, no triple), ``mul`` (power ``power`` from the
    previous power times ``C``, one scalar triple), ``combine`` (linear with
    public scale factors) or ``svec`` (``TS * u``, one scalar-vector triple).
    """

    op: str
    client: int
    power: int = 0
    factor: int = 0


@dataclass(frozen=True)
class TsSchedule:
    steps: tuple[TsStep, ...]
    combine_factors: tuple[int, ...]
    constant: int

    @property
    def scalar_mults(self) -> int:
        return sum(s.op == "mul" for s in self.steps)

    @property
    def svec_mults(self) -> int:
        return sum(s.op == "svec" for s in self.steps)

    def rounds(self) -> list[list[TsStep]]:
        """Steps grouped into opening rounds: all clients' power-``j``
        multiplications share one round, then all ``svec`` steps."""
        by_power: dict[int, list[TsStep]] = {}
        svec = []
        for s in self.steps:
            if s.op == "mul":
                by_power.setdefault(s.power, []).append(s)
            elif s.op == "svec":
                svec.append(s)
        out = [by_power[j] for j in sorted(by_power)]
        if svec:
            out.append(svec)
        return out


def ts_program(h: DiscriminatorPoly, q: int, clients: Sequence[int] | int) -> TsSchedule:
    """Schedule of the shared trust-score evaluation for the given clients.

    ``combine_factors[j]`` multiplies the share of ``C^j`` (for ``j >= 1``)
    and ``constant`` is the public term ``hhat_0 * q^(2k)``.
    """
    if isinstance(clients, int):
        clients = range(1, clients + 1)
    k = h.k
    q2 = q * q
    enc = h.encoded
    factors = tuple(enc[j] * q2 ** (k - j) for j in range(k + 1))
    steps: list[TsStep] = []
    for i in clients:
        steps.append(TsStep("cos", i))
        for j in range(2, k + 1):
            steps.append(TsStep("mul", i, power=j))
        steps.append(TsStep("combine", i))
        steps.append(TsStep("svec", i))
    return TsSchedule(tuple(steps), factors, factors[0])


def run_schedule_plain(schedule: TsSchedule, u0: Sequence[int], updates: dict[int, Sequence[int]]):
    """Integer shadow of the schedule: ``(TS_i, TS_i * u_i)`` per client."""
    u0 = [int(x) for x in u0]
    cos: dict[int, int] = {}
    powers: dict[int, dict[int, int]] = {}
    ts: dict[int, int] = {}
    out: dict[int, tuple[int, list[int]]] = {}
    for s in schedule.steps:
        i = s.client
        if s.op == "cos":
            cos[i] = sum(a * int(b) for a, b in zip(u0, updates[i]))
            powers[i] = {1: cos[i]}
        elif s.op == "mul":
            powers[i][s.power] = powers[i][s.power - 1] * cos[i]
        elif s.op == "combine":
            ts[i] = schedule.constant + sum(
                schedule.combine_factors[j] * powers[i][j] for j in range(1, len(schedule.combine_factors))
            )
        elif s.op == "svec":
            out[i] = (ts[i], [ts[i] * int(x) for x in updates[i]])
    return out
