"""Plaintext aggregation rules and the exact fixed-point reference of the
secure aggregation."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np

from ..discriminator import DiscriminatorPoly, eval_real, ts_integer


def _stack(updates) -> np.ndarray:
    U = np.asarray(updates, dtype=float)
    if U.ndim != 2 or len(U) == 0:
        raise ValueError("need a non-empty list of equal-length updates")
    return U


def fedavg(updates: Sequence[np.ndarray]) -> np.ndarray:
    return _stack(updates).mean(axis=0)


def cosines(updates: Sequence[np.ndarray], u0: np.ndarray) -> np.ndarray:
    U = _stack(updates)
    n0 = np.linalg.norm(u0)
    norms = np.linalg.norm(U, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = U @ u0 / (norms * n0)
    return np.nan_to_num(cos)


def _trust_weighted(updates, u0: np.ndarray, ts: np.ndarray) -> np.ndarray:
    U = _stack(updates)
    norms = np.linalg.norm(U, axis=1)
    unit = np.divide(U, norms[:, None], out=np.zeros_like(U), where=norms[:, None] > 0)
    den = ts.sum()
    if den == 0:
        return np.zeros(U.shape[1])
    return np.linalg.norm(u0) * (ts @ unit) / den


def fltrust_relu(updates: Sequence[np.ndarray], u0: np.ndarray) -> np.ndarray:
    """Trust score max(0, cos); a zero total score yields the zero update."""
    return _trust_weighted(updates, u0, np.maximum(cosines(updates, u0), 0.0))


def fltrust_poly_real(updates: Sequence[np.ndarray], u0: np.ndarray, h: DiscriminatorPoly) -> np.ndarray:
    """Trust score h(cos), which may be negative."""
    return _trust_weighted(updates, u0, np.asarray(eval_real(h, cosines(updates, u0))))


def fixedpoint_sums(u0_int: np.ndarray, updates_int: Sequence[np.ndarray], h: DiscriminatorPoly, q: int):
    """Exact integer ``Sigma1`` and ``Sigma2`` with the encoded coefficients."""
    u0 = [int(x) for x in u0_int]
    sigma1 = 0
    sigma2 = [0] * len(u0)
    for u in updates_int:
        u = [int(x) for x in u]
        ts = ts_integer(h, sum(a * b for a, b in zip(u0, u)), q)
        sigma1 += ts
        for j, x in enumerate(u):
            sigma2[j] += ts * x
    return sigma1, sigma2


def fltrust_poly_fixedpoint_oracle(
    u0_int: np.ndarray, updates_int: Sequence[np.ndarray], h: DiscriminatorPoly, q: int
) -> list[Fraction] | None:
    """Per-coordinate ``Sigma2 / Sigma1`` as exact fractions; ``None`` when
    ``Sigma1`` is zero."""
    s1, s2 = fixedpoint_sums(u0_int, updates_int, h, q)
    if s1 == 0:
        return None
    return [Fraction(v, s1) for v in s2]


def oracle_update(fractions: list[Fraction] | None, u0_norm: float, q: int, d: int) -> np.ndarray:
    if fractions is None:
        return np.zeros(d)
    return np.array([u0_norm * float(f) / q for f in fractions])


def krum_scores(updates: Sequence[np.ndarray], f: int) -> np.ndarray:
    U = _stack(updates)
    n = len(U)
    m = max(n - f - 2, 1)
    d2 = ((U[:, None, :] - U[None, :, :]) ** 2).sum(axis=-1)
    scores = np.empty(n)
    for i in range(n):
        others = np.delete(d2[i], i)
        scores[i] = np.sort(others)[:m].sum()
    return scores


def krum(updates: Sequence[np.ndarray], f: int) -> np.ndarray:
    U = _stack(updates)
    return U[int(np.argmin(krum_scores(U, f)))].copy()


def trimmed_mean(updates: Sequence[np.ndarray], f: int) -> np.ndarray:
    """Coordinate-wise mean after dropping the ``f`` largest and smallest."""
    U = np.sort(_stack(updates), axis=0)
    n = len(U)
    if 2 * f >= n:
        raise ValueError("trimming removes every update")
    return U[f : n - f].mean(axis=0)
