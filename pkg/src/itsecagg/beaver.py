"""Beaver-triple multiplication on tagged shares.

Three triple shapes are supported:

* scalar ``(a, b, c = a*b)``
* dot ``(o, v, w = <o, v>)`` with ``o, v`` of length ``d``
* scalar-vector ``(x, y, z = x*y)`` with ``y, z`` of length ``d``

Each party's share of a pool of triples is a set of :class:`TaggedArray`
objects with the triple number on the leading axis.  The arithmetic helpers
below work on whatever :class:`TaggedArray` they are given, so the same code
serves real shares and the federator's key forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import Modulus
from .mac import TaggedArray
from .sss import share_array

KINDS = ("dot", "scalar", "svec")
PARTS = {"dot": ("o", "v", "w"), "scalar": ("a", "b", "c"), "svec": ("x", "y", "z")}


class PreprocessingExhausted(RuntimeError):
    pass


class TripleReuse(RuntimeError):
    pass


def triple_budget(n: int, k: int, d: int) -> dict[str, int]:
    """Triples consumed by one iteration with ``n`` participating clients."""
    del d  # dot and scalar-vector triples carry the dimension internally
    return {"dot": n, "scalar": (k - 1) * n + 1, "svec": n + 1}


@dataclass
class TripleShares:
    """One party's shares of ``count`` triples of one kind."""

    kind: str
    parts: dict[str, TaggedArray]

    def __post_init__(self) -> None:
        if self.kind not in PARTS:
            raise ValueError(f"unknown triple kind {self.kind!r}")

    @property
    def count(self) -> int:
        return self.parts[PARTS[self.kind][0]].shape[0]

    def select(self, idx) -> "TripleShares":
        return TripleShares(self.kind, {k: v[idx] for k, v in self.parts.items()})

    def __getitem__(self, part: str) -> TaggedArray:
        return self.parts[part]


@dataclass
class ScalarTriple:
    a: int
    b: int
    c: int


@dataclass
class DotTriple:
    o: np.ndarray
    v: np.ndarray
    w: int


@dataclass
class ScalarVecTriple:
    x: int
    y: np.ndarray
    z: np.ndarray


@dataclass
class GeneratedTriples:
    """Output of :func:`gen_triples`: secrets plus every party's tagged shares
    and ``beta`` keys.  Share arrays carry the party on axis 0 and the triple
    number on axis 1."""

    kind: str
    p: int
    secrets: dict[str, np.ndarray]
    values: dict[str, np.ndarray]
    tags: dict[str, np.ndarray]
    betas: dict[str, np.ndarray]

    def party(self, i: int) -> TripleShares:
        return TripleShares(
            self.kind,
            {k: TaggedArray(self.values[k][i - 1], self.tags[k][i - 1], self.p) for k in PARTS[self.kind]},
        )

    def keys(self, i: int) -> TripleShares:
        return TripleShares(
            self.kind,
            {k: TaggedArray.key_form(self.betas[k][i - 1], self.p) for k in PARTS[self.kind]},
        )

    def triple(self, m: int):
        s = self.secrets
        if self.kind == "scalar":
            return ScalarTriple(s["a"][m], s["b"][m], s["c"][m])
        if self.kind == "dot":
            return DotTriple(s["o"][m], s["v"][m], s["w"][m])
        return ScalarVecTriple(s["x"][m], s["y"][m], s["z"][m])


def triple_secrets(kind: str, count: int, d: int, modulus: Modulus, sampler) -> dict[str, np.ndarray]:
    p = modulus.p
    if kind == "scalar":
        a = sampler.uniform(modulus, (count,))
        b = sampler.uniform(modulus, (count,))
        return {"a": a, "b": b, "c": a * b % p}
    if kind == "dot":
        o = sampler.uniform(modulus, (count, d))
        v = sampler.uniform(modulus, (count, d))
        return {"o": o, "v": v, "w": (o * v).sum(axis=-1) % p if d else np.zeros(count, dtype=object)}
    if kind == "svec":
        x = sampler.uniform(modulus, (count,))
        y = sampler.uniform(modulus, (count, d))
        return {"x": x, "y": y, "z": x[:, None] * y % p}
    raise ValueError(f"unknown triple kind {kind!r}")


def gen_triples(
    kind: str,
    count: int,
    n: int,
    t: int,
    d: int,
    modulus: Modulus,
    sampler,
    alpha,
    secrets: dict[str, np.ndarray] | None = None,
) -> GeneratedTriples:
    """Sample ``count`` triples, share them and tag every share.

    ``secrets`` may pin the first two components (the product is always
    recomputed), which tests use to force known values.
    """
    p = modulus.p
    if secrets is None:
        secrets = triple_secrets(kind, count, d, modulus, sampler)
    else:
        first, second, _ = PARTS[kind]
        s1 = modulus.array(secrets[first])
        s2 = modulus.array(secrets[second])
        if kind == "scalar":
            prod = s1 * s2 % p
        elif kind == "dot":
            prod = (s1 * s2).sum(axis=-1) % p
        else:
            prod = s1[:, None] * s2 % p
        secrets = {first: s1, second: s2, PARTS[kind][2]: prod}
    values, tags, betas = {}, {}, {}
    for name in PARTS[kind]:
        sh = share_array(secrets[name], n, t, modulus, sampler)
        bt = sampler.uniform(modulus, sh.shape)
        values[name] = sh
        betas[name] = bt
        tags[name] = (alpha * sh + bt) % p
    return GeneratedTriples(kind, p, secrets, values, tags, betas)


def gen_triple(kind: str, n: int, t: int, d: int, modulus: Modulus, sampler, alpha, secrets=None) -> GeneratedTriples:
    """A single triple; see :func:`gen_triples`."""
    if secrets is not None:
        secrets = {k: np.array([v], dtype=object) for k, v in secrets.items()}
    return gen_triples(kind, 1, n, t, d, modulus, sampler, alpha, secrets)


# ---------------------------------------------------------------------------
# multiplication on shares
# ---------------------------------------------------------------------------


def mul_open(x: TaggedArray, y: TaggedArray, a: TaggedArray, b: TaggedArray) -> tuple[TaggedArray, TaggedArray]:
    """Shares of the masked differences ``x - a`` and ``y - b``."""
    return x - a, y - b


def mul_complete(triple: TripleShares, d_open, e_open) -> TaggedArray:
    """Share of ``x*y`` from the opened differences of a scalar triple."""
    p = triple["a"].p
    out = triple["c"] + triple["b"].scale(d_open) + triple["a"].scale(e_open)
    return out.add_public(d_open * e_open % p)


def dot_complete(triple: TripleShares, d_open: np.ndarray, e_open: np.ndarray) -> TaggedArray:
    """Share of ``<x, y>`` from opened ``x - o`` and ``y - v`` (last axis)."""
    p = triple["o"].p
    out = triple["w"] + triple["v"].dot_public(d_open) + triple["o"].dot_public(e_open)
    return out.add_public((d_open * e_open).sum(axis=-1) % p)


def svec_complete(triple: TripleShares, d_open, e_open: np.ndarray) -> TaggedArray:
    """Share of ``s * v`` from opened ``s - x`` (scalar per triple) and
    ``v - y`` (vector per triple)."""
    p = triple["x"].p
    d_col = np.asarray(d_open, dtype=object)[..., None]
    x = triple["x"]
    x_col = TaggedArray(x.values[..., None], x.tags[..., None], p)
    out = triple["z"] + triple["y"].scale(d_col) + x_col.scale(e_open)
    return out.add_public(d_col * e_open % p)


def dot_mul(x: TaggedArray, y: TaggedArray, triple: TripleShares, opener) -> TaggedArray:
    """Inner product over the last axis; ``opener`` maps the pair of share
    arrays ``(x - o, y - v)`` to their public values."""
    if x.shape != y.shape or x.shape != triple["o"].shape:
        raise ValueError("dimension mismatch")
    d_open, e_open = opener(*mul_open(x, y, triple["o"], triple["v"]))
    return dot_complete(triple, d_open, e_open)


def scalar_mul(x: TaggedArray, y: TaggedArray, triple: TripleShares, opener) -> TaggedArray:
    if x.shape != y.shape or x.shape != triple["a"].shape:
        raise ValueError("dimension mismatch")
    d_open, e_open = opener(*mul_open(x, y, triple["a"], triple["b"]))
    return mul_complete(triple, d_open, e_open)


def scalar_vec_mul(s: TaggedArray, v: TaggedArray, triple: TripleShares, opener) -> TaggedArray:
    if s.shape != triple["x"].shape or v.shape != triple["y"].shape:
        raise ValueError("dimension mismatch")
    d_open, e_open = opener(*mul_open(s, v, triple["x"], triple["y"]))
    return svec_complete(triple, d_open, e_open)


# ---------------------------------------------------------------------------
# pools
# ---------------------------------------------------------------------------


class TriplePool:
    """A party's triples of one kind with a cursor and one-time-use flags."""

    def __init__(self, shares: TripleShares):
        self.shares = shares
        self.used = np.zeros(shares.count, dtype=bool)
        self.cursor = 0

    @property
    def kind(self) -> str:
        return self.shares.kind

    @property
    def remaining(self) -> int:
        return int((~self.used).sum())

    def take(self, count: int) -> TripleShares:
        if self.cursor + count > self.shares.count:
            raise PreprocessingExhausted("preprocessing exhausted")
        idx = np.arange(self.cursor, self.cursor + count)
        self.cursor += count
        return self.take_indices(idx)

    def take_indices(self, idx) -> TripleShares:
        idx = np.asarray(idx, dtype=int)
        if np.any(idx >= self.shares.count):
            raise PreprocessingExhausted("preprocessing exhausted")
        if np.any(self.used[idx]):
            raise TripleReuse("triple already consumed")
        self.used[idx] = True
        return self.shares.select(idx)
