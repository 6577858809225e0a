"""One-shot dealer: masks, lambda, Beaver triples and MAC keys for every
iteration of a fixed horizon.

All randomness is drawn from streams fixed at initialization.  In eager mode
every iteration is materialized up front; in lazy mode an iteration is
generated on first use from the same streams, so the content is identical and
only the memory footprint differs.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rngs
from .beaver import KINDS, PARTS, PreprocessingExhausted, TriplePool, TripleShares, triple_budget, triple_secrets
from .field import Modulus, min_modulus
from .mac import TaggedArray
from .sss import interpolate_coeffs, reconstruct_array, share_array

MAGIC = b"ITSB"
VERSION = 1


def labels() -> list[str]:
    out = ["mask", "lambda"]
    for kind in KINDS:
        out.extend(f"{kind}.{part}" for part in PARTS[kind])
    return out


@dataclass
class IterationMaterial:
    """Everything the dealer produced for one iteration.  Share arrays carry
    the holder on axis 0."""

    g: int
    p: int
    secrets: dict[str, np.ndarray]
    values: dict[str, np.ndarray]
    tags: dict[str, np.ndarray]
    betas: dict[str, np.ndarray]


def generate_iteration(
    g: int, n: int, t: int, d: int, k: int, modulus: Modulus, alpha, sampler
) -> IterationMaterial:
    p = modulus.p
    budget = triple_budget(n, k, d)
    secrets: dict[str, np.ndarray] = {
        "mask": sampler.uniform(modulus, (n, d)),
        "lambda": sampler.uniform(modulus, ()),
    }
    for kind in KINDS:
        for part, arr in triple_secrets(kind, budget[kind], d, modulus, sampler).items():
            secrets[f"{kind}.{part}"] = arr
    values, tags, betas = {}, {}, {}
    for label in labels():
        sh = share_array(secrets[label], n, t, modulus, sampler)
        bt = sampler.uniform(modulus, sh.shape)
        values[label] = sh
        betas[label] = bt
        tags[label] = (alpha * sh + bt) % p
    return IterationMaterial(g, p, secrets, values, tags, betas)


class MaterialStore:
    """Dealer output for ``iterations`` iterations, eager or lazy."""

    def __init__(self, n, t, d, k, modulus, alpha, iterations, sampler_for: Callable[[int], object], eager: bool):
        self.n, self.t, self.d, self.k = n, t, d, k
        self.modulus = modulus
        self.alpha = alpha
        self.iterations = iterations
        self._sampler_for = sampler_for
        self.eager = eager
        self._cache: dict[int, IterationMaterial] = {}
        if eager:
            for g in range(iterations):
                self._cache[g] = self._generate(g)

    def _generate(self, g: int) -> IterationMaterial:
        return generate_iteration(g, self.n, self.t, self.d, self.k, self.modulus, self.alpha, self._sampler_for(g))

    def get(self, g: int) -> IterationMaterial:
        if not 0 <= g < self.iterations:
            raise PreprocessingExhausted("preprocessing exhausted")
        if g not in self._cache:
            if not self.eager:
                self._cache.clear()
            self._cache[g] = self._generate(g)
        return self._cache[g]


@dataclass
class ClientMaterial:
    """What one holder gets for one iteration.  For the federator's key forms
    ``own_mask`` is ``None`` and every value slot is zero."""

    index: int
    g: int
    own_mask: np.ndarray | None
    shares: dict[str, TaggedArray]

    def pools(self) -> dict[str, TriplePool]:
        return {
            kind: TriplePool(TripleShares(kind, {part: self.shares[f"{kind}.{part}"] for part in PARTS[kind]}))
            for kind in KINDS
        }


class ClientBundle:
    def __init__(self, index: int, store: MaterialStore):
        self.index = index
        self._store = store

    @property
    def iterations(self) -> int:
        return self._store.iterations

    def material(self, g: int) -> ClientMaterial:
        m = self._store.get(g)
        i = self.index - 1
        shares = {lab: TaggedArray(m.values[lab][i], m.tags[lab][i], m.p) for lab in labels()}
        return ClientMaterial(self.index, g, m.secrets["mask"][i], shares)


class FederatorKeys:
    """The global ``alpha`` and every ``beta``, keyed by (iteration, label,
    holder).  Plaintext digests of the dealer's secrets are available only
    when ``digests`` is set, which tests use and privacy runs disable."""

    def __init__(self, alpha, store: MaterialStore, digests: bool = True):
        self.alpha = alpha
        self._store = store
        self.digests = digests
        self.registry: dict[tuple[int, str], np.ndarray] = {}
        if store.eager:
            for g in range(store.iterations):
                self._fill(g)

    def _fill(self, g: int) -> None:
        m = self._store.get(g)
        for lab in labels():
            self.registry[(g, lab)] = m.betas[lab]

    def betas(self, g: int, label: str) -> np.ndarray:
        if (g, label) not in self.registry and not self._store.eager:
            for key in [key for key in self.registry if key[0] != g]:
                del self.registry[key]
            self._fill(g)
        return self.registry[(g, label)]

    def beta(self, g: int, label: str, holder: int):
        return self.betas(g, label)[holder - 1]

    def key_material(self, g: int, i: int) -> ClientMaterial:
        p = self._store.modulus.p
        shares = {lab: TaggedArray.key_form(self.betas(g, lab)[i - 1], p) for lab in labels()}
        return ClientMaterial(i, g, None, shares)

    def digest(self, g: int) -> dict[str, np.ndarray]:
        if not self.digests:
            raise PermissionError("plaintext digests are disabled")
        return self._store.get(g).secrets


@dataclass
class Setup:
    bundles: list[ClientBundle]
    keys: FederatorKeys
    modulus: Modulus
    n: int
    t: int
    d: int
    k: int
    iterations: int
    extra: dict = field(default_factory=dict)


def initialize(
    n: int,
    t: int,
    d: int,
    k: int,
    q: int,
    iterations: int,
    seed: int = 0,
    *,
    coeff_scale: int = 1,
    coeff_mass: int | None = None,
    modulus: Modulus | None = None,
    alpha=None,
    eager: bool = False,
    digests: bool = True,
    sampler_for: Callable[[int], object] | None = None,
) -> Setup:
    if n < 1 or not 0 <= t < n:
        raise ValueError(f"need n >= 1 and 0 <= t < n, got n={n}, t={t}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if modulus is None:
        modulus = min_modulus(n, d, k, q, coeff_scale, coeff_mass)
    if modulus.p <= n:
        raise ValueError("not enough evaluation points")
    if alpha is None:
        alpha = rngs.FieldSampler(rngs.stream(seed, "ttp", "alpha")).nonzero(modulus)
    if sampler_for is None:

        def sampler_for(g: int):
            return rngs.FieldSampler(rngs.stream(seed, "ttp", "iteration", g))

    store = MaterialStore(n, t, d, k, modulus, alpha, iterations, sampler_for, eager)
    bundles = [ClientBundle(i, store) for i in range(1, n + 1)]
    keys = FederatorKeys(alpha, store, digests)
    return Setup(bundles, keys, modulus, n, t, d, k, iterations)


# ---------------------------------------------------------------------------
# audit
# ---------------------------------------------------------------------------


def audit(bundles: list[ClientBundle], keys: FederatorKeys, iterations=None) -> list[str]:
    """Consistency sweep over dealer output; returns a list of violations."""
    store = bundles[0]._store
    n, t, d, k = store.n, store.t, store.d, store.k
    modulus = store.modulus
    p = modulus.p
    alpha = keys.alpha
    points = [b.index for b in bundles]
    budget = triple_budget(n, k, d)
    problems: list[str] = []
    for g in range(store.iterations) if iterations is None else iterations:
        mats = [b.material(g) for b in bundles]
        secrets: dict[str, np.ndarray] = {}
        for lab in labels():
            vals = [m.shares[lab].values for m in mats]
            if len(points) > t + 1:
                coeffs = interpolate_coeffs(points, vals, modulus)
                if any(np.any(np.asarray(c) % p != 0) for c in coeffs[t + 1 :]):
                    problems.append(f"g={g} {lab}: shares not on a degree-{t} polynomial")
            secrets[lab] = reconstruct_array(points[: t + 1], vals[: t + 1], modulus)
            if (g, lab) not in keys.registry and store.eager:
                problems.append(f"g={g} {lab}: missing beta entries")
                continue
            betas = keys.betas(g, lab)
            for m in mats:
                ta = m.shares[lab]
                if np.shape(betas[m.index - 1]) != np.shape(ta.values):
                    problems.append(f"g={g} {lab}: beta shape mismatch for holder {m.index}")
                    continue
                ok = (ta.tags - alpha * ta.values - betas[m.index - 1]) % p == 0
                if not np.all(ok):
                    problems.append(f"g={g} {lab}: tag check fails for holder {m.index}")
        for kind in KINDS:
            a, b, c = (secrets[f"{kind}.{part}"] for part in PARTS[kind])
            if a.shape[0] != budget[kind]:
                problems.append(f"g={g} {kind}: pool has {a.shape[0]} triples, budget {budget[kind]}")
            if kind == "scalar":
                good = (a * b - c) % p == 0
            elif kind == "dot":
                good = ((a * b).sum(axis=-1) - c) % p == 0
            else:
                good = (a[:, None] * b - c) % p == 0
            if not np.all(good):
                problems.append(f"g={g} {kind}: product relation broken")
        for m in mats:
            j = m.index
            if not np.all((secrets["mask"][j - 1] - m.own_mask) % p == 0):
                problems.append(f"g={g} mask of client {j} does not match its shares")
    return problems


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _write_array(buf: io.BytesIO, arr: np.ndarray, width: int) -> None:
    arr = np.asarray(arr, dtype=object)
    buf.write(struct.pack(">B", arr.ndim))
    for s in arr.shape:
        buf.write(struct.pack(">I", s))
    for v in arr.ravel():
        buf.write(int(v).to_bytes(width, "big"))


def _read_array(buf: io.BytesIO, width: int) -> np.ndarray:
    (ndim,) = struct.unpack(">B", buf.read(1))
    shape = tuple(struct.unpack(">I", buf.read(4))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    raw = buf.read(width * count)
    vals = [int.from_bytes(raw[i : i + width], "big") for i in range(0, width * count, width)]
    return np.array(vals, dtype=object).reshape(shape)


def serialize_material(m: ClientMaterial, modulus: Modulus) -> bytes:
    """Length-prefixed big-endian encoding, labels in sorted order."""
    width = modulus.byte_width
    buf = io.BytesIO()
    pbytes = modulus.p.to_bytes(width, "big")
    buf.write(MAGIC + struct.pack(">BIIH", VERSION, m.index, m.g, width) + pbytes)
    has_mask = m.own_mask is not None
    buf.write(struct.pack(">B", has_mask))
    if has_mask:
        _write_array(buf, m.own_mask, width)
    names = sorted(m.shares)
    buf.write(struct.pack(">I", len(names)))
    for name in names:
        enc = name.encode()
        buf.write(struct.pack(">H", len(enc)) + enc)
        _write_array(buf, m.shares[name].values, width)
        _write_array(buf, m.shares[name].tags, width)
    return buf.getvalue()


def deserialize_material(data: bytes) -> tuple[ClientMaterial, Modulus]:
    buf = io.BytesIO(data)
    if buf.read(4) != MAGIC:
        raise ValueError("not a bundle record")
    version, index, g, width = struct.unpack(">BIIH", buf.read(11))
    if version != VERSION:
        raise ValueError(f"unsupported bundle version {version}")
    modulus = Modulus(int.from_bytes(buf.read(width), "big"))
    (has_mask,) = struct.unpack(">B", buf.read(1))
    own = _read_array(buf, width) if has_mask else None
    (count,) = struct.unpack(">I", buf.read(4))
    shares = {}
    for _ in range(count):
        (ln,) = struct.unpack(">H", buf.read(2))
        name = buf.read(ln).decode()
        vals = _read_array(buf, width)
        tags = _read_array(buf, width)
        shares[name] = TaggedArray(vals, tags, modulus.p)
    return ClientMaterial(index, g, own, shares), modulus
