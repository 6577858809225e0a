"""One global iteration of the secure aggregation as message-driven parties.

Round structure (federator-routed, party 0 is the federator):

1. the federator sends the model; everybody normalizes, quantizes and embeds
2. the federator publishes its root update; each client publishes its update
   minus its pre-shared mask, which every client turns into a share
3. shares of every squared norm via one dot triple per update; the federator
   checks the norms and fixes the active set
4. trust scores on shares (powers of the cosine via scalar triples), the
   score-weighted updates via scalar-vector triples, and the masked sums
   ``lambda * Sigma1`` and ``lambda * Sigma2``
5. the federator opens both masked sums and decodes their ratio

Every opening goes through the federator, which checks each client's share
against the key form obtained by running that client's program on MAC keys
(see :mod:`itsecagg.mac`).  The same :class:`ShareMachine` runs both.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

import numpy as np

from . import quant, rngs
from .beaver import dot_complete, mul_complete, svec_complete
from .discriminator import DiscriminatorPoly, ts_program
from .field import FieldError, Modulus, decode_bounds, phi_inv, rational_reconstruct
from .mac import TaggedArray, verify_array
from .sss import reconstruct_array
from .ttp import ClientBundle, ClientMaterial, FederatorKeys, Setup, initialize
from .wire import FEDERATOR, Message, RoundTranscript, real


class RoundAbort(RuntimeError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class PadReuse(RuntimeError):
    pass


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    t: int
    d: int
    q: int
    eps: float
    h: DiscriminatorPoly
    modulus: Modulus

    @property
    def k(self) -> int:
        return self.h.k

    @property
    def bounds(self) -> tuple[int, int]:
        return decode_bounds(self.n, self.d, self.k, self.q, self.h.coeff_mass)

    def step4_rounds(self) -> list[str]:
        return [f"pow{j}" for j in range(2, self.k + 1)] + ["svec", "lambda"]


def _row(ta: TaggedArray) -> TaggedArray:
    """Add a leading axis of length one."""
    vals = np.asarray(ta.values, dtype=object)
    tags = np.asarray(ta.tags, dtype=object)
    return TaggedArray(vals.reshape((1,) + vals.shape), tags.reshape((1,) + tags.shape), ta.p)


class ShareMachine:
    """The linear program one holder runs on its shares in one iteration.

    Fed with real material it is a client; fed with key forms (zero values,
    ``beta`` tags) it is the federator's expectation of that client.
    """

    def __init__(self, material: ClientMaterial, params: ProtocolParams):
        self.index = material.index
        self.params = params
        self.p = params.modulus.p
        self.shares = material.shares
        self.pools = material.pools()
        self._pending: dict[str, object] = {}
        self.owners: tuple[int, ...] = ()
        self.active: tuple[int, ...] = ()
        self.norms: TaggedArray | None = None
        self.agg: tuple[TaggedArray, TaggedArray] | None = None

    def start(self, masked: dict[int, np.ndarray], owners: Iterable[int], u0: np.ndarray) -> None:
        self.owners = tuple(sorted(owners))
        self.u0 = u0
        idx = np.array(self.owners, dtype=int) - 1
        M = np.stack([np.asarray(masked[j], dtype=object) for j in self.owners])
        self.U = self.shares["mask"][idx].add_public(M)

    def activate(self, active: Iterable[int]) -> None:
        self.active = tuple(sorted(active))
        pos = [self.owners.index(j) for j in self.active]
        self.UA = self.U[np.array(pos, dtype=int)]
        self.C = self.UA.dot_public(self.u0)
        self.powers = {1: self.C}
        self.schedule = ts_program(self.params.h, self.params.q, self.active)
        if self.params.k == 1:
            self._combine()

    def _combine(self) -> None:
        sch = self.schedule
        ts = None
        for j in range(1, self.params.k + 1):
            term = self.powers[j].scale(sch.combine_factors[j] % self.p)
            ts = term if ts is None else ts + term
        self.TS = ts.add_public(sch.constant % self.p)

    def open(self, name: str) -> dict[str, TaggedArray]:
        if name == "norm":
            tr = self.pools["dot"].take(len(self.owners))
            self._pending[name] = tr
            return {"d": self.U - tr["o"], "e": self.U - tr["v"]}
        if name.startswith("pow"):
            j = int(name[3:])
            tr = self.pools["scalar"].take(len(self.active))
            self._pending[name] = tr
            return {"d": self.powers[j - 1] - tr["a"], "e": self.C - tr["b"]}
        if name == "svec":
            tr = self.pools["svec"].take(len(self.active))
            self._pending[name] = tr
            return {"d": self.TS - tr["x"], "e": self.UA - tr["y"]}
        if name == "lambda":
            sc = self.pools["scalar"].take(1)
            sv = self.pools["svec"].take(1)
            self._pending[name] = (sc, sv)
            lam = _row(self.shares["lambda"])
            return {
                "d1": lam - sc["a"],
                "e1": self.sigma1 - sc["b"],
                "d2": lam - sv["x"],
                "e2": self.sigma2 - sv["y"],
            }
        raise ValueError(f"unknown round {name!r}")

    def finish(self, name: str, opened: dict[str, np.ndarray]) -> None:
        tr = self._pending.pop(name)
        if name == "norm":
            self.norms = dot_complete(tr, opened["d"], opened["e"])
        elif name.startswith("pow"):
            j = int(name[3:])
            self.powers[j] = mul_complete(tr, opened["d"], opened["e"])
            if j == self.params.k:
                self._combine()
        elif name == "svec":
            self.TU = svec_complete(tr, opened["d"], opened["e"])
            self.sigma1 = _row(self.TS.sum(axis=0))
            self.sigma2 = _row(self.TU.sum(axis=0))
        elif name == "lambda":
            sc, sv = tr
            s1 = mul_complete(sc, opened["d1"], opened["e1"])
            s2 = svec_complete(sv, opened["d2"], opened["e2"])
            self.agg = (s1[0], s2[0])
        else:
            raise ValueError(f"unknown round {name!r}")


# ---------------------------------------------------------------------------
# step 1
# ---------------------------------------------------------------------------


@dataclass
class Encoded:
    field: np.ndarray
    ints: np.ndarray
    norm: float
    degenerate: bool = False


def step1_encode(update: np.ndarray, q: int, modulus: Modulus, rng: np.random.Generator) -> Encoded:
    """Normalize, quantize and embed.  A zero update becomes the zero vector
    and is flagged; it then fails the norm check."""
    update = np.asarray(update, dtype=float)
    try:
        unit = quant.normalize(update)
    except quant.DegenerateUpdate:
        zeros = np.zeros(update.shape, dtype=np.int64)
        return Encoded(quant.embed(zeros, modulus), zeros, 0.0, True)
    ints = quant.quantize(unit, q, rng)
    return Encoded(quant.embed(ints, modulus), ints, float(np.linalg.norm(update)))


# ---------------------------------------------------------------------------
# parties
# ---------------------------------------------------------------------------


class Client:
    def __init__(self, index: int, bundle: ClientBundle, params: ProtocolParams):
        self.index = index
        self.bundle = bundle
        self.params = params
        self.used_pads: set[int] = set()
        self.machine: ShareMachine | None = None
        self.encoded: Encoded | None = None

    def begin(self, g: int) -> None:
        self.g = g
        self.material = self.bundle.material(g)
        self.machine = ShareMachine(self.material, self.params)

    def masked_update(self) -> np.ndarray:
        if self.g in self.used_pads:
            raise PadReuse("pad reuse")
        self.used_pads.add(self.g)
        return (self.encoded.field - self.material.own_mask) % self.params.modulus.p


@dataclass
class FederatorState:
    excluded: dict[int, tuple[int, str]] = field(default_factory=dict)

    def copy(self) -> "FederatorState":
        return FederatorState(dict(self.excluded))


class Federator:
    def __init__(self, keys: FederatorKeys, params: ProtocolParams, state: FederatorState | None = None):
        self.keys = keys
        self.params = params
        self.state = state or FederatorState()
        self.shadows: dict[int, ShareMachine] = {}

    @property
    def excluded(self) -> dict[int, tuple[int, str]]:
        return self.state.excluded

    def exclude(self, i: int, g: int, reason: str, tr: RoundTranscript) -> None:
        if i not in self.state.excluded:
            self.state.excluded[i] = (g, reason)
            tr.excluded.append(i)

    def begin(self, g: int) -> None:
        self.g = g
        self.shadows = {}

    def start_shadows(self, holders, masked, owners, u0) -> None:
        for i in holders:
            sh = ShareMachine(self.keys.key_material(self.g, i), self.params)
            sh.start(masked, owners, u0)
            self.shadows[i] = sh

    def _check(self, i: int, claimed: dict, expected: dict) -> bool:
        if not isinstance(claimed, dict) or set(claimed) != set(expected):
            return False
        alpha = self.keys.alpha
        for name, exp in expected.items():
            got = claimed[name]
            if not isinstance(got, TaggedArray) or np.shape(got.values) != np.shape(exp.values):
                return False
            if np.shape(got.tags) != np.shape(exp.tags):
                return False
            if not np.all(verify_array(got, exp, alpha)):
                return False
        return True

    def _verified(self, step: int, kind: str, msgs: dict[int, dict], expected: dict[int, dict], tr) -> list[int]:
        good = []
        for i in sorted(msgs):
            if i in self.excluded or i not in expected:
                continue
            ok = self._check(i, msgs[i], expected[i])
            tr.verdict(step, kind, i, ok)
            if ok:
                good.append(i)
            else:
                self.exclude(i, self.g, "mac", tr)
                self.shadows.pop(i, None)
        if len(good) < self.params.t + 1:
            raise RoundAbort("insufficient shares")
        return good

    def _open(self, good: list[int], msgs: dict[int, dict], names) -> dict[str, np.ndarray]:
        pts = good[: self.params.t + 1]
        out = {}
        for name in names:
            vals = [np.asarray(msgs[i][name].values, dtype=object) for i in pts]
            out[name] = reconstruct_array(pts, vals, self.params.modulus)
        return out

    def process_openings(self, name: str, step: int, msgs: dict[int, dict], tr) -> tuple[dict, list[int]]:
        expected = {i: sh.open(name) for i, sh in self.shadows.items() if i in msgs}
        # shadows of holders that went silent stop here
        for i in [i for i in self.shadows if i not in msgs]:
            del self.shadows[i]
        good = self._verified(step, "OpeningShare", msgs, expected, tr)
        opened = self._open(good, msgs, sorted(expected[good[0]]))
        for i in good:
            self.shadows[i].finish(name, opened)
        return opened, good

    def process_norms(self, msgs: dict[int, dict], owners, tr) -> tuple[list[int], list[int]]:
        expected = {i: {"norms": sh.norms} for i, sh in self.shadows.items() if i in msgs}
        good = self._verified(3, "NormShare", msgs, expected, tr)
        norms = self._open(good, msgs, ["norms"])["norms"]
        q2 = self.params.q**2
        failed = []
        for j, v in zip(owners, norms):
            val = phi_inv(v, self.params.modulus)
            ok = abs(val - q2) < self.params.eps * q2
            tr.verdict(3, "NormCheck", j, ok, norm_sq=int(val))
            if not ok:
                failed.append(j)
                self.exclude(j, self.g, "norm", tr)
        active = [j for j in owners if j not in self.excluded]
        holders = [i for i in good if i not in self.excluded]
        for i in list(self.shadows):
            if i not in holders:
                del self.shadows[i]
        return active, holders

    def process_agg(self, msgs: dict[int, dict], tr):
        expected = {}
        for i, sh in self.shadows.items():
            if i in msgs:
                s1, s2 = sh.agg
                expected[i] = {"sigma1": s1, "sigma2": s2}
        good = self._verified(5, "AggShare", msgs, expected, tr)
        opened = self._open(good, msgs, ["sigma1", "sigma2"])
        return opened["sigma1"], opened["sigma2"], good

    def decode(self, lam_s1, lam_s2) -> list[Fraction]:
        p = self.params.modulus.p
        lam_s1 = int(lam_s1) % p
        if lam_s1 == 0:
            raise RoundAbort("zero denominator")
        inv = pow(lam_s1, -1, p)
        num_bound, den_bound = self.params.bounds
        out = []
        for v in np.asarray(lam_s2, dtype=object).ravel():
            try:
                a, b = rational_reconstruct(int(v) * inv % p, num_bound, den_bound, self.params.modulus)
            except FieldError as exc:
                raise RoundAbort("reconstruction failure") from exc
            out.append(Fraction(a, b))
        return out


# ---------------------------------------------------------------------------
# client sides: live parties or a recorded transcript
# ---------------------------------------------------------------------------

Tamper = Callable[[Message], dict]


class LiveSide:
    """Drives real clients, applying dropouts and message tampering."""

    def __init__(self, clients: dict[int, Client], tr: RoundTranscript, dropouts=(), tamper: Tamper | None = None):
        self.clients = clients
        self.tr = tr
        self.drop_at = {}
        for i, step in dropouts:
            self.drop_at[i] = min(step, self.drop_at.get(i, step))
        self.tamper = tamper

    def alive(self, i: int, step: int) -> bool:
        return step < self.drop_at.get(i, 99)

    def _send(self, i: int, step: int, kind: str, payload: dict) -> dict:
        msg = Message(i, FEDERATOR, self.tr.g, step, 0, kind, payload)
        if self.tamper is not None:
            payload = self.tamper(msg)
        return self.tr.post(i, FEDERATOR, step, kind, payload).payload

    def masked_updates(self, senders) -> dict[int, dict]:
        out = {}
        for i in senders:
            if self.alive(i, 2):
                out[i] = self._send(i, 2, "MaskedUpdate", {"masked": {i: self.clients[i].masked_update()}})
        return out

    def on_masked(self, receivers, masked, owners, u0) -> None:
        for i in receivers:
            self.clients[i].machine.start(masked, owners, u0)

    def openings(self, name: str, step: int, holders) -> dict[int, dict]:
        out = {}
        for i in holders:
            if self.alive(i, step):
                parts = self.clients[i].machine.open(name)
                out[i] = self._send(i, step, "OpeningShare", {"round": name, "parts": parts})
        return out

    def on_opened(self, name: str, receivers, opened) -> None:
        for i in receivers:
            self.clients[i].machine.finish(name, opened)

    def norm_shares(self, holders) -> dict[int, dict]:
        out = {}
        for i in holders:
            if self.alive(i, 3):
                out[i] = self._send(i, 3, "NormShare", {"norms": self.clients[i].machine.norms})
        return out

    def on_active(self, receivers, active) -> None:
        for i in receivers:
            self.clients[i].machine.activate(active)

    def agg_shares(self, holders) -> dict[int, dict]:
        out = {}
        for i in holders:
            if self.alive(i, 5):
                s1, s2 = self.clients[i].machine.agg
                out[i] = self._send(i, 5, "AggShare", {"sigma1": s1, "sigma2": s2})
        return out


class ReplaySide:
    """Feeds recorded client messages back to a federator."""

    def __init__(self, messages: list[Message], tr: RoundTranscript):
        self.tr = tr
        self.inbox: dict[tuple, dict[int, dict]] = {}
        for m in messages:
            if m.receiver != FEDERATOR:
                continue
            key = (m.kind, m.payload.get("round") if m.kind == "OpeningShare" else None)
            self.inbox.setdefault(key, {})[m.sender] = m

    def _take(self, kind: str, name=None) -> dict[int, dict]:
        out = {}
        for i, m in sorted(self.inbox.get((kind, name), {}).items()):
            out[i] = self.tr.post(i, FEDERATOR, m.step, kind, m.payload).payload
        return out

    def masked_updates(self, senders):
        return self._take("MaskedUpdate")

    def openings(self, name, step, holders):
        return self._take("OpeningShare", name)

    def norm_shares(self, holders):
        return self._take("NormShare")

    def agg_shares(self, holders):
        return self._take("AggShare")

    def on_masked(self, *args) -> None:
        pass

    on_opened = on_active = on_masked


# ---------------------------------------------------------------------------
# the round
# ---------------------------------------------------------------------------


@dataclass
class RoundResult:
    g: int
    transcript: RoundTranscript
    owners: tuple[int, ...] = ()
    active: tuple[int, ...] = ()
    lam_sigma1: object = None
    lam_sigma2: object = None
    fractions: list[Fraction] | None = None
    aggregate: np.ndarray | None = None
    aborted: str | None = None
    u0_norm: float = 0.0

    @property
    def ok(self) -> bool:
        return self.aborted is None and self.aggregate is not None


def federator_round(
    fed: Federator,
    side,
    tr: RoundTranscript,
    participants: list[int],
    w: np.ndarray,
    u0_field: np.ndarray,
    u0_norm: float,
    decode: bool,
) -> RoundResult:
    """Steps 1-5 from the federator's point of view.  ``side`` supplies the
    client messages, live or recorded."""
    params = fed.params
    res = RoundResult(tr.g, tr, u0_norm=u0_norm)
    try:
        # step 1: model broadcast
        for i in participants:
            tr.post(FEDERATOR, i, 1, "GlobalModel", {"w": real(w)})
        # step 2: root update, masked updates, echo
        for i in participants:
            tr.post(FEDERATOR, i, 2, "FederatorUpdate", {"u0": u0_field})
        raw = side.masked_updates(participants)
        masked = {}
        for i, payload in raw.items():
            vec = payload.get("masked", {}).get(i) if isinstance(payload.get("masked"), dict) else None
            if vec is None or np.shape(vec) != (params.d,):
                tr.verdict(2, "MaskedUpdate", i, False)
                fed.exclude(i, fed.g, "malformed", tr)
                continue
            masked[i] = np.asarray(vec, dtype=object)
        owners = sorted(masked)
        if len(owners) < params.t + 1:
            raise RoundAbort("insufficient shares")
        res.owners = tuple(owners)
        for i in owners:
            tr.post(FEDERATOR, i, 2, "MaskedUpdate", {"masked": masked})
        side.on_masked(owners, masked, owners, u0_field)
        fed.start_shadows(owners, masked, owners, u0_field)
        holders = owners

        # step 3: norms
        msgs = {i: m["parts"] for i, m in side.openings("norm", 3, holders).items()}
        opened, holders = fed.process_openings("norm", 3, msgs, tr)
        for i in holders:
            tr.post(FEDERATOR, i, 3, "OpenedValues", {"round": "norm", "values": opened})
        side.on_opened("norm", holders, opened)
        msgs = {i: {"norms": m["norms"]} for i, m in side.norm_shares(holders).items()}
        active, holders = fed.process_norms(msgs, owners, tr)
        res.active = tuple(active)
        excl = tuple(sorted(fed.excluded))
        for i in holders:
            tr.post(FEDERATOR, i, 3, "Exclusion", {"excluded": excl, "active": tuple(active)})
        if not active:
            raise RoundAbort("no active clients")
        side.on_active(holders, active)
        for sh in fed.shadows.values():
            sh.activate(active)

        # step 4: trust scores, weighted sums, lambda masking
        for name in params.step4_rounds():
            msgs = {i: m["parts"] for i, m in side.openings(name, 4, holders).items()}
            opened, holders = fed.process_openings(name, 4, msgs, tr)
            for i in holders:
                tr.post(FEDERATOR, i, 4, "OpenedValues", {"round": name, "values": opened})
            side.on_opened(name, holders, opened)

        # step 5: masked sums
        msgs = {i: {"sigma1": m["sigma1"], "sigma2": m["sigma2"]} for i, m in side.agg_shares(holders).items()}
        lam1, lam2, _ = fed.process_agg(msgs, tr)
        res.lam_sigma1, res.lam_sigma2 = lam1, lam2
        if decode:
            res.fractions = fed.decode(lam1, lam2)
            res.aggregate = np.array(
                [u0_norm * quant.dequantize_ratio(f.numerator, f.denominator, params.q) for f in res.fractions]
            )
    except RoundAbort as exc:
        res.aborted = exc.reason
        tr.aborted = exc.reason
    return res


class Session:
    """Clients, federator and dealer output for a whole training run."""

    def __init__(self, setup: Setup, params: ProtocolParams, seed: int = 0, *, keep_transcripts: bool = False):
        if params.modulus != setup.modulus:
            raise ValueError("parameters and dealer output use different moduli")
        self.setup = setup
        self.params = params
        self.seed = seed
        self.clients = {b.index: Client(b.index, b, params) for b in setup.bundles}
        self.federator = Federator(setup.keys, params)
        self.keep_transcripts = keep_transcripts
        self.history: dict[int, dict] = {}

    @property
    def width(self) -> int:
        return self.params.modulus.byte_width

    def participants(self) -> list[int]:
        return [i for i in sorted(self.clients) if i not in self.federator.excluded]

    def encode_root(self, g: int, u0: np.ndarray) -> Encoded:
        return step1_encode(u0, self.params.q, self.params.modulus, rngs.stream(self.seed, "quant", g, 0))

    def run_round(
        self,
        g: int,
        w: np.ndarray,
        updates: dict[int, np.ndarray],
        u0: np.ndarray | None = None,
        *,
        encoded: dict[int, Encoded] | None = None,
        root: Encoded | None = None,
        dropouts=(),
        tamper: Tamper | None = None,
        decode: bool = True,
    ) -> RoundResult:
        """One iteration.  ``encoded`` overrides step 1 for selected clients
        (and ``root`` for the federator)."""
        params = self.params
        tr = RoundTranscript(g, self.width)
        participants = self.participants()
        self.history[g] = {"w": np.array(w, copy=True), "u0": u0, "root": root, "state": self.federator.state.copy()}
        root = root if root is not None else self.encode_root(g, u0)
        for i in participants:
            c = self.clients[i]
            c.begin(g)
            if encoded is not None and i in encoded:
                c.encoded = encoded[i]
            else:
                c.encoded = step1_encode(
                    updates[i], params.q, params.modulus, rngs.stream(self.seed, "quant", g, i)
                )
        self.federator.begin(g)
        side = LiveSide({i: self.clients[i] for i in participants}, tr, dropouts, tamper)
        res = federator_round(self.federator, side, tr, participants, w, root.field, root.norm, decode)
        if self.keep_transcripts:
            self.history[g]["result"] = res
        return res

    def replay(self, g: int, messages: list[Message], decode: bool = True) -> RoundResult:
        """Re-run the federator of iteration ``g`` on recorded client messages."""
        h = self.history[g]
        fed = Federator(self.setup.keys, self.params, h["state"].copy())
        fed.begin(g)
        root = h["root"] if h["root"] is not None else self.encode_root(g, h["u0"])
        tr = RoundTranscript(g, self.width)
        participants = [i for i in sorted(self.clients) if i not in fed.excluded]
        side = ReplaySide(messages, tr)
        return federator_round(fed, side, tr, participants, h["w"], root.field, root.norm, decode)


def build_session(
    n: int, t: int, d: int, q: int, eps: float, h: DiscriminatorPoly, iterations: int, seed: int = 0, **kwargs
) -> Session:
    """Dealer setup plus a session, with the modulus sized for ``h``."""
    setup = initialize(
        n, t, d, h.k, q, iterations, seed, coeff_scale=h.coeff_scale, coeff_mass=h.coeff_mass, **kwargs
    )
    return Session(setup, ProtocolParams(n, t, d, q, eps, h, setup.modulus), seed)
