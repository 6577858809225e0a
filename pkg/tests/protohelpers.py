"""Shared helpers for protocol-level tests."""

import numpy as np

from itsecagg.discriminator import default_h
from itsecagg.flsim.aggregators import fltrust_poly_fixedpoint_oracle
from itsecagg.field import Modulus
from itsecagg.mac import TaggedArray
from itsecagg.protocol import Encoded, ProtocolParams, Session, build_session
from itsecagg.ttp import initialize


def make_session(n=5, t=1, d=6, q=64, eps=0.25, iterations=4, seed=0, **kw):
    return build_session(n, t, d, q, eps, default_h(q), iterations, seed, **kw)


def random_updates(n, d, seed, spread=0.6):
    rng = np.random.default_rng(seed)
    u0 = rng.normal(size=d)
    ups = {i: u0 + spread * rng.normal(size=d) for i in range(1, n + 1)}
    return u0, ups


def oracle_fractions(session, res, root_ints=None):
    """Plaintext fixed-point reference over the round's active clients."""
    g = res.g
    if root_ints is None:
        root_ints = session.encode_root(g, session.history[g]["u0"]).ints
    ints = [session.clients[i].encoded.ints for i in res.active]
    return fltrust_poly_fixedpoint_oracle(root_ints, ints, session.params.h, session.params.q)


def tag_guess_accepts(kind, delta, guess, p=101):
    """Run a round at p=101 where client 2 shifts one share of ``kind`` by
    ``delta`` and its tag by ``guess``; True if the federator accepts it."""
    n, t, d, q = 4, 1, 2, 4
    h = default_h(4)
    m = Modulus(p)
    setup = initialize(n, t, d, h.k, q, 1, 3, modulus=m, alpha=7)
    sess = Session(setup, ProtocolParams(n, t, d, q, 10.0, h, m), 3)
    enc = {i: Encoded(m.array([q, 0]), np.array([q, 0]), 1.0) for i in range(1, n + 1)}

    def tamper(msg):
        if msg.sender != 2 or msg.kind != kind:
            return msg.payload
        payload = {k: (dict(v) if isinstance(v, dict) else v) for k, v in msg.payload.items()}
        holder = payload["parts"] if kind == "OpeningShare" else payload
        name = sorted(k for k, v in holder.items() if isinstance(v, TaggedArray))[0]
        ta = holder[name]
        vals = np.array(ta.values, dtype=object).copy()
        tags = np.array(ta.tags, dtype=object).copy()
        vals.reshape(-1)[0] = (vals.reshape(-1)[0] + delta) % p
        tags.reshape(-1)[0] = (tags.reshape(-1)[0] + guess) % p
        holder[name] = TaggedArray(vals, tags, p)
        return payload

    res = sess.run_round(0, np.zeros(d), {}, None, encoded=enc, root=enc[1], tamper=tamper, decode=False)
    verdicts = [v["ok"] for v in res.transcript.verdicts if v["sender"] == 2 and v["kind"] == kind]
    return all(verdicts), sess.setup.keys.alpha


def forgery_acceptances(kind, delta=5, p=101):
    """Every tag shift the federator accepts for a ``delta`` value shift."""
    accepted = []
    alpha = None
    for guess in range(p):
        ok, alpha = tag_guess_accepts(kind, delta, guess, p)
        if ok:
            accepted.append(guess)
    return accepted, alpha
