"""Exact view distributions for tiny instances.

The protocol code only adds, subtracts, multiplies and reduces its field
values, so it runs unchanged on :class:`Sym`, a polynomial over GF(p) in
formal variables.  A :class:`TapeSampler` hands the dealer a fresh variable
for every uniform draw, the honest inputs stay concrete, and the messages a
party ends up with are polynomials in the dealer's randomness.

The distribution of such a view (all variables uniform and independent) is
reduced to a canonical form:

* a coordinate that contains some variable linearly and that variable
  nowhere else in the view is uniform and independent of the rest; it is
  replaced by a marker and the search repeats;
* what remains must be affine, ``o + M r``, whose distribution is the uniform
  distribution on the coset ``o + colspace(M)``: it is recorded as the
  reduced row echelon basis of the column space plus the offset reduced
  against that basis.

Two views with equal forms have identical distributions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .discriminator import DiscriminatorPoly, ts_integer
from .field import Modulus
from .mac import TaggedArray
from .protocol import Encoded, ProtocolParams, Session
from .sss import interpolate_coeffs
from .ttp import initialize
from .wire import FEDERATOR, Real

Monomial = tuple[int, ...]  # sorted variable ids, repeated for powers


class NonAffineView(RuntimeError):
    pass


class Sym:
    """Polynomial over GF(p) with integer-named variables."""

    __slots__ = ("terms", "p")
    __array_priority__ = 100

    def __init__(self, terms: dict[Monomial, int], p: int):
        self.p = p
        self.terms = {m: c % p for m, c in terms.items() if c % p}

    @classmethod
    def var(cls, v: int, p: int) -> "Sym":
        return cls({(v,): 1}, p)

    @classmethod
    def const(cls, c: int, p: int) -> "Sym":
        return cls({(): int(c)}, p)

    def _lift(self, other) -> "Sym":
        if isinstance(other, Sym):
            return other
        if isinstance(other, (int, np.integer)):
            return Sym.const(int(other), self.p)
        return NotImplemented

    def __add__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0) + c
        return Sym(out, self.p)

    __radd__ = __add__

    def __neg__(self) -> "Sym":
        return Sym({m: -c for m, c in self.terms.items()}, self.p)

    def __sub__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        out: dict[Monomial, int] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(sorted(m1 + m2))
                out[m] = out.get(m, 0) + c1 * c2
        return Sym(out, self.p)

    __rmul__ = __mul__

    def __mod__(self, p: int) -> "Sym":
        if p != self.p:
            raise ValueError("mixed moduli")
        return self

    def __eq__(self, other) -> bool:
        other = self._lift(other)
        if other is NotImplemented:
            return False
        return self.terms == other.terms

    def __ne__(self, other) -> bool:
        return not self == other

    __hash__ = None

    @property
    def is_const(self) -> bool:
        return all(m == () for m in self.terms)

    def __int__(self) -> int:
        if not self.is_const:
            raise TypeError("not a constant")
        return self.terms.get((), 0)

    __index__ = __int__

    @property
    def degree(self) -> int:
        return max((len(m) for m in self.terms), default=0)

    def variables(self) -> set[int]:
        return {v for m in self.terms for v in m}

    def linear_vars(self) -> set[int]:
        """Variables that occur only in the degree-one monomial ``(v,)``."""
        lin = {m[0] for m in self.terms if len(m) == 1}
        nonlin = {v for m in self.terms if len(m) > 1 for v in m}
        return lin - nonlin

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        return " + ".join(f"{c}*" + "*".join(f"r{v}" for v in m) if m else str(c) for m, c in sorted(self.terms.items()))


class TapeSampler:
    """Dealer randomness as fresh formal variables."""

    def __init__(self, p: int):
        self.p = p
        self.count = 0

    def uniform(self, modulus: Modulus, shape) -> np.ndarray:
        shape = (int(shape),) if np.ndim(shape) == 0 else tuple(int(s) for s in shape)
        size = int(np.prod(shape)) if shape else 1
        out = np.empty(size, dtype=object)
        for j in range(size):
            out[j] = Sym.var(self.count, self.p)
            self.count += 1
        return out.reshape(shape)

    def nonzero(self, modulus: Modulus):
        raise NotImplementedError("pass alpha explicitly")


# ---------------------------------------------------------------------------
# canonical forms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ViewForm:
    public: tuple  # non-field entries, compared verbatim
    uniform: tuple[int, ...]  # positions peeled as independent uniform
    positions: tuple[int, ...]  # positions of the affine remainder
    basis: tuple[tuple[int, ...], ...]  # RREF basis of the column space
    offset: tuple[int, ...]


def _as_sym(x, p: int) -> Sym:
    return x if isinstance(x, Sym) else Sym.const(int(x) % p, p)


def peel(coords: list[Sym]) -> tuple[list[int], list[int]]:
    """Indices peeled as uniform and the remaining indices."""
    alive = set(range(len(coords)))
    occurs: dict[int, set[int]] = {}
    for idx, c in enumerate(coords):
        for v in c.variables():
            occurs.setdefault(v, set()).add(idx)
    peeled = []
    changed = True
    while changed:
        changed = False
        for idx in sorted(alive):
            for v in coords[idx].linear_vars():
                if occurs[v] & alive == {idx}:
                    peeled.append(idx)
                    alive.discard(idx)
                    changed = True
                    break
    return sorted(peeled), sorted(alive)


def _rref(rows: list[list[int]], p: int) -> list[list[int]]:
    rows = [list(r) for r in rows]
    out = []
    col = 0
    width = len(rows[0]) if rows else 0
    while rows and col < width:
        piv = next((r for r in rows if r[col] % p), None)
        if piv is None:
            col += 1
            continue
        rows.remove(piv)
        inv = pow(piv[col], -1, p)
        piv = [x * inv % p for x in piv]
        rows = [[(a - r[col] * b) % p for a, b in zip(r, piv)] for r in rows]
        out = [[(a - r[col] * b) % p for a, b in zip(r, piv)] for r in out]
        out.append(piv)
        col += 1
    return [r for r in out if any(r)]


def affine_form(coords: Sequence[Sym], p: int) -> tuple[tuple, tuple]:
    """(RREF basis of the column space, reduced offset) of ``o + M r``."""
    for c in coords:
        if c.degree > 1:
            raise NonAffineView(f"non-affine coordinate after peeling: {c!r}")
    variables = sorted(set().union(*(c.variables() for c in coords))) if coords else []
    # columns of M as row vectors
    cols = [[c.terms.get((v,), 0) for c in coords] for v in variables]
    basis = _rref(cols, p) if cols else []
    offset = [c.terms.get((), 0) for c in coords]
    for row in basis:
        lead = next(j for j, x in enumerate(row) if x)
        f = offset[lead]
        if f:
            offset = [(o - f * r) % p for o, r in zip(offset, row)]
    return tuple(tuple(r) for r in basis), tuple(offset)


def canonical(entries: list, p: int) -> ViewForm:
    public = tuple(e for e in entries if not isinstance(e, (Sym, int, np.integer)))
    coords = [_as_sym(e, p) for e in entries if isinstance(e, (Sym, int, np.integer))]
    uniform, rest = peel(coords)
    basis, offset = affine_form([coords[i] for i in rest], p)
    return ViewForm(public, tuple(uniform), tuple(rest), basis, offset)


# ---------------------------------------------------------------------------
# views
# ---------------------------------------------------------------------------


def _flatten(obj, out: list, tags: bool = True) -> None:
    if isinstance(obj, Real):
        out.append(("real", tuple(np.asarray(obj).ravel().tolist())))
    elif isinstance(obj, TaggedArray):
        out.extend(np.asarray(obj.values, dtype=object).ravel().tolist())
        if tags:
            out.extend(np.asarray(obj.tags, dtype=object).ravel().tolist())
    elif isinstance(obj, np.ndarray):
        out.extend(obj.ravel().tolist())
    elif isinstance(obj, dict):
        for key in sorted(obj, key=str):
            out.append(("key", str(key)))
            _flatten(obj[key], out, tags)
    elif isinstance(obj, (tuple, list)):
        out.append(("ids", tuple(obj)))
    elif isinstance(obj, str):
        out.append(("str", obj))
    else:
        out.append(obj)


def client_view(session: Session, res, i: int) -> list:
    """Client ``i``'s dealer material plus every message it received."""
    out: list = []
    mat = session.clients[i].material
    out.extend(np.asarray(mat.own_mask, dtype=object).ravel().tolist())
    for lab in sorted(mat.shares):
        _flatten(mat.shares[lab], out)
    for m in res.transcript.select(receiver=i):
        out.append(("msg", m.step, m.kind))
        _flatten(m.payload, out)
    return out


def federator_view(session: Session, res, t: int) -> list:
    """Everything the clients sent to the federator.

    Tags are left out: with the federator's own keys they are a function of
    the values, and the keys are independent of everything else.  Shares
    sent by several holders for the same quantity are replaced by the
    coefficients of the interpolating polynomial; the coefficients above
    degree ``t`` must vanish and are dropped.
    """
    p = session.params.modulus.p
    groups: dict[tuple, dict[int, list]] = {}
    order: list[tuple] = []
    out: list = []
    for m in res.transcript.select(receiver=FEDERATOR):
        if m.kind == "MaskedUpdate":
            out.append(("msg", m.step, m.kind, m.sender))
            _flatten(m.payload, out, tags=False)
            continue
        key = (m.kind, m.payload.get("round"))
        vals: list = []
        _flatten({k: v for k, v in m.payload.items() if k != "round"}, vals, tags=False)
        if key not in groups:
            groups[key] = {}
            order.append(key)
        groups[key][m.sender] = vals
    for key in order:
        senders = sorted(groups[key])
        out.append(("group", key, tuple(senders)))
        rows = [groups[key][s] for s in senders]
        for pos in range(len(rows[0])):
            column = [r[pos] for r in rows]
            if not isinstance(column[0], (Sym, int, np.integer)):
                out.append(column[0])
                continue
            coeffs = interpolate_coeffs(senders, [_as_sym(c, p) for c in column], Modulus(p))
            for c in coeffs[t + 1 :]:
                if not _as_sym(c, p) == 0:
                    raise AssertionError(f"inconsistent sharing in {key}")
            out.extend(coeffs[: t + 1])
    return out


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TinyInstance:
    p: int = 11
    n: int = 3
    t: int = 1
    d: int = 1
    q: int = 2
    q_c: int = 4
    eps: float = 0.5
    alpha: int = 3
    coeffs: tuple[float, ...] = (0.01363545, 0.1860353, 0.56578977, 0.46897526)

    @property
    def h(self) -> DiscriminatorPoly:
        return DiscriminatorPoly(self.coeffs, self.q_c)


def symbolic_round(inst: TinyInstance, root: Sequence[int], inputs: dict[int, Sequence[int]]):
    """One round with symbolic dealer randomness and the given (already
    quantized) inputs; returns the session and the round result."""
    m = Modulus(inst.p)
    tape = TapeSampler(inst.p)
    setup = initialize(
        inst.n, inst.t, inst.d, inst.h.k, inst.q, 1, 0,
        modulus=m, alpha=inst.alpha, digests=False, sampler_for=lambda g: tape,
    )
    params = ProtocolParams(inst.n, inst.t, inst.d, inst.q, inst.eps, inst.h, m)
    session = Session(setup, params, 0)

    def enc(vec) -> Encoded:
        ints = np.array([int(v) for v in vec], dtype=np.int64)
        return Encoded(m.array(ints.tolist()), ints, 1.0)

    encoded = {i: enc(v) for i, v in inputs.items()}
    res = session.run_round(0, np.zeros(inst.d), {}, None, encoded=encoded, root=enc(root), decode=False)
    return session, res


def field_sums(inst: TinyInstance, root, inputs: dict[int, Sequence[int]], active: Iterable[int]) -> tuple[int, int]:
    """(Sigma1, Sigma2) mod p for d = 1."""
    s1 = s2 = 0
    for i in active:
        cos = sum(int(a) * int(b) for a, b in zip(root, inputs[i]))
        ts = ts_integer(inst.h, cos, inst.q)
        s1 += ts
        s2 += ts * int(inputs[i][0])
    return s1 % inst.p, s2 % inst.p


def projective(a: int, b: int, p: int):
    """The point (a : b) of the projective line, or (0, 0)."""
    if a % p:
        return (1, b * pow(a, -1, p) % p)
    if b % p:
        return (0, 1)
    return (0, 0)


@dataclass
class ViewReport:
    assignments: int
    distinct_forms: int
    groups: int
    consistent: bool
    detail: dict


def check_client_view(inst: TinyInstance, observer: int = 1, own=(1,), root=(2,)) -> ViewReport:
    """Client ``observer``'s view for every field assignment of the other
    clients' inputs (its own input fixed).  Needs a loose ``eps`` so that no
    input is excluded."""
    others = [i for i in range(1, inst.n + 1) if i != observer]
    forms = {}
    for vals in itertools.product(range(inst.p), repeat=len(others) * inst.d):
        inputs = {observer: tuple(own)}
        for j, i in enumerate(others):
            inputs[i] = tuple(vals[j * inst.d : (j + 1) * inst.d])
        session, res = symbolic_round(inst, root, inputs)
        if res.aborted:
            raise RuntimeError(f"round aborted: {res.aborted}")
        forms[vals] = canonical(client_view(session, res, observer), inst.p)
    distinct = len(set(forms.values()))
    return ViewReport(len(forms), distinct, 1, distinct == 1, {})


def check_federator_view(inst: TinyInstance, root=(2,)) -> ViewReport:
    """Federator's view for every assignment of unit-norm inputs ``+-q``,
    grouped by the projective point of (Sigma1, Sigma2)."""
    by_group: dict[tuple, set] = {}
    ratios: dict[tuple, set] = {}
    total = 0
    for signs in itertools.product((1, -1), repeat=inst.n * inst.d):
        inputs = {i: tuple(inst.q * s for s in signs[(i - 1) * inst.d : i * inst.d]) for i in range(1, inst.n + 1)}
        session, res = symbolic_round(inst, root, inputs)
        if res.aborted:
            raise RuntimeError(f"round aborted: {res.aborted}")
        s1, s2 = field_sums(inst, root, inputs, res.active)
        key = projective(s1, s2, inst.p)
        form = canonical(federator_view(session, res, inst.t), inst.p)
        by_group.setdefault(key, set()).add(form)
        ratios.setdefault(key, set()).add(_ratio(inst, root, inputs, res.active))
        total += 1
    within = all(len(f) == 1 for f in by_group.values())
    all_forms = set().union(*by_group.values())
    detail = {"groups": {str(k): sorted(str(r) for r in v) for k, v in ratios.items()}}
    return ViewReport(total, len(all_forms), len(by_group), within, detail)


def _ratio(inst: TinyInstance, root, inputs, active):
    s1 = s2 = 0
    for i in active:
        ts = ts_integer(inst.h, sum(int(a) * int(b) for a, b in zip(root, inputs[i])), inst.q)
        s1 += ts
        s2 += ts * int(inputs[i][0])
    return Fraction(s2, s1) if s1 else None
