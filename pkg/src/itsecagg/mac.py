"""One-time information-theoretic MACs on shares.

A share ``x[i]`` carries the tag ``alpha * x[i] + beta``: ``alpha`` is fixed
per deployment and ``beta`` is fresh for every share handed out.  Tags are
linear in the share, so any public linear map applied to shares can be applied
to their tags as well.  Adding a public constant moves the value but leaves the
tag alone; the verifier subtracts that constant before checking.

The federator never trusts a client's account of which keys went into a
message.  It keeps a *key form* of every share, a :class:`TaggedArray` whose
value slot holds the accumulated public offset and whose tag slot holds the
combined ``beta``, and replays the same public program on key forms as the
clients run on real shares.  The two slot rules line up exactly (public
constants land in the value slot, scaling and addition act on both), so the
replay is literally the client code run on different inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from .sss import SharingError, ValueShare


@dataclass(frozen=True)
class MacKey:
    alpha: int
    beta: int


@dataclass(frozen=True)
class TaggedShare:
    share: ValueShare
    tag: int
    key_id: tuple[tuple[Hashable, int], ...]
    offset: int = 0

    @property
    def index(self) -> int:
        return self.share.index


def tag(share: ValueShare, key: MacKey, label: Hashable = None) -> TaggedShare:
    p = share.value.modulus.p
    t = (key.alpha * share.value.value + key.beta) % p
    return TaggedShare(share, t, ((label, 1),))


def lincomb_tagged(
    tagged: Sequence[TaggedShare],
    coeffs: Sequence[int],
    offset: int = 0,
) -> TaggedShare:
    if not tagged:
        raise ValueError("nothing to combine")
    if len(tagged) != len(coeffs):
        raise ValueError("one coefficient per share")
    if len({ts.index for ts in tagged}) != 1:
        raise SharingError("shares come from different indices")
    m = tagged[0].share.value.modulus
    p = m.p
    value = offset
    tag_acc = 0
    combo: dict[Hashable, int] = {}
    off = offset
    for ts, c in zip(tagged, coeffs):
        value += c * ts.share.value.value
        tag_acc += c * ts.tag
        off += c * ts.offset
        for label, w in ts.key_id:
            combo[label] = (combo.get(label, 0) + c * w) % p
    key_id = tuple((lab, w) for lab, w in combo.items() if w)
    return TaggedShare(ValueShare(tagged[0].index, m(value)), tag_acc % p, key_id, off % p)


def combined_beta(key_id, betas: Mapping[Hashable, int], p: int) -> int:
    return sum(w * betas[label] for label, w in key_id) % p


def verify(claimed_value, claimed_tag, alpha, combined_beta, public_offset, p: int) -> bool:
    return (claimed_tag - alpha * (claimed_value - public_offset) - combined_beta) % p == 0


class TaggedArray:
    """Share values with their tags, vectorized over any shape."""

    __slots__ = ("values", "tags", "p")

    def __init__(self, values: np.ndarray, tags: np.ndarray, p: int):
        self.values = values
        self.tags = tags
        self.p = p

    @classmethod
    def key_form(cls, betas: np.ndarray, p: int) -> "TaggedArray":
        return cls(np.zeros(np.shape(betas), dtype=object), betas, p)

    @classmethod
    def stack(cls, items: Sequence["TaggedArray"]) -> "TaggedArray":
        return cls(
            np.stack([it.values for it in items]),
            np.stack([it.tags for it in items]),
            items[0].p,
        )

    @property
    def shape(self):
        return np.shape(self.values)

    def __getitem__(self, key) -> "TaggedArray":
        return TaggedArray(self.values[key], self.tags[key], self.p)

    def __add__(self, other: "TaggedArray") -> "TaggedArray":
        return TaggedArray((self.values + other.values) % self.p, (self.tags + other.tags) % self.p, self.p)

    def __sub__(self, other: "TaggedArray") -> "TaggedArray":
        return TaggedArray((self.values - other.values) % self.p, (self.tags - other.tags) % self.p, self.p)

    def scale(self, c) -> "TaggedArray":
        return TaggedArray(self.values * c % self.p, self.tags * c % self.p, self.p)

    def add_public(self, c) -> "TaggedArray":
        return TaggedArray((self.values + c) % self.p, self.tags, self.p)

    def dot_public(self, vec: np.ndarray) -> "TaggedArray":
        """Inner product over the last axis with a public vector."""
        return TaggedArray(
            (self.values * vec).sum(axis=-1) % self.p,
            (self.tags * vec).sum(axis=-1) % self.p,
            self.p,
        )

    def sum(self, axis: int = 0) -> "TaggedArray":
        return TaggedArray(self.values.sum(axis=axis) % self.p, self.tags.sum(axis=axis) % self.p, self.p)

    def __repr__(self) -> str:
        return f"TaggedArray(shape={self.shape})"


def verify_array(claimed: TaggedArray, expected: TaggedArray, alpha) -> np.ndarray:
    """Element-wise MAC check of ``claimed`` against its key form."""
    p = claimed.p
    diff = (claimed.tags - alpha * (claimed.values - expected.values) - expected.tags) % p
    return np.asarray(diff == 0, dtype=bool)


def tag_array(values: np.ndarray, alpha, betas: np.ndarray, p: int) -> TaggedArray:
    return TaggedArray(values, (alpha * values + betas) % p, p)
