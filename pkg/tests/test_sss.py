import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itsecagg.field import Modulus
from itsecagg.rngs import FieldSampler
from itsecagg.sss import (
    SharingError,
    interpolate_coeffs,
    is_consistent,
    lincomb,
    reconstruct,
    reconstruct_array,
    share,
    share_array,
)

from conftest import ScriptedSampler


def test_share_example():
    m = Modulus(11)
    shares = share(m(5), 3, 1, ScriptedSampler([2]))
    assert [int(s.value) for s in shares] == [7, 9, 0]
    for pair in itertools.combinations(shares, 2):
        assert int(reconstruct(list(pair), 1)) == 5


def test_share_errors(sampler):
    m = Modulus(11)
    with pytest.raises(SharingError):
        share(m(1), 3, 3, sampler)
    with pytest.raises(SharingError):
        share_array(np.array([1]), 11, 2, m, sampler)
    shares = share(m(5), 3, 1, sampler)
    with pytest.raises(SharingError):
        reconstruct(shares[:1], 1)
    with pytest.raises(SharingError):
        reconstruct([shares[0], shares[0]], 1)


@given(st.integers(1, 8), st.data())
@settings(max_examples=60, deadline=None)
def test_roundtrip_any_subset(n, data):
    t = data.draw(st.integers(0, n - 1))
    p = data.draw(st.sampled_from([11, 101, 2**61 - 1, 2**127 - 1]))
    if p <= n:
        return
    m = Modulus(p)
    secret = data.draw(st.integers(0, p - 1))
    shares = share(m(secret), n, t, FieldSampler(np.random.default_rng(data.draw(st.integers(0, 99)))))
    subset = data.draw(st.lists(st.sampled_from(shares), min_size=t + 1, unique_by=lambda s: s.index))
    assert int(reconstruct(subset, t)) == secret


def test_privacy_enumeration():
    # p=11, n=4, t=1: any single share is uniform for every secret
    p, n, t = 11, 4, 1
    m = Modulus(p)
    for idx in range(1, n + 1):
        dists = []
        for secret in range(p):
            counts = Counter()
            for c in range(p):
                counts[int(share(m(secret), n, t, ScriptedSampler([c]))[idx - 1].value)] += 1
            dists.append(counts)
        assert all(d == Counter({v: 1 for v in range(p)}) for d in dists)


def test_array_sharing_and_linearity(sampler):
    m = Modulus(101)
    a, b = np.array([3, 50, 100], dtype=object), np.array([7, 60, 1], dtype=object)
    A = share_array(a, 5, 2, m, sampler)
    B = share_array(b, 5, 2, m, sampler)
    pts = [1, 3, 5]
    combo = (4 * A + B + 9) % 101
    got = reconstruct_array(pts, [combo[i - 1] for i in pts], m)
    assert got.tolist() == [(4 * x + y + 9) % 101 for x, y in zip(a, b)]


def test_lincomb_scalar(sampler):
    m = Modulus(101)
    sa, sb = share(m(10), 4, 1, sampler), share(m(20), 4, 1, sampler)
    out = [lincomb([x, y], [m(2), m(3)], m(5)) for x, y in zip(sa, sb)]
    assert int(reconstruct(out[1:3], 1)) == (2 * 10 + 3 * 20 + 5) % 101
    with pytest.raises(SharingError):
        lincomb([sa[0], sb[1]], [m(1), m(1)])


def test_consistency_and_coeffs(sampler):
    m = Modulus(101)
    shares = share_array(np.array([42], dtype=object), 6, 2, m, sampler)[:, 0]
    pts = list(range(1, 7))
    assert is_consistent(pts, shares.tolist(), 2, m)
    assert interpolate_coeffs(pts, shares.tolist(), m)[0] == 42
    bad = shares.tolist()
    bad[3] = (bad[3] + 1) % 101
    assert not is_consistent(pts, bad, 2, m)
