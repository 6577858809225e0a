import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itsecagg.beaver import (
    PARTS,
    PreprocessingExhausted,
    TriplePool,
    TripleReuse,
    gen_triple,
    gen_triples,
    mul_complete,
    mul_open,
    triple_budget,
)
from itsecagg.beaver import dot_complete, svec_complete
from itsecagg.field import Modulus
from itsecagg.mac import TaggedArray, tag_array, verify_array
from itsecagg.rngs import FieldSampler
from itsecagg.sss import reconstruct_array, share_array

KIND_OPS = {
    "scalar": (mul_complete, "a", "b"),
    "dot": (dot_complete, "o", "v"),
    "svec": (svec_complete, "x", "y"),
}


def shared_inputs(x, n, t, m, sampler, alpha):
    x = m.array(x)
    vals = share_array(x, n, t, m, sampler)
    betas = sampler.uniform(m, vals.shape)
    return [tag_array(vals[i], alpha, betas[i], m.p) for i in range(n)], [
        TaggedArray.key_form(betas[i], m.p) for i in range(n)
    ]


def run_mul(kind, x, y, n=5, t=2, p=2**61 - 1, seed=0, d=3):
    """Multiply shared x and y with a fresh triple; returns the product
    reconstructed from shares and the per-party MAC verdicts."""
    m = Modulus(p)
    s = FieldSampler(np.random.default_rng(seed))
    alpha = int(s.nonzero(m))
    gen = gen_triples(kind, 1, n, t, d, m, s, alpha)
    complete, first, second = KIND_OPS[kind]
    X, Xk = shared_inputs(x, n, t, m, s, alpha)
    Y, Yk = shared_inputs(y, n, t, m, s, alpha)
    pts = list(range(1, n + 1))
    diffs = []
    for i in range(n):
        tr = gen.party(i + 1)
        diffs.append(mul_open(X[i], Y[i], tr[first], tr[second]))
    d_open = reconstruct_array(pts[: t + 1], [dd[0].values for dd in diffs[: t + 1]], m)
    e_open = reconstruct_array(pts[: t + 1], [dd[1].values for dd in diffs[: t + 1]], m)
    outs, ok = [], []
    for i in range(n):
        out = complete(gen.party(i + 1), d_open, e_open)
        key = complete(gen.keys(i + 1), d_open, e_open)
        outs.append(out.values)
        ok.append(bool(np.all(verify_array(out, key, alpha))))
    z = reconstruct_array(pts[: t + 1], outs[: t + 1], m)
    return z, ok, d_open, e_open


def test_triple_relations(sampler):
    m = Modulus(101)
    for kind in PARTS:
        gen = gen_triples(kind, 4, 3, 1, 5, m, sampler, 7)
        for j in range(4):
            tr = gen.triple(j)
            if kind == "scalar":
                assert tr.c == tr.a * tr.b % 101
            elif kind == "dot":
                assert tr.w == sum(a * b for a, b in zip(tr.o, tr.v)) % 101
            else:
                assert list(tr.z) == [tr.x * y % 101 for y in tr.y]


def test_dot_triple_example(sampler):
    gen = gen_triple("dot", 3, 1, 2, Modulus(101), sampler, 5, {"o": [1, 2], "v": [3, 4]})
    assert gen.triple(0).w == 11


def test_plaintext_shadow_example():
    # x=3, y=4 with triple (1, 2, 2): d=2, e=2, z = c + b*d + a*e + d*e = 12
    x, y, a, b = 3, 4, 1, 2
    c = a * b
    d, e = x - a, y - b
    assert (d, e) == (2, 2)
    assert c + b * d + a * e + d * e == 12


@pytest.mark.parametrize("kind", ["scalar", "dot", "svec"])
@given(seed=st.integers(0, 10**6))
@settings(max_examples=15, deadline=None)
def test_multiplication_correct(kind, seed):
    p = 2**61 - 1
    rng = np.random.default_rng(seed)
    d = 3
    if kind == "scalar":
        x, y = rng.integers(0, 10**9, 1).tolist(), rng.integers(0, 10**9, 1).tolist()
        want = [x[0] * y[0] % p]
    elif kind == "dot":
        x, y = [rng.integers(0, 10**9, d).tolist()], [rng.integers(0, 10**9, d).tolist()]
        want = [sum(a * b for a, b in zip(x[0], y[0])) % p]
    else:
        x, y = rng.integers(0, 10**9, 1).tolist(), [rng.integers(0, 10**9, d).tolist()]
        want = [[x[0] * v % p for v in y[0]]]
    z, ok, _, _ = run_mul(kind, x, y, seed=seed, d=d)
    assert np.asarray(z).tolist() == want
    assert all(ok)


def test_product_shares_are_authenticated():
    p = 2**61 - 1
    m = Modulus(p)
    s = FieldSampler(np.random.default_rng(5))
    alpha = int(s.nonzero(m))
    n, t = 4, 1
    gen = gen_triples("scalar", 1, n, t, 1, m, s, alpha)
    X, Xk = shared_inputs([6], n, t, m, s, alpha)
    Y, Yk = shared_inputs([7], n, t, m, s, alpha)
    diffs = [mul_open(X[i], Y[i], gen.party(i + 1)["a"], gen.party(i + 1)["b"]) for i in range(n)]
    kdiffs = [mul_open(Xk[i], Yk[i], gen.keys(i + 1)["a"], gen.keys(i + 1)["b"]) for i in range(n)]
    for (dd, ee), (kd, ke) in zip(diffs, kdiffs):
        assert verify_array(dd, kd, alpha).all() and verify_array(ee, ke, alpha).all()
    d_open = reconstruct_array([1, 2], [diffs[0][0].values, diffs[1][0].values], m)
    e_open = reconstruct_array([1, 2], [diffs[0][1].values, diffs[1][1].values], m)
    outs = []
    for i in range(n):
        out = mul_complete(gen.party(i + 1), d_open, e_open)
        key = mul_complete(gen.keys(i + 1), d_open, e_open)
        assert verify_array(out, key, alpha).all()
        outs.append(out.values)
    assert reconstruct_array([3, 4], outs[2:], m).tolist() == [42]


def test_triple_budget_examples():
    assert triple_budget(10, 3, 50) == {"dot": 10, "scalar": 21, "svec": 11}
    assert triple_budget(1, 1, 1) == {"dot": 1, "scalar": 1, "svec": 2}


def test_pool_reuse_and_exhaustion(sampler):
    gen = gen_triples("scalar", 3, 3, 1, 1, Modulus(101), sampler, 2)
    pool = TriplePool(gen.party(1))
    pool.take(2)
    assert pool.remaining == 1
    with pytest.raises(TripleReuse):
        pool.take_indices([0])
    with pytest.raises(PreprocessingExhausted):
        pool.take(2)


def test_openings_uniform_exhaustive():
    # The opened difference x - a is uniform over the field for every x.
    p = 11
    for x in range(p):
        counts = Counter((x - a) % p for a in range(p))
        assert counts == Counter(range(p))
    # and jointly with y - b
    for x, y in itertools.product(range(p), repeat=2):
        pairs = Counter(((x - a) % p, (y - b) % p) for a in range(p) for b in range(p))
        assert len(pairs) == p * p and set(pairs.values()) == {1}


def test_dimension_mismatch(sampler):
    from itsecagg.beaver import dot_mul

    gen = gen_triples("dot", 1, 3, 1, 4, Modulus(101), sampler, 2)
    tr = gen.party(1)
    x = TaggedArray(np.zeros((1, 3), dtype=object), np.zeros((1, 3), dtype=object), 101)
    with pytest.raises(ValueError):
        dot_mul(x, x, tr, lambda a, b: (a.values, b.values))
