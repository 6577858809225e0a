import itertools

import numpy as np
import pytest

from itsecagg.beaver import KINDS, PreprocessingExhausted, triple_budget
from itsecagg.field import Modulus
from itsecagg.sss import reconstruct_array
from itsecagg.ttp import audit, deserialize_material, initialize, labels, serialize_material
from itsecagg.viewcheck import Sym, TapeSampler, _rref


def small_setup(**kw):
    args = dict(n=3, t=1, d=4, k=3, q=8, iterations=2, seed=5)
    args.update(kw)
    return initialize(args.pop("n"), args.pop("t"), args.pop("d"), args.pop("k"), args.pop("q"), args.pop("iterations"), args.pop("seed"), **args)


def test_pool_sizes_match_budget():
    s = small_setup(iterations=1)
    budget = triple_budget(3, 3, 4)
    for b in s.bundles:
        pools = b.material(0).pools()
        assert {k: pools[k].remaining for k in KINDS} == budget


def test_masks_reconstruct_from_any_t_plus_one():
    s = small_setup(n=5, t=2)
    p = s.modulus.p
    for g in range(2):
        mats = [b.material(g) for b in s.bundles]
        for sub in itertools.combinations(range(5), 3):
            pts = [mats[i].index for i in sub]
            for j in range(5):
                vals = [mats[i].shares["mask"].values[j] for i in sub]
                assert reconstruct_array(pts, vals, s.modulus).tolist() == list(mats[j].own_mask)
        lam = reconstruct_array([1, 2, 3], [mats[i].shares["lambda"].values for i in range(3)], s.modulus)
        assert 0 <= int(lam) < p


def test_every_tag_verifies():
    s = small_setup()
    p, alpha = s.modulus.p, s.keys.alpha
    for g in range(2):
        for b in s.bundles:
            m = b.material(g)
            for lab in labels():
                ta = m.shares[lab]
                beta = s.keys.beta(g, lab, b.index)
                assert np.all((ta.tags - alpha * ta.values - beta) % p == 0)


def test_audit_clean_and_violations():
    s = small_setup(eager=True)
    assert audit(s.bundles, s.keys) == []
    store = s.bundles[0]._store
    store._cache[0].values["scalar.c"][0][1] += 1
    problems = audit(s.bundles, s.keys)
    assert any("scalar" in x for x in problems)
    s2 = small_setup(eager=True)
    del s2.keys.registry[(1, "svec.z")]
    assert any("missing beta" in x for x in audit(s2.bundles, s2.keys))


def test_lazy_matches_eager_and_horizon():
    lazy, eager = small_setup(), small_setup(eager=True)
    for g in (1, 0, 1):
        for a, b in zip(lazy.bundles, eager.bundles):
            ma, mb = a.material(g), b.material(g)
            assert list(ma.own_mask) == list(mb.own_mask)
            for lab in labels():
                assert np.array_equal(ma.shares[lab].values, mb.shares[lab].values)
                assert np.array_equal(ma.shares[lab].tags, mb.shares[lab].tags)
    with pytest.raises(PreprocessingExhausted, match="preprocessing exhausted"):
        lazy.bundles[0].material(2)


def test_digests_gated():
    s = small_setup(digests=False)
    with pytest.raises(PermissionError):
        s.keys.digest(0)
    assert "mask" in small_setup().keys.digest(0)


def test_serialization_roundtrip():
    s = small_setup()
    m = s.bundles[1].material(1)
    data = serialize_material(m, s.modulus)
    back, mod = deserialize_material(data)
    assert mod == s.modulus and back.index == 2 and back.g == 1
    assert list(back.own_mask) == list(m.own_mask)
    for lab in labels():
        assert np.array_equal(back.shares[lab].values, m.shares[lab].values)
        assert np.array_equal(back.shares[lab].tags, m.shares[lab].tags)
    assert serialize_material(back, mod) == data
    keys = s.keys.key_material(1, 2)
    assert deserialize_material(serialize_material(keys, s.modulus))[0].own_mask is None


def _linear_rows(syms, variables, p):
    rows = []
    for x in syms:
        x = x if isinstance(x, Sym) else Sym.const(int(x), p)
        rows.append([x.terms.get((v,), 0) % p for v in variables])
    return rows


def _component(coords, seed_vars):
    """Variables connected to ``seed_vars`` through shared coordinates."""
    comp, changed = set(seed_vars), True
    while changed:
        changed = False
        for c in coords:
            vs = c.variables()
            if vs & comp and not vs <= comp:
                comp |= vs
                changed = True
    return comp


def test_bundle_privacy_exhaustive_small_field():
    """Holder 1's bundle plus every MAC key: other clients' masks stay
    uniform and independent of everything seen."""
    p = 11
    tape = TapeSampler(p)
    s = initialize(3, 1, 1, 3, 2, 1, 0, modulus=Modulus(p), alpha=3, digests=False, sampler_for=lambda g: tape)
    mat = s.bundles[0].material(0)
    seen = list(np.asarray(mat.own_mask, dtype=object).ravel())
    for lab in labels():
        seen += list(np.asarray(mat.shares[lab].values, dtype=object).ravel())
        seen += list(np.asarray(mat.shares[lab].tags, dtype=object).ravel())
        seen += list(np.asarray(s.keys.betas(0, lab), dtype=object).ravel())
    seen = [x for x in seen if isinstance(x, Sym)]
    masks = s.keys._store.get(0).secrets["mask"]
    for j in (1, 2):
        target = masks[j][0]
        # the block of the view that touches this mask is affine, and the
        # rest uses disjoint variables, so a rank test decides independence
        comp = _component(seen, target.variables())
        block = [x for x in seen if x.variables() & comp]
        assert all(x.degree <= 1 for x in block)
        cols = sorted(comp)
        base = _rref(_linear_rows(block, cols, p), p)
        assert len(_rref(base + _linear_rows([target], cols, p), p)) == len(base) + 1
    # control: the holder's own mask is determined by its view
    own = masks[0][0]
    cols = sorted(_component(seen, own.variables()))
    block = [x for x in seen if x.variables() & set(cols)]
    base = _rref(_linear_rows(block, cols, p), p)
    assert len(_rref(base + _linear_rows([own], cols, p), p)) == len(base)
