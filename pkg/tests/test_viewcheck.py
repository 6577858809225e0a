from dataclasses import replace

import pytest

from itsecagg import viewcheck
from itsecagg.viewcheck import Sym, TapeSampler, TinyInstance, canonical, check_client_view, check_federator_view

TINY = TinyInstance()
LOOSE = replace(TINY, eps=3.0)  # no input is ever excluded by the norm check


def _pinned(call: int, value: int):
    """A dealer whose ``call``-th draw is the constant ``value``."""

    class Pinned(TapeSampler):
        def __init__(self, p):
            super().__init__(p)
            self.calls = 0

        def uniform(self, modulus, shape):
            out = super().uniform(modulus, shape)
            self.calls += 1
            if self.calls - 1 == call:
                flat = out.reshape(-1)
                for j in range(flat.size):
                    flat[j] = Sym.const(value, self.p)
            return out

    return Pinned


def test_canonical_forms():
    p = 11
    x, y = Sym.var(0, p), Sym.var(1, p)
    assert canonical([x + 3, 5], p) == canonical([x, 5], p)
    assert canonical([x + y, x - y], p) == canonical([2 * x + y + 1, x - y], p)
    assert canonical([x, x], p) != canonical([x, y], p)
    assert canonical([x, 2 * x], p) != canonical([x, 3 * x], p)
    with pytest.raises(viewcheck.NonAffineView):
        canonical([x * y, 1], p)


def test_federator_view_depends_only_on_ratio():
    rep = check_federator_view(TINY)
    assert rep.assignments == 2 ** (TINY.n * TINY.d)
    assert rep.consistent
    for ratios in rep.detail["groups"].values():
        assert len(ratios) == 1


def test_client_view_independent_of_other_inputs():
    rep = check_client_view(LOOSE)
    assert rep.assignments == LOOSE.p ** ((LOOSE.n - 1) * LOOSE.d)
    assert rep.consistent and rep.distinct_forms == 1


def test_federator_check_detects_missing_masks(monkeypatch):
    # zero masks: the federator sees every client's input in the clear
    monkeypatch.setattr(viewcheck, "TapeSampler", _pinned(0, 0))
    rep = check_federator_view(TINY)
    assert not rep.consistent


def test_federator_lambda_leak_adds_nothing_for_sign_inputs(monkeypatch):
    # with +-q inputs the sums are fixed by the ratio, so even lambda = 1
    # leaves one form per group
    monkeypatch.setattr(viewcheck, "TapeSampler", _pinned(1, 1))
    rep = check_federator_view(TINY)
    assert rep.consistent and rep.distinct_forms == rep.groups


def test_client_check_detects_missing_masks(monkeypatch):
    # zero masks: the masked broadcast equals the other clients' inputs
    monkeypatch.setattr(viewcheck, "TapeSampler", _pinned(0, 0))
    rep = check_client_view(LOOSE)
    assert not rep.consistent and rep.distinct_forms > 1
