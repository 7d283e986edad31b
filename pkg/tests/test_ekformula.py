import numpy as np
import pytest

from boltzspec import ekformula as ek, landscape as ls, potential as pt
from boltzspec.errors import AmbiguousLambdaStar
from boltzspec.saddledyn import bgk_closed_form

from .conftest import predictions, tilted, triple
from .oracles import bracket_roots


def _d2(P, x):
    return float(P.hess(np.array([x]))[0, 0])


def test_bgk_single_saddle_closed_form(bgk):
    P, _, L = tilted()
    s = bracket_roots(lambda x: x ** 3 - x + 0.1, -0.5, 0.5)[0]
    m = bracket_roots(lambda x: x ** 3 - x + 0.1, 0.5, 1.5)[0]
    r = bgk.rate.rho_prime0
    _, n2 = bgk_closed_form(_d2(P, s), r)
    amp = np.sqrt(_d2(P, m)) / (2 * np.pi) * abs(_d2(P, s)) ** -0.5 * r * n2
    S = 0.5 * float(P.eval(np.array([s])) - P.eval(np.array([m])))
    (p,) = predictions("tilted")
    for h in (0.2, 0.05, 0.01):
        ref = h * np.exp(-2 * S / h) * amp
        assert p.lambda_leading(h) == pytest.approx(ref, rel=1e-10)
    assert p.arrhenius == pytest.approx(2 * S, rel=1e-12)


def test_log_lambda_structure():
    # log(lambda / h) is affine in 1/h with slope -2S
    for p in predictions("triple"):
        inv = np.array([5.0, 10.0, 20.0, 40.0])
        y = np.log(p.lambda_leading(1 / inv) * inv)
        slope, icpt = np.polyfit(inv, y, 1)
        assert slope == pytest.approx(-2 * p.S, rel=1e-10)
        assert icpt == pytest.approx(np.log(p.amplitude), rel=1e-8, abs=1e-10)


def test_sorted_by_barrier():
    S = [p.S for p in predictions("triple")]
    assert S == sorted(S, reverse=True) and len(S) == 2
    assert [p.label for p in predictions("triple")] == [(2, 1), (3, 1)]


@pytest.mark.parametrize("c", [-2.0, 5.0])
def test_shift_invariance(bgk, c):
    P, _, _ = triple()
    _, L = ls.analyze(P.shifted(c))
    for a, b in zip(predictions("triple"), ek.predict(L, bgk)):
        assert b.S == pytest.approx(a.S, abs=1e-10)
        assert b.lambda_leading(0.1) == pytest.approx(a.lambda_leading(0.1), rel=1e-8)


@pytest.mark.parametrize("stiffness", [1.0, 2.5])
def test_two_dimensional_reduces_to_one(bgk, stiffness):
    # a harmonic transverse direction cancels between det Hess at m and at s
    _, L = ls.analyze(pt.double_well_2d(stiffness=stiffness))
    (p2,) = ek.predict(L, bgk.with_dim(2))
    (p1,) = predictions("tilted")
    assert p2.S == pytest.approx(p1.S, abs=1e-10)
    assert p2.lambda_leading(0.1) == pytest.approx(p1.lambda_leading(0.1), rel=1e-8)


def _fake(loc, value, hess):
    H = np.atleast_2d(hess)
    ev = np.linalg.eigvalsh(H)
    return ls.CriticalPoint(np.atleast_1d(float(loc)), int(np.count_nonzero(ev < 0)), value, H, ev)


def test_two_saddle_sum(bgk):
    m = _fake(0.0, 0.0, 2.0)
    s1, s2 = _fake(-1.0, 0.5, -1.0), _fake(1.0, 0.5, -3.0)
    g = _fake(3.0, -1.0, 1.0)
    entries = [ls.LabeledMinimum(g, 1, 1, np.inf, np.inf, [], None),
               ls.LabeledMinimum(m, 2, 1, 0.25, 0.25, [s1, s2], None)]
    L = ls.Labeling(entries, [0.25], None)
    (p,) = ek.predict(L, bgk)
    t1, _ = ek.saddle_term(s1, bgk)
    t2, _ = ek.saddle_term(s2, bgk)
    assert p.prefactor_leading == pytest.approx(t1 + t2, rel=1e-14)
    assert len(p.saddle_terms) == 2
    r = bgk.rate.rho_prime0
    assert t2 == pytest.approx(3 ** -0.5 * r * bgk_closed_form(-3.0, r)[1], rel=1e-10)


def _pred(S, amp_pre, det=1.0):
    return ek.EKPrediction(_fake(0.0, 0.0, det), S, 2 * S, amp_pre, det)


def test_select_lambda_star():
    a, b, c = _pred(0.3, 1.0), _pred(0.5, 2.0), _pred(0.5, 1.0)
    assert ek.select_lambda_star([a, b, c]) is c
    assert ek.select_lambda_star([a]) is a
    with pytest.raises(AmbiguousLambdaStar):
        ek.select_lambda_star([_pred(0.5, 1.0), _pred(0.5, 1.0)])
    with pytest.raises(ValueError):
        ek.select_lambda_star([])


def test_nonpositive_prefactor_rejected():
    with pytest.raises(ValueError):
        _pred(0.3, 0.0)


def test_export():
    out = ek.export(predictions("tilted"), [0.1])
    assert out[0]["label"] == [2, 1] and "0.1" in out[0]["lambda"]
