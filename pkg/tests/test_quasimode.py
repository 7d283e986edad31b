import dataclasses

import numpy as np
import pytest
from scipy import integrate
from scipy.special import erf

from boltzspec import collision, landscape as ls, potential as pt, quasimode as qm
from boltzspec.errors import CollarOverlap, GridTooCoarse
from boltzspec.saddledyn import SaddleData, phi_eigenproblem

from .conftest import operator, tilted

BGK = collision.CollisionModel.bgk()


def quasi(h, **kw):
    _, _, L = tilted()
    return qm.build_quasimode(L, L.non_global()[0], h, BGK, qm.QuasimodeParams(**kw) if kw else None)


def test_smoothstep_and_zeta():
    t = np.linspace(-1, 2, 301)
    s = qm.smoothstep(t)
    assert np.all(s[t <= 0] == 0) and np.all(s[t >= 1] == 1)
    assert np.all(np.diff(s) >= 0)
    assert qm.smoothstep(0.5) == pytest.approx(0.5)
    z = qm.zeta(np.array([0.0, 1.0, 2.0, 3.0, 4.0, 5.0]), 4.0)
    assert list(z[:3]) == [1.0, 1.0, 1.0] and z[-1] == 0 and z[4] == 0 and 0 < z[3] < 1


@pytest.mark.parametrize("h", [0.2, 0.05, 0.01])
def test_normaliser(h):
    q = quasi(h)
    g = q.gamma
    ref, _ = integrate.quad(lambda s: qm.zeta(s, g) * np.exp(-s * s / (2 * h)), 0, g,
                            points=[g / 2], epsabs=0, epsrel=1e-13, limit=400)
    assert q.A_h == pytest.approx(ref, rel=1e-9)
    assert np.sqrt(np.pi * h / 2) * 0.999 <= q.A_h <= np.sqrt(np.pi * h / 2)
    assert q.profile(np.array([g + 1.0]))[0] == pytest.approx(q.A_h, rel=1e-12)


def test_theta_shape():
    q = quasi(0.05)
    c = q.collars[0]
    s, m = c.location, q.x_min
    assert q.theta(s, 0.0) == pytest.approx(0.5, abs=1e-14)
    ell = c.ell(m, 0.0)
    assert 0 < ell < q.gamma / 2
    assert q.theta(m, 0.0) == pytest.approx(0.5 * (1 + erf(ell / np.sqrt(2 * q.h))), abs=1e-14)
    assert c.ell(s + 0.01 * np.sign(m - s), 0.0) > 0
    # beyond the collar on the far side theta vanishes identically
    far = s - np.sign(m - s) * (q.gamma + 0.1) / abs(c.nu[0])
    assert q.theta(far, 0.0) == 0.0
    xs = np.linspace(far, m, 400)
    th = q.theta(xs, 0.0)
    assert np.all(np.diff(th) * np.sign(m - far) >= -1e-15)


def test_nu_sign_flip_invariance():
    _, _, L = tilted()
    e = L.non_global()[0]
    s = e.saddles[0]
    pre = phi_eigenproblem(SaddleData(s.location, s.hessian, np.eye(1) * BGK.rate.rho_prime0))
    flipped = dataclasses.replace(pre, nu=-pre.nu)
    a = qm.build_quasimode(L, e, 0.1, BGK, prefactors={float(s.location[0]): pre})
    b = qm.build_quasimode(L, e, 0.1, BGK, prefactors={float(s.location[0]): flipped})
    X, Vv = np.meshgrid(np.linspace(-1, 2, 50), np.linspace(-1, 1, 30), indexing="ij")
    assert np.array_equal(a(X, Vv), b(X, Vv))


def test_build_guards():
    _, _, L = tilted()
    with pytest.raises(ValueError):
        qm.build_quasimode(L, L.global_minimum, 0.1, BGK)
    q = qm.build_quasimode(L, 0.9, 0.1, BGK)  # by location
    assert q.x_min == pytest.approx(L.non_global()[0].point.location[0])


def test_grid_too_coarse():
    with pytest.raises(GridTooCoarse):
        qm.sample(quasi(0.05), nx=50, nv=51)


def test_transport_form_vanishes():
    rep = qm.rayleigh_report(quasi(0.1), operator("tilted", 0.1))
    assert rep.transport_relative <= 1e-10
    assert rep.transport_relative_discrete <= 1e-10
    assert abs(rep.projection_defect) <= 1e-6
    assert rep.discrete == pytest.approx(rep.value, rel=0.05)


def test_residual_ordering():
    ratios = []
    for h in (0.2, 0.1):
        q = quasi(h)
        pf, psf, form = qm.quasimode_residual(q, operator("tilted", h))
        assert form > 0
        assert pf <= psf
        ratios.append((pf / form, psf / form))
    assert ratios[1][0] < ratios[0][0] / 2
    assert ratios[1][1] < ratios[0][1]


@pytest.mark.parametrize("h", [0.05, 0.025, 0.0125])
def test_normalisation_order_h(h):
    r = qm.norm_ratio(quasi(h))
    assert abs(r - 1.0) <= 2.0 * h


def test_rayleigh_trend():
    from .conftest import predictions
    (p,) = predictions("tilted")
    r = [qm.rayleigh_quotient(quasi(h)) / p.lambda_leading(h) for h in (0.2, 0.1, 0.05)]
    assert r[0] < r[1] < r[2] < 1.0


def test_rayleigh_needs_model():
    q = dataclasses.replace(quasi(0.1), model=None)
    with pytest.raises(ValueError):
        qm.rayleigh_report(q)


# ---------------------------------------------------------------- Laplace method

def test_laplace_quadratic_exact():
    phi = lambda x, y: 0.5 * (2 * x * x + x * y + y * y)
    rows = qm.laplace_check(phi, lambda x, y: np.ones_like(x), [0.1, 0.05], (0.0, 0.0),
                            hess=np.array([[2.0, 0.5], [0.5, 1.0]]))
    assert all(abs(r.error) <= 1e-10 for r in rows)


def test_laplace_cubic_error_over_h_stable():
    phi = lambda x, y: 0.5 * (x * x + y * y) + 0.2 * x ** 3 + 0.1 * x ** 4
    a = lambda x, y: 1.0 + 0.5 * x
    rows = qm.laplace_check(phi, a, [0.02, 0.01, 0.005], (0.0, 0.0), half_width=2.0, n=1201)
    q = [r.error_over_h for r in rows]
    assert abs(q[-1]) > 0.01
    assert abs(q[0] / q[1] - 1) < 0.1 and abs(q[1] / q[2] - 1) < 0.05


def test_laplace_vanishing_amplitude():
    # a = x^2 at the minimum of x^2/2 + y^2/2: the integral is exactly h
    rows = qm.laplace_check(lambda x, y: 0.5 * (x * x + y * y), lambda x, y: x * x, [0.1, 0.05],
                            (0.0, 0.0), hess=np.eye(2))
    for r in rows:
        assert r.a0 == 0 and r.error_over_h == pytest.approx(1.0, rel=1e-8)


def test_laplace_guards():
    with pytest.raises(ValueError):
        qm.laplace_check(lambda x, y: x * y, lambda x, y: 1 + 0 * x, [0.1], (0, 0))
    with pytest.raises(GridTooCoarse):
        qm.laplace_check(lambda x, y: x * x + y * y, lambda x, y: 1 + 0 * x, [1e-4], (0, 0), n=101)


# ---------------------------------------------------------------- two boundary saddles

def _symmetric_labeling():
    # V = 2x^2 - 3x^4 + x^6: a central well bounded by two saddles of equal height
    P = pt.polynomial_1d([0, 0, 2, 0, -3, 0, 1], (-2.2, 2.2), "sextic")
    crit = ls.find_critical_points(P)
    mins = [c for c in crit if c.index == 0]
    sads = [c for c in crit if c.index == 1]
    centre = min(mins, key=lambda c: abs(c.location[0]))
    outer = [c for c in mins if c is not centre]
    sigma = 0.5 * sads[0].value
    grid = ls.make_grid(P, 4001)
    entries = [ls.LabeledMinimum(outer[0], 1, 1, np.inf, np.inf, [], None),
               ls.LabeledMinimum(centre, 2, 1, sigma, sigma - 0.5 * centre.value, sads, None)]
    return ls.Labeling(entries, [sigma], grid, P.name, P)


def test_two_collars():
    L = _symmetric_labeling()
    q = qm.build_quasimode(L, L.minima[1], 0.01, BGK, qm.QuasimodeParams(gamma=0.3, eps_tilde=0.05))
    assert len(q.collars) == 2
    for c in q.collars:
        assert q.theta(c.location, 0.0) == pytest.approx(0.5, abs=1e-6)
    assert q.theta(0.0, 0.0) == pytest.approx(1.0, abs=1e-12)


def test_collar_overlap_detected():
    L = _symmetric_labeling()
    with pytest.raises(CollarOverlap):
        qm.build_quasimode(L, L.minima[1], 0.2, BGK, qm.QuasimodeParams(gamma=4.5, eps_tilde=0.05))
