import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from boltzspec import saddledyn as sdm
from boltzspec.errors import ImaginaryAxisSpectrum, MultipleNonpositiveEigenvalues

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def sd1(mu=-1.0, m0=1.0):
    return sdm.SaddleData([0.0], [[mu]], [[m0]])


def sd2():
    return sdm.SaddleData([0.0, 0.0], np.diag([-1.0, 2.0]), np.eye(2))


def test_F_split_d1():
    ev = np.linalg.eigvals(sdm.linearization_F(sd1()))
    assert np.count_nonzero(ev.real > 0) == 2


def test_F_spectrum_against_companion_roots():
    # characteristic polynomial from exact symbolic algebra, roots by companion matrix
    lam = sympy.symbols("lam")
    mu, m = sympy.Integer(-1), sympy.Integer(1)
    F = sympy.Matrix([[0, 1, 0, 0], [-mu, 0, 0, 2 * m], [0, 0, 0, mu], [0, sympy.Rational(1, 2) * m, -1, 0]])
    coeffs = [float(c) for c in sympy.Poly((F - lam * sympy.eye(4)).det(), lam).all_coeffs()]
    ref = np.sort_complex(np.roots(coeffs))
    got = np.sort_complex(np.linalg.eigvals(sdm.linearization_F(sd1())))
    assert np.allclose(got, ref, atol=1e-10)


def test_F_d2_split():
    ev = np.linalg.eigvals(sdm.linearization_F(sd2()))
    assert ev.size == 8 and np.count_nonzero(ev.real > 0) == 4


def test_F_rejects_imaginary_axis():
    # M0 = 0 makes the linearization a conservative oscillator on the stable direction
    sd = sdm.SaddleData([0.0, 0.0], np.diag([-1.0, 2.0]), np.zeros((2, 2)))
    with pytest.raises(ImaginaryAxisSpectrum):
        sdm.linearization_F(sd)


def test_stable_phase_d1():
    Gp, Gm = sdm.stable_phase(sd1())
    assert np.linalg.eigvalsh(Gp).min() > 0
    assert np.linalg.eigvalsh(-Gm).min() > 0
    pre = sdm.phi_eigenproblem(sd1())
    assert np.allclose(Gp, pre.hess_phi_plus, atol=1e-10)
    assert abs(np.linalg.det(Gp) - 0.25) < 1e-8 * 0.25


def test_stable_phase_d2_symmetric():
    Gp, Gm = sdm.stable_phase(sd2())
    assert Gp.shape == (4, 4)
    assert np.abs(Gp - Gp.T).max() <= 1e-9 and np.abs(Gm - Gm.T).max() <= 1e-9


def test_alpha0_examples():
    pre = sdm.phi_eigenproblem(sd1())
    assert abs(pre.alpha0 - GOLDEN) < 1e-12
    assert abs(pre.nu2[0] ** 2 - GOLDEN) < 1e-12
    assert pre.det_identity_residual < 1e-8
    assert pre.eigen_residual < 1e-10
    tiny = sdm.phi_eigenproblem(sd1(mu=-1e-6))
    assert abs(tiny.alpha0 - 1e-6) < 1e-11
    pre2 = sdm.phi_eigenproblem(sd2())
    assert abs(pre2.alpha0 - GOLDEN) < 1e-12
    assert abs(pre2.nu2[1]) < 1e-12 * abs(pre2.nu2[0])  # aligned with the unstable direction


def test_alpha0_rotated_d2():
    # block-diagonalisation oracle: rotate Hess V, alpha0 is that of the negative eigenvalue
    th = 0.7
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    H = R @ np.diag([-2.5, 1.3]) @ R.T
    pre = sdm.phi_eigenproblem(sdm.SaddleData([0, 0], H, 1.7 * np.eye(2)))
    ref, _ = sdm.bgk_closed_form(-2.5, 1.7)
    assert abs(pre.alpha0 - ref) < 1e-12 * ref
    assert abs(abs(pre.nu2 @ R[:, 0]) - np.linalg.norm(pre.nu2)) < 1e-10


def test_closed_form_examples():
    a, n2 = sdm.bgk_closed_form(-1.0, 1.0)
    assert abs(a - GOLDEN) < 1e-15 and abs(n2 - GOLDEN) < 1e-15
    assert sdm.bgk_closed_form(-6.0, 1.0)[0] == pytest.approx(2.0, rel=1e-15)
    a, _ = sdm.bgk_closed_form(-1.0, 1e3)
    assert abs(a - 1e-3) < 1e-8  # overdamped: -mu/r - mu^2/r^3 + ...


def test_multiple_nonpositive():
    # an indefinite "M0" breaks the single-eigenvalue structure
    sd = sdm.SaddleData([0.0, 0.0], np.diag([-1.0, 2.0]), np.diag([1.0, -3.0]))
    with pytest.raises(MultipleNonpositiveEigenvalues):
        sdm.phi_eigenproblem(sd)


@settings(max_examples=100, deadline=None)
@given(mu=st.floats(-10, -0.01), r=st.floats(0.05, 20), d=st.sampled_from([1, 2]),
       other=st.floats(0.1, 5.0))
def test_closed_form_agreement(mu, r, d, other):
    H = np.diag([mu, other][:d])
    pre = sdm.phi_eigenproblem(sdm.SaddleData(np.zeros(d), H, r * np.eye(d)))
    a, n2 = sdm.bgk_closed_form(mu, r)
    assert abs(pre.alpha0 - a) <= 1e-10 * a
    assert abs(pre.nu2 @ pre.nu2 - n2) <= 1e-9 * n2
    assert pre.det_identity_residual <= 1e-8
    assert pre.alpha_crosscheck_residual <= 1e-10


@settings(max_examples=40, deadline=None)
@given(mu=st.floats(-5, -0.05), r=st.floats(0.1, 10), c=st.floats(0.2, 5))
def test_scale_covariance(mu, r, c):
    pre = sdm.phi_eigenproblem(sd1(mu, c * r))
    a = pre.alpha0
    assert abs(a * a + c * r * a + mu) <= 1e-10 * max(1.0, a * a)


def test_sign_flip_covariance():
    pre = sdm.phi_eigenproblem(sd1(-2.0, 0.7))
    nu = -pre.nu
    hpp = sd1(-2.0, 0.7).hess_w + np.outer(nu, nu)
    assert np.allclose(hpp, pre.hess_phi_plus)


def test_debug_dump():
    out = sdm.debug_dump(sd1())
    assert len(out["F"]) == 4 and abs(out["alpha0"] - GOLDEN) < 1e-12
