"""Linear algebra at a saddle point: Hamiltonian linearization, quadratic
phases of its invariant manifolds and the small eigenproblem fixing the
Eyring-Kramers prefactor.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (ComplexLeftmostEigenvalue, ImaginaryAxisSpectrum,
                     MultipleNonpositiveEigenvalues, NotAGraph)


@dataclass(frozen=True)
class SaddleData:
    location: np.ndarray
    hess_v: np.ndarray
    m0: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.hess_v, dtype=float))
        M = np.atleast_2d(np.asarray(self.m0, dtype=float))
        object.__setattr__(self, "hess_v", H)
        object.__setattr__(self, "m0", M)
        object.__setattr__(self, "location", np.atleast_1d(np.asarray(self.location, float)))
        ev = np.linalg.eigvalsh(H)
        if np.count_nonzero(ev < 0) != 1:
            raise ValueError("Hess V at a saddle must have exactly one negative eigenvalue")

    @property
    def dim(self):
        return self.hess_v.shape[0]

    @property
    def mu(self):
        """The negative eigenvalue of Hess V."""
        return float(np.linalg.eigvalsh(self.hess_v)[0])

    @property
    def hess_w(self):
        """Hessian of ``W = V/2 + |v|^2/4`` at ``(s, 0)``."""
        d = self.dim
        return sla.block_diag(self.hess_v / 2.0, np.eye(d) / 2.0)


@dataclass
class SaddlePrefactor:
    alpha0: float
    nu: np.ndarray
    hess_phi_plus: np.ndarray
    det_identity_residual: float
    alpha_crosscheck_residual: float
    eigen_residual: float
    phi_spectrum: np.ndarray = field(repr=False, default=None)

    @property
    def nu1(self):
        return self.nu[: self.nu.size // 2]

    @property
    def nu2(self):
        return self.nu[self.nu.size // 2:]


def linearization_F(sd, tol=1e-8):
    """The 4d x 4d Hamiltonian linearization at the saddle.

    Raises ImaginaryAxisSpectrum if the spectrum touches the imaginary axis or
    is not symmetric under ``lam -> -lam``.
    """
    d = sd.dim
    I = np.eye(d)
    Z = np.zeros((d, d))
    H, M = sd.hess_v, sd.m0
    F = np.block([[Z, I, Z, Z],
                  [-H, Z, Z, 2.0 * M],
                  [Z, Z, Z, H],
                  [Z, 0.5 * M, -I, Z]])
    ev = np.linalg.eigvals(F)
    scale = max(1.0, np.abs(ev).max())
    if np.min(np.abs(ev.real)) <= tol * scale:
        raise ImaginaryAxisSpectrum(f"eigenvalue with |Re| = {np.min(np.abs(ev.real)):.3e}")
    for lam in ev:
        if np.min(np.abs(ev + lam)) > tol * scale:
            raise ImaginaryAxisSpectrum(f"spectrum not centrally symmetric at {lam}")
    if np.count_nonzero(ev.real > 0) != 2 * d:
        raise ImaginaryAxisSpectrum("unbalanced split across the imaginary axis")
    return F


def _graph(F, sort, d):
    T, U, k = sla.schur(F, output="real", sort=sort)
    if k != 2 * d:
        raise ImaginaryAxisSpectrum(f"invariant subspace of dimension {k}, expected {2 * d}")
    base, fibre = U[: 2 * d, : 2 * d], U[2 * d:, : 2 * d]
    sv = np.linalg.svd(base, compute_uv=False)
    if sv[-1] < 1e-10 * sv[0]:
        raise NotAGraph(f"base block singular (cond {sv[0] / max(sv[-1], 1e-300):.2e})")
    return np.linalg.solve(base.T, fibre.T).T  # fibre @ inv(base)


def stable_phase(sd):
    """Hessians of the generating phases of the invariant Lagrangian planes.

    ``hess_phi_plus`` is the graph of the expanding subspace (positive
    definite), ``hess_phi_minus`` that of the contracting one (negative
    definite).
    """
    F = linearization_F(sd)
    d = sd.dim
    Gp = _graph(F, "rhp", d)
    Gm = _graph(F, "lhp", d)
    for G, sign, tag in ((Gp, 1.0, "plus"), (Gm, -1.0, "minus")):
        asym = np.abs(G - G.T).max()
        if asym > 1e-9 * max(1.0, np.abs(G).max()):
            raise NotAGraph(f"phi_{tag} graph not symmetric ({asym:.2e})")
        if np.linalg.eigvalsh(sign * (G + G.T) / 2).min() <= 0:
            raise NotAGraph(f"{'+' if sign > 0 else '-'}Hess phi_{tag} not positive definite")
    return (Gp + Gp.T) / 2, (Gm + Gm.T) / 2


def phi_eigenproblem(sd):
    """Solve the 2d x 2d eigenproblem whose negative eigenvalue is ``-alpha0``.

    The eigenvector ``nu`` is scaled so that
    ``det(Hess W + nu nu^T) = 2^{-2d} |det Hess V|``; by the matrix
    determinant lemma this is linear in the squared scale and solved in
    closed form.  The overall sign of ``nu`` is left arbitrary.
    """
    d = sd.dim
    I = np.eye(d)
    Z = np.zeros((d, d))
    Phi = np.block([[Z, -sd.hess_v], [I, sd.m0]])
    w, V = np.linalg.eig(Phi)
    left = np.flatnonzero(w.real <= 0)
    if left.size != 1:
        raise MultipleNonpositiveEigenvalues(f"{left.size} eigenvalues with Re <= 0: {w[left]}")
    i = left[0]
    lam = w[i]
    if abs(lam.imag) > 1e-12 * max(1.0, abs(lam)):
        raise ComplexLeftmostEigenvalue(f"leftmost eigenvalue {lam}")
    alpha0 = -float(lam.real)
    vec = V[:, i]
    vec = vec * np.exp(-1j * np.angle(vec[np.argmax(np.abs(vec))]))
    nu = vec.real
    nu /= np.linalg.norm(nu)
    if np.linalg.norm(nu[d:]) < 1e-12:
        raise ComplexLeftmostEigenvalue("velocity component of the eigenvector vanishes")
    HW = sd.hess_w
    target = 2.0 ** (-2 * d) * abs(np.linalg.det(sd.hess_v))
    q = nu @ np.linalg.solve(HW, nu)
    det_hw = np.linalg.det(HW)
    t2 = (target / det_hw - 1.0) / q
    if not t2 > 0:
        raise ComplexLeftmostEigenvalue("determinant normalisation has no real solution")
    nu = nu * np.sqrt(t2)
    hpp = HW + np.outer(nu, nu)
    det_res = abs(np.linalg.det(hpp) - target) / target
    m0nn = float(nu[d:] @ sd.m0 @ nu[d:])
    return SaddlePrefactor(
        alpha0=alpha0,
        nu=nu,
        hess_phi_plus=hpp,
        det_identity_residual=det_res,
        alpha_crosscheck_residual=abs(m0nn - alpha0) / max(alpha0, 1e-300),
        eigen_residual=float(np.linalg.norm(Phi @ nu + alpha0 * nu) / (alpha0 * np.linalg.norm(nu))),
        phi_spectrum=w,
    )


def bgk_closed_form(mu, rho_prime0):
    """Closed-form ``alpha0`` and ``|nu2|^2`` for ``M0 = rho'(0) Id``.

    Uses the cancellation-free form ``-2 mu / (r + sqrt(r^2 - 4 mu))`` which
    equals ``(-r + sqrt(r^2 - 4 mu)) / 2``.
    """
    r = float(rho_prime0)
    mu = float(mu)
    alpha0 = -2.0 * mu / (r + np.sqrt(r * r - 4.0 * mu))
    return alpha0, alpha0 / r


def debug_dump(sd):
    """Structured snapshot of the saddle matrices for inspection."""
    F = linearization_F(sd)
    pre = phi_eigenproblem(sd)
    return {
        "location": sd.location.tolist(),
        "F": F.tolist(),
        "F_spectrum": [[z.real, z.imag] for z in np.linalg.eigvals(F)],
        "Phi_spectrum": [[z.real, z.imag] for z in pre.phi_spectrum],
        "alpha0": pre.alpha0,
        "nu": pre.nu.tolist(),
    }
