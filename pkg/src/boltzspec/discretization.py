"""Finite-dimensional representation of the kinetic operator in d = 1.

Unknowns are Hermite coefficients ``c_n(x)`` on a uniform interior grid with
homogeneous Dirichlet ends.  With ``b`` the velocity ladder operator and
``a = h d/dx + V'/2`` the transport part is ``b* a - b a*`` (equivalently
``v h d/dx - V' h d/dv``) and the collision part is ``rho(h n)`` on level n.

Schemes
-------
``central``
    ``(b + b*) (x) h D - (b - b*)/2 (x) diag(V')`` with the centred stencil D.
    Second order, exactly skew, but the discrete Maxwellian is only an
    approximate kernel and odd/even decoupling produces spurious modes.
``staggered`` (default)
    ``b* (x) A - b (x) A^T`` with ``A = E (h D) E^{-1}``, ``E = diag(exp(-V/2h))``,
    restricted to the sublattice where level parity matches node parity:
    even levels live on even fine nodes, odd levels on odd ones.  Exactly
    skew transport and an exact one-dimensional kernel.
``upwind``
    Characteristic upwinding of ``v h d/dx`` in the eigenbasis of ``b + b*``;
    first order, with positive semi-definite symmetric part.
"""

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .collision import ladder_matrices
from .errors import SingularShift, TailMass, WindowTooSmall

SCHEMES = ("staggered", "central", "upwind")


@dataclass(eq=False)
class AssembledOperator:
    h: float
    nx: int
    dx: float  # spacing between nodes of one Hermite level
    xmin: float
    xmax: float
    n_hermite: int
    matrix: sp.csr_matrix
    scheme: str
    x: np.ndarray  # x position of every unknown
    level: np.ndarray  # Hermite level of every unknown
    potential: object = field(repr=False, default=None)
    model: object = field(repr=False, default=None)
    transport: sp.csr_matrix = field(repr=False, default=None)
    _lu_cache: dict = field(repr=False, default_factory=dict)
    _lock: object = field(repr=False, default_factory=threading.Lock)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def size(self):
        return self.matrix.shape[0]

    @property
    def mass_weights(self):
        return np.full(self.size, self.dx)

    @property
    def parity(self):
        """Velocity reflection ``v -> -v``: ``(-1)^n`` on level n."""
        return np.where(self.level % 2 == 0, 1.0, -1.0)

    def norm(self, u):
        return float(np.sqrt(self.dx) * np.linalg.norm(u))

    def inner(self, u, w):
        return self.dx * np.vdot(w, u)

    def level_nodes(self, n):
        sel = self.level == n
        return self.x[sel], np.flatnonzero(sel)

    def kernel_vector(self):
        """Discrete Maxwellian ``exp(-(V - min V)/2h)`` on level 0, unit norm."""
        g = np.zeros(self.size)
        xs, idx = self.level_nodes(0)
        V = self.potential.v1(xs)
        g[idx] = np.exp(-(V - V.min()) / (2.0 * self.h))
        return g / self.norm(g)

    def from_coefficients(self, coeff):
        """Vector from a callable ``coeff(n, x) -> c_n(x)``."""
        u = np.zeros(self.size)
        for n in range(self.n_hermite):
            xs, idx = self.level_nodes(n)
            u[idx] = coeff(n, xs)
        return u

    def level_norms(self, u):
        return np.array([np.linalg.norm(u[self.level == n]) for n in range(self.n_hermite)])

    def apply(self, u):
        return apply(self, u)

    def solve_shifted(self, z, rhs):
        return solve_shifted(self, z, rhs)

    def export_triplets(self, path):
        """Write the matrix in Matrix Market coordinate format."""
        scipy.io.mmwrite(path, self.matrix, comment=f"h={self.h} scheme={self.scheme}")


def _grid_minmax_too_close(P, x, margin):
    dv = P.dv1(x)
    crit = np.flatnonzero(np.sign(dv[1:]) != np.sign(dv[:-1]))
    if crit.size == 0:
        return False
    xc = x[crit]
    return bool(np.min(xc - x[0]) < margin or np.min(x[-1] - xc) < margin)


def _check_window(P, h, lo, hi):
    xs = np.linspace(lo, hi, 4001)
    V = P.v1(xs)
    edge = np.exp(-(np.array([V[0], V[-1]]) - V.min()) / (2.0 * h)).max()
    if edge > 1e-8:
        raise WindowTooSmall(f"equilibrium density {edge:.2e} at the boundary (h={h})")
    if _grid_minmax_too_close(P, xs, 4.0 * np.sqrt(h)):
        raise WindowTooSmall("critical point within 4 sqrt(h) of the boundary")


def _centred(n, dx):
    e = np.ones(n - 1) / (2.0 * dx)
    return sp.diags([-e, e], [-1, 1], shape=(n, n), format="csr")


def assemble(P, model, h, nx, n_hermite, scheme="staggered", window=None, check_tail=True):
    """Assemble the operator on ``nx`` nodes per Hermite level.

    :param P: one-dimensional potential.
    :param model: collision model (Hermite diagonal).
    :param h: semiclassical parameter.
    :param nx: interior nodes per Hermite level.
    :param n_hermite: number of Hermite levels (>= 8).
    :param scheme: ``"staggered"``, ``"central"`` or ``"upwind"``.
    :param window: optional ``(xmin, xmax)`` override.
    :param check_tail: run one inverse-iteration step on the Maxwellian and
        check the weight of the two top Hermite levels.
    :raises WindowTooSmall: boundary density above 1e-8 or structures too close.
    :raises TailMass: top levels of the kernel vector carry more than 1e-6.
    """
    if P.dim != 1:
        raise ValueError("assembly is implemented for d = 1")
    if n_hermite < 8:
        raise ValueError("n_hermite must be >= 8")
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    lo, hi = (P.window[0] if window is None else window)
    lo, hi = float(lo), float(hi)
    _check_window(P, h, lo, hi)
    N = n_hermite
    B, Bt = ladder_matrices(h, N - 1)
    rates = np.asarray(model.level_rate(h * np.arange(N)), dtype=float)
    rates[0] = 0.0

    if scheme == "staggered":
        nf = 2 * nx
        xf = np.linspace(lo, hi, nf + 2)[1:-1]
        dxf = xf[1] - xf[0]
        e = P.v1(xf) / (2.0 * h)
        up = np.exp(e[1:] - e[:-1])
        A = sp.diags([-np.exp(e[:-1] - e[1:]), up], [-1, 1], shape=(nf, nf)) * (h / (2.0 * dxf))
        X = sp.kron(Bt, A) - sp.kron(B, A.T)
        Qm = sp.kron(sp.diags(rates), sp.identity(nf))
        lev = np.repeat(np.arange(N), nf)
        idx = np.tile(np.arange(nf), N)
        keep = np.flatnonzero((lev + idx) % 2 == 0)
        X = sp.csr_matrix(X)[keep][:, keep]
        Qm = sp.csr_matrix(Qm)[keep][:, keep]
        xs, levels, dx = xf[idx[keep]], lev[keep], 2.0 * dxf
    else:
        xg = np.linspace(lo, hi, nx + 2)[1:-1]
        dx = xg[1] - xg[0]
        Vp = sp.diags(P.dv1(xg))
        force = -sp.kron((B - Bt) / 2.0, Vp)
        if scheme == "central":
            adv = sp.kron(B + Bt, h * _centred(nx, dx))
        else:
            lam, U = np.linalg.eigh((B + Bt).toarray())
            e1 = np.ones(nx)
            Dm = sp.diags([e1, -e1[:-1]], [0, -1], shape=(nx, nx)) / dx
            Dp = sp.diags([-e1, e1[:-1]], [0, 1], shape=(nx, nx)) / dx
            Us = sp.kron(sp.csr_matrix(U), sp.identity(nx))
            core = (sp.kron(sp.diags(np.maximum(lam, 0.0)), h * Dm)
                    + sp.kron(sp.diags(np.minimum(lam, 0.0)), h * Dp))
            adv = Us @ core @ Us.T
            adv.data[np.abs(adv.data) < 1e-15 * np.abs(adv.data).max()] = 0.0
            adv.eliminate_zeros()
        X = adv + force
        Qm = sp.kron(sp.diags(rates), sp.identity(nx))
        xs = np.tile(xg, N)
        levels = np.repeat(np.arange(N), nx)
    A_full = sp.csr_matrix(X + Qm)
    A_full.sort_indices()
    opr = AssembledOperator(h=float(h), nx=int(nx), dx=float(dx), xmin=lo, xmax=hi,
                            n_hermite=N, matrix=A_full, scheme=scheme, x=xs, level=levels,
                            potential=P, model=model, transport=sp.csr_matrix(X))
    if check_tail:
        tail = kernel_tail_mass(opr)
        if tail > 1e-6:
            raise TailMass(f"top Hermite levels carry {tail:.2e} of the kernel vector")
    return opr


def regularizing_shift(opr):
    """Small negative real shift used to factor near the exact kernel."""
    return -1e-3 * opr.h ** 2


def kernel_tail_mass(opr):
    g = opr.kernel_vector()
    w = solve_shifted(opr, regularizing_shift(opr), g)
    w = np.real(w)
    norms = opr.level_norms(w)
    return float(np.sqrt(norms[-2] ** 2 + norms[-1] ** 2) / np.linalg.norm(w))


def apply(opr, u):
    """Exact matrix action."""
    u = np.asarray(u)
    if u.shape[0] != opr.size:
        raise ValueError("dimension mismatch")
    return opr.matrix @ u


def _factor(opr, z):
    key = complex(z)
    lu = opr._lu_cache.get(key)
    if lu is not None:
        return lu
    with opr._lock:
        lu = opr._lu_cache.get(key)
        if lu is None:
            M = opr.matrix.astype(complex if key.imag != 0 else float)
            M = (M - key * sp.identity(opr.size, format="csr")) if key.imag != 0 else \
                (M - key.real * sp.identity(opr.size, format="csr"))
            try:
                lu = spla.splu(sp.csc_matrix(M))
            except RuntimeError as exc:
                raise SingularShift(f"factorisation failed at z={z}: {exc}") from exc
            opr._lu_cache[key] = lu
    return lu


def shifted_factor(opr, z):
    """Cached sparse LU of ``A - z I``."""
    return _factor(opr, z)


def solve_shifted(opr, z, rhs, trans="N", rtol=1e-10, max_refine=5):
    """Solve ``(A - z I) w = rhs`` by sparse LU plus iterative refinement.

    ``trans="H"`` solves with the conjugate transpose instead.

    :raises SingularShift: ``z`` is numerically an eigenvalue.
    """
    rhs = np.asarray(rhs)
    lu = _factor(opr, z)
    z = complex(z)
    M = opr.matrix if trans == "N" else opr.matrix.T
    zz = z if trans == "N" else z.conjugate()
    real_ok = z.imag == 0 and not np.iscomplexobj(rhs)

    def lsolve(b):
        if np.iscomplexobj(b) and z.imag == 0:
            return lu.solve(np.ascontiguousarray(b.real), trans=trans) + \
                1j * lu.solve(np.ascontiguousarray(b.imag), trans=trans)
        return lu.solve(b.astype(complex) if z.imag != 0 else b, trans=trans)

    def resid(w):
        return rhs - (M @ w - (zz.real if real_ok else zz) * w)

    w = lsolve(rhs)
    bn = np.linalg.norm(rhs)
    if bn == 0:
        return w
    for _ in range(max_refine):
        if not np.all(np.isfinite(w)):
            raise SingularShift(f"non-finite solution at z={z}")
        r = resid(w)
        if np.linalg.norm(r) <= rtol * bn:
            break
        w = w + lsolve(r)
    if np.linalg.norm(w) > 1e12 * bn:
        raise SingularShift(f"z={z} is within ~1e-12 of the spectrum")
    if np.linalg.norm(resid(w)) > rtol * bn * 1e3:
        raise SingularShift(f"refinement stalled at z={z}")
    return w
