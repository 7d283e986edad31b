"""Gaussian quasimodes attached to a local minimum (d = 1) and the
quadratures that test them.

A quasimode is ``f = chi * theta * exp(-W_m / h)`` on phase space with
``W = V/2 + v^2/4`` and ``W_m = W - V(m)/2``.  Across every boundary
saddle ``s`` the profile ``theta`` is an error-function step in the linear
coordinate ``ell_s(x, v) = <nu_s, (x - s, v)>``; ``chi`` cuts off above the
saddle level inside the sublevel component of ``m``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.optimize import brentq
from scipy.special import erf

from ._kernels import hermite_table
from .collision import m0_at_rest
from .errors import CollarOverlap, GridTooCoarse
from .saddledyn import SaddleData, phi_eigenproblem


def smoothstep(t):
    """Degree-5 C^2 step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def zeta(s, gamma):
    """1 on [-gamma/2, gamma/2], 0 outside [-gamma, gamma], C^2 in between."""
    a = np.abs(s)
    return smoothstep((gamma - a) / (gamma / 2.0))


class _ErfProfile:
    """``I(l) = int_0^l zeta(s) exp(-s^2/2h) ds`` and its normaliser ``A_h``."""

    def __init__(self, h, gamma, table=20001):
        self.h, self.gamma = h, gamma
        c = np.sqrt(np.pi * h / 2.0)
        self.half = c * erf(gamma / 2.0 / np.sqrt(2.0 * h))
        s = np.linspace(gamma / 2.0, gamma, table)
        g = zeta(s, gamma) * np.exp(-s * s / (2.0 * h))
        self.s = s
        self.cum = self.half + integrate.cumulative_trapezoid(g, s, initial=0.0)
        tail, _ = integrate.quad(lambda t: zeta(t, gamma) * np.exp(-t * t / (2.0 * h)),
                                 gamma / 2.0, gamma, epsabs=0.0, epsrel=1e-13, limit=200)
        self.A = self.half + tail
        # pin the table end to the accurate value
        self.cum += (self.s - self.s[0]) / (self.s[-1] - self.s[0]) * (self.A - self.cum[-1])

    def __call__(self, ell):
        ell = np.asarray(ell, dtype=float)
        a = np.abs(ell)
        out = np.where(a <= self.gamma / 2.0,
                       np.sqrt(np.pi * self.h / 2.0) * erf(a / np.sqrt(2.0 * self.h)),
                       np.interp(a, self.s, self.cum, right=self.A))
        return np.sign(ell) * out


@dataclass
class SaddleCollar:
    location: float
    nu: np.ndarray  # (nu1, nu2) with the sign fixed
    alpha0: float

    def ell(self, x, v):
        return self.nu[0] * (x - self.location) + self.nu[1] * v


@dataclass
class QuasimodeParams:
    gamma: float = 4.5  # cutoff scale of zeta, in units of ell
    eps_tilde: float = None  # chi transition width (V/2 scale); None = automatic
    eps_cap: float = 1.0
    collar_width: float = 8.0  # transition layer half width in units of sqrt(h)


@dataclass
class Quasimode:
    minimum: object  # LabeledMinimum
    h: float
    gamma: float
    collars: list
    A_h: float
    sigma: float
    eps_tilde: float
    support: tuple  # x interval of chi
    potential: object = field(repr=False)
    profile: object = field(repr=False)
    model: object = field(repr=False, default=None)

    @property
    def x_min(self):
        return float(self.minimum.point.location[0])

    @property
    def v_of_m(self):
        return float(self.minimum.point.value)

    def ell0(self, x, v, k=0):
        return self.collars[k].ell(x, v)

    def theta(self, x, v):
        out = np.ones(np.broadcast(x, v).shape)
        for c in self.collars:
            out = out * 0.5 * (1.0 + self.profile(c.ell(x, v)) / self.A_h)
        return out

    def W(self, x, v):
        return 0.5 * self.potential.v1(x) + 0.25 * v * v

    def chi(self, x, v):
        lo, hi = self.support
        top = self.sigma + 2.0 * self.eps_tilde
        inside = (x >= lo) & (x <= hi)
        return np.where(inside, smoothstep((top - self.W(x, v)) / self.eps_tilde), 0.0)

    def __call__(self, x, v):
        Wm = self.W(x, v) - 0.5 * self.v_of_m
        return self.chi(x, v) * self.theta(x, v) * np.exp(-Wm / self.h)

    def v_extent(self):
        """Largest |v| where chi can be nonzero, capped where the Gaussian is negligible."""
        top = self.sigma + 2.0 * self.eps_tilde
        vmax = 2.0 * np.sqrt(max(top - 0.5 * self.v_of_m, 0.0))
        return float(min(vmax, np.sqrt(4.0 * self.h * 80.0)))


def _component(U, level, x0, lo, hi, n=8001):
    def f(t):
        return float(U(np.array([t]))[0]) - level

    ends = []
    for stop in (lo, hi):
        xs = np.linspace(x0, stop, n)
        up = np.flatnonzero(U(xs) >= level)
        if up.size:
            k = up[0]
            ends.append(brentq(f, xs[k - 1], xs[k]))
        else:
            ends.append(stop)
    return float(min(ends)), float(max(ends))


def _default_eps(labeling, m, potential, params):
    sigma = m.sigma
    half_vals = [0.5 * c.value for c in _all_critical(labeling)]
    above = [u for u in half_vals if u > sigma * (1 + 1e-12) + 1e-12]
    edge = 0.5 * float(np.min(potential.v1(potential.window[0])))
    bounds = [params.eps_cap, 0.45 * (edge - sigma)]
    if above:
        bounds.append(0.45 * (min(above) - sigma))
    return max(min(bounds), 1e-6)


def _all_critical(labeling):
    pts = [m.point for m in labeling.minima]
    for m in labeling.minima:
        pts.extend(m.saddles)
    return pts


def build_quasimode(labeling, m, h, model, params=None, prefactors=None):
    """Quasimode attached to the non-global minimum ``m``.

    :param labeling: landscape labeling (d = 1).
    :param m: a LabeledMinimum (or its x location).
    :param h: semiclassical parameter.
    :param model: collision model (supplies M0 at the saddles).
    :param params: QuasimodeParams.
    :param prefactors: optional ``{saddle x: SaddlePrefactor}``.
    :raises CollarOverlap: transition layers of two saddles intersect inside
        the support of ``chi``.
    """
    params = params or QuasimodeParams()
    if not hasattr(m, "saddles"):
        m = labeling.find(m)
    if m.is_global:
        raise ValueError("the global minimum carries no quasimode")
    P = labeling.potential
    if P is None or P.dim != 1:
        raise ValueError("quasimodes need a labeling of a one-dimensional potential")
    xm = float(m.point.location[0])
    dx = float(labeling.grid.axes[0][1] - labeling.grid.axes[0][0])
    collars = []
    for s in m.saddles:
        sx = float(s.location[0])
        pre = (prefactors or {}).get(sx)
        if pre is None:
            sd = SaddleData(s.location, s.hessian, m0_at_rest(model.with_dim(1)))
            pre = phi_eigenproblem(sd)
        nu = np.array(pre.nu, dtype=float)
        probe = sx + dx * np.sign(xm - sx)
        if nu[0] * (probe - sx) < 0:
            nu = -nu
        collars.append(SaddleCollar(sx, nu, pre.alpha0))
    eps = params.eps_tilde if params.eps_tilde is not None else _default_eps(labeling, m, P, params)
    lo, hi = P.window[0]
    support = _component(lambda t: 0.5 * P.v1(t), m.sigma + 2.0 * eps, xm, lo, hi)
    profile = _ErfProfile(h, params.gamma)
    q = Quasimode(m, float(h), float(params.gamma), collars, float(profile.A), float(m.sigma),
                  float(eps), support, P, profile, model)
    _check_collars(q, params.collar_width)
    return q


def _check_collars(q, width):
    if len(q.collars) < 2:
        return
    w = min(q.gamma, width * np.sqrt(q.h))
    xs = np.linspace(q.support[0], q.support[1], 801)
    vmax = q.v_extent()
    vs = np.linspace(-vmax, vmax, 401)
    X, Vv = np.meshgrid(xs, vs, indexing="ij")
    live = q.chi(X, Vv) > 0
    masks = [np.abs(c.ell(X, Vv)) < w for c in q.collars]
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            if np.any(masks[i] & masks[j] & live):
                raise CollarOverlap(f"transition layers of saddles {q.collars[i].location} and "
                                    f"{q.collars[j].location} intersect; reduce gamma")


# ------------------------------------------------------------------ quadrature

@dataclass
class PhaseGrid:
    x: np.ndarray
    v: np.ndarray
    values: np.ndarray  # f(x, v), shape (nx, nv)
    coeffs: np.ndarray  # Hermite coefficients c_n(x), shape (nlev, nx)

    @property
    def dx(self):
        return self.x[1] - self.x[0]

    @property
    def dv(self):
        return self.v[1] - self.v[0]


def sample(q, nx=3001, nv=801, n_levels=60, min_per_sqrt_h=12):
    """Tabulate ``f`` on a tensor grid and project onto Hermite functions."""
    x = np.linspace(q.support[0], q.support[1], nx)
    vmax = q.v_extent()
    v = np.linspace(-vmax, vmax, nv)
    step = np.sqrt(q.h) / min_per_sqrt_h
    if x[1] - x[0] > step or v[1] - v[0] > step:
        raise GridTooCoarse(f"need spacing <= {step:.3g}, have dx={x[1] - x[0]:.3g}, "
                            f"dv={v[1] - v[0]:.3g}")
    F = q(x[:, None], v[None, :])
    psi = hermite_table(v, q.h, n_levels - 1)
    C = (psi @ F.T) * (v[1] - v[0])
    return PhaseGrid(x, v, F, C)


def _transport_coeffs(C, x, h, dV):
    """Hermite-coefficient action of ``b* a - b a*`` with centred differences."""
    dx = x[1] - x[0]
    D = np.zeros_like(C)
    D[:, 1:-1] = (C[:, 2:] - C[:, :-2]) / (2 * dx)
    D[:, 0] = C[:, 1] / (2 * dx)
    D[:, -1] = -C[:, -2] / (2 * dx)
    aC = h * D + 0.5 * dV * C
    asC = -h * D + 0.5 * dV * C
    out = np.zeros_like(C)
    n = np.arange(C.shape[0])
    out[1:] += np.sqrt(h * n[1:])[:, None] * aC[:-1]
    out[:-1] -= np.sqrt(h * n[1:])[:, None] * asC[1:]
    return out


@dataclass
class RayleighReport:
    value: float  # <P f, f> / ||f||^2 by phase-space quadrature
    discrete: float  # same with the assembled operator (nan if none)
    transport_relative: float  # |<X f, f>| / (||X f|| ||f||)
    transport_relative_discrete: float
    norm_sq: float  # ||f||^2 (unnormalised quasimode)
    projection_defect: float  # 1 - sum |c_n|^2 / ||f||^2
    h: float


def rayleigh_report(q, opr=None, **grid_kw):
    """``<P f, f> / ||f||^2`` by quadrature and, optionally, on the discrete grid.

    The collision form is exact in the Hermite basis; the transport part is
    skew, so for real ``f`` only the collision part contributes.
    """
    pg = sample(q, **grid_kw)
    C, dx, dv = pg.coeffs, pg.dx, pg.dv
    rates = _rates(opr, q, C.shape[0])
    norm_sq = float(np.sum(pg.values ** 2) * dx * dv)
    lev_sq = np.sum(C ** 2, axis=1) * dx
    qf = float(rates @ lev_sq)
    defect = 1.0 - lev_sq.sum() / norm_sq
    XC = _transport_coeffs(C, pg.x, q.h, q.potential.dv1(pg.x))
    xff = float(np.sum(XC * C) * dx)
    trel = abs(xff) / (np.sqrt(np.sum(XC ** 2) * dx) * np.sqrt(lev_sq.sum()))
    disc, trel_d = np.nan, np.nan
    if opr is not None:
        u = to_discrete(q, opr, pg)
        Au = opr.matrix @ u
        disc = float(u @ Au / (u @ u))
        Xu = opr.transport @ u
        trel_d = abs(float(u @ Xu)) / (np.linalg.norm(Xu) * np.linalg.norm(u))
    value = qf / norm_sq
    if not value > 0:
        raise ValueError("non-positive Rayleigh quotient")
    return RayleighReport(value, disc, float(trel), float(trel_d), norm_sq, float(defect), q.h)


def _rates(opr, q, nlev):
    model = q.model if opr is None or opr.model is None else opr.model
    if model is None:
        raise ValueError("collision model unknown; pass opr or set q.model")
    r = np.asarray(model.level_rate(q.h * np.arange(nlev)), dtype=float)
    r[0] = 0.0
    return r


def rayleigh_quotient(q, opr=None, **grid_kw):
    """Normalised ``<P f, f>`` from phase-space quadrature."""
    return rayleigh_report(q, opr, **grid_kw).value


def to_discrete(q, opr, pg=None):
    """Quasimode as a vector of the assembled operator (interpolated coefficients)."""
    pg = pg or sample(q, n_levels=opr.n_hermite)
    C = pg.coeffs

    def coeff(n, xs):
        if n >= C.shape[0]:
            return np.zeros_like(xs)
        return np.interp(xs, pg.x, C[n], left=0.0, right=0.0)

    return opr.from_coefficients(coeff)


def quasimode_residual(q, opr, pg=None):
    """``(||P f~||^2, ||P* f~||^2, <P f~, f~>)`` for the normalised discrete quasimode."""
    u = to_discrete(q, opr, pg)
    u = u / opr.norm(u)
    Au = opr.matrix @ u
    Atu = opr.matrix.T @ u
    return (opr.norm(Au) ** 2, opr.norm(Atu) ** 2, float(opr.inner(Au, u).real))


def norm_ratio(q, pg=None):
    """``||f||^2 sqrt(det Hess_m V) / (2 pi h)``; tends to 1 as h -> 0."""
    pg = pg or sample(q)
    nsq = float(np.sum(pg.values ** 2) * pg.dx * pg.dv)
    det = float(np.linalg.det(q.minimum.point.hessian))
    return nsq * np.sqrt(det) / (2.0 * np.pi * q.h)


# ------------------------------------------------------------------ Laplace

@dataclass
class LaplaceRow:
    h: float
    normalized: float  # sqrt(det H) (2 pi h)^{-d/2} int a exp(-(phi - phi0)/h)
    a0: float
    error: float
    error_over_h: float


def laplace_check(phi, a, h_list, x0, half_width=None, n=801, hess=None, min_per_sqrt_h=12):
    """Laplace-method check on a 2d tensor trapezoid grid centred at ``x0``.

    :param phi: callable ``phi(X, Y)`` with a nondegenerate minimum at ``x0``.
    :param a: amplitude ``a(X, Y)``.
    :param h_list: semiclassical parameters.
    :param half_width: box half width (default ``12 sqrt(max h) + 0.5``).
    :param hess: Hessian of phi at x0 (finite differences if omitted).
    """
    x0 = np.asarray(x0, dtype=float)
    if hess is None:
        e = 1e-4
        f = lambda p: phi(p[0], p[1])
        hess = np.empty((2, 2))
        for i in range(2):
            for j in range(2):
                ei, ej = np.eye(2)[i] * e, np.eye(2)[j] * e
                hess[i, j] = (f(x0 + ei + ej) - f(x0 + ei - ej) - f(x0 - ei + ej) + f(x0 - ei - ej)) / (4 * e * e)
    det = float(np.linalg.det(hess))
    if det <= 0 or np.linalg.eigvalsh(hess).min() <= 0:
        raise ValueError("Hessian at x0 must be positive definite")
    half_width = half_width or (12.0 * np.sqrt(max(h_list)) + 0.5)
    phi0 = float(phi(x0[0], x0[1]))
    a0 = float(a(x0[0], x0[1]))
    rows = []
    for h in h_list:
        t = np.linspace(-half_width, half_width, n)
        if t[1] - t[0] > np.sqrt(h) / min_per_sqrt_h:
            raise GridTooCoarse(f"spacing {t[1] - t[0]:.3g} too coarse for h={h}")
        X, Y = np.meshgrid(x0[0] + t, x0[1] + t, indexing="ij")
        integrand = a(X, Y) * np.exp(-(phi(X, Y) - phi0) / h)
        I = integrate.trapezoid(integrate.trapezoid(integrand, t, axis=1), t)
        val = np.sqrt(det) / (2.0 * np.pi * h) * I
        err = val - a0
        rows.append(LaplaceRow(float(h), float(val), a0, float(err), float(err / h)))
    return rows
