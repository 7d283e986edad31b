"""Potentials V on R^d (d = 1, 2) with analytic gradient and Hessian.

All callables take points with the coordinate on the last axis, i.e. an
array of shape ``(..., d)``, and return ``(...)``, ``(..., d)`` and
``(..., d, d)`` respectively.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import ConfigError, ConfinementError


@dataclass(frozen=True)
class Potential:
    dim: int
    eval: Callable
    grad: Callable
    hess: Callable
    window: np.ndarray  # shape (d, 2): [[lo, hi], ...]
    name: str = "custom"
    grad_floor: float = 1e-3
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.window, dtype=float).reshape(self.dim, 2)
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if np.any(w[:, 1] <= w[:, 0]):
            raise ValueError("empty window")
        object.__setattr__(self, "window", w)

    # convenience for d = 1: flat arrays in, flat arrays out
    def v1(self, x):
        return self.eval(np.asarray(x, dtype=float)[..., None])

    def dv1(self, x):
        return self.grad(np.asarray(x, dtype=float)[..., None])[..., 0]

    def d2v1(self, x):
        return self.hess(np.asarray(x, dtype=float)[..., None])[..., 0, 0]

    @property
    def size(self):
        """Diameter of the window, the natural length scale."""
        return float(np.linalg.norm(self.window[:, 1] - self.window[:, 0]))

    def with_window(self, window):
        return Potential(self.dim, self.eval, self.grad, self.hess, window, self.name,
                         self.grad_floor, dict(self.meta))

    def shifted(self, c):
        """V + c (same derivatives)."""
        f = self.eval
        return Potential(self.dim, lambda x: f(x) + c, self.grad, self.hess, self.window,
                         self.name, self.grad_floor, dict(self.meta))

    def boundary_points(self, n=64):
        w = self.window
        if self.dim == 1:
            return w[:, :].T.copy()  # (2, 1)
        t1 = np.linspace(w[0, 0], w[0, 1], n)
        t2 = np.linspace(w[1, 0], w[1, 1], n)
        pts = [np.column_stack([t1, np.full(n, w[1, 0])]),
               np.column_stack([t1, np.full(n, w[1, 1])]),
               np.column_stack([np.full(n, w[0, 0]), t2]),
               np.column_stack([np.full(n, w[0, 1]), t2])]
        return np.vstack(pts)

    def check(self, rng=None, npoints=20, rtol_grad=1e-6, rtol_hess=1e-5):
        """Validate derivatives by finite differences and check confinement.

        Returns a dict of measured defects; raises on failure.
        """
        rng = np.random.default_rng(0) if rng is None else rng
        w = self.window
        pts = w[:, 0] + (w[:, 1] - w[:, 0]) * rng.random((npoints, self.dim))
        eps = 1e-5 * max(1.0, self.size)
        g = self.grad(pts)
        H = self.hess(pts)
        gfd = np.empty_like(g)
        hfd = np.empty_like(H)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = eps
            gfd[:, i] = (self.eval(pts + e) - self.eval(pts - e)) / (2 * eps)
            hfd[:, :, i] = (self.grad(pts + e) - self.grad(pts - e)) / (2 * eps)
        gscale = max(1.0, np.abs(g).max())
        hscale = max(1.0, np.abs(H).max())
        grad_err = np.abs(g - gfd).max() / gscale
        hess_err = np.abs(H - hfd).max() / hscale
        sym_err = np.abs(H - np.swapaxes(H, -1, -2)).max()
        if grad_err > rtol_grad:
            raise ValueError(f"gradient mismatch {grad_err:.2e}")
        if hess_err > rtol_hess or sym_err > 1e-12 * hscale:
            raise ValueError(f"Hessian mismatch {hess_err:.2e} (asym {sym_err:.2e})")
        bnorm = np.linalg.norm(self.grad(self.boundary_points()), axis=-1).min()
        if bnorm < self.grad_floor:
            raise ConfinementError(f"|grad V| = {bnorm:.3e} < {self.grad_floor} on the boundary")
        return {"grad_error": grad_err, "hess_error": hess_err, "boundary_grad_min": bnorm}


# ------------------------------------------------------------------ builders

def polynomial_1d(coefficients, window, name="polynomial"):
    """V(x) = sum_k c_k x^k (ascending coefficients)."""
    c = np.asarray(coefficients, dtype=float)
    dc = npoly.polyder(c)
    d2c = npoly.polyder(c, 2)
    return Potential(
        1,
        lambda p: npoly.polyval(p[..., 0], c),
        lambda p: npoly.polyval(p[..., 0], dc)[..., None],
        lambda p: npoly.polyval(p[..., 0], d2c)[..., None, None],
        np.asarray(window, dtype=float).reshape(1, 2),
        name,
        meta={"coefficients": c.tolist()},
    )


def polynomial_2d(terms, window, name="polynomial2d"):
    """V(x1, x2) = sum c * x1**i * x2**j over ``terms = [(i, j, c), ...]``."""
    terms = [(int(i), int(j), float(c)) for i, j, c in terms]

    def mono(x, i):
        return x ** i if i >= 0 else np.zeros_like(x)

    def ev(p):
        x, y = p[..., 0], p[..., 1]
        return sum(c * mono(x, i) * mono(y, j) for i, j, c in terms)

    def gr(p):
        x, y = p[..., 0], p[..., 1]
        gx = sum(c * i * mono(x, i - 1) * mono(y, j) for i, j, c in terms if i > 0)
        gy = sum(c * j * mono(x, i) * mono(y, j - 1) for i, j, c in terms if j > 0)
        return np.stack(np.broadcast_arrays(gx + 0 * x, gy + 0 * x), axis=-1)

    def he(p):
        x, y = p[..., 0], p[..., 1]
        z = 0 * x
        hxx = z + sum(c * i * (i - 1) * mono(x, i - 2) * mono(y, j) for i, j, c in terms if i > 1)
        hyy = z + sum(c * j * (j - 1) * mono(x, i) * mono(y, j - 2) for i, j, c in terms if j > 1)
        hxy = z + sum(c * i * j * mono(x, i - 1) * mono(y, j - 1) for i, j, c in terms
                      if i > 0 and j > 0)
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)

    return Potential(2, ev, gr, he, np.asarray(window, dtype=float).reshape(2, 2), name,
                     meta={"terms": [list(t) for t in terms]})


def _from_roots_of_derivative(roots, scale, window, name):
    # V' = scale * prod(x - r); V(0) = 0
    dcoef = scale * npoly.polyfromroots(roots)
    coef = npoly.polyint(dcoef)
    pot = polynomial_1d(coef, window, name)
    pot.meta["derivative_roots"] = list(roots)
    return pot


def double_well(window=(-3.0, 3.0)):
    """(x^2 - 1)^2 / 4."""
    return polynomial_1d([0.25, 0.0, -0.5, 0.0, 0.25], window, "double_well")


def tilted_double_well(tilt=0.1, window=(-3.0, 3.0)):
    """(x^2 - 1)^2 / 4 + tilt * x."""
    return polynomial_1d([0.25, tilt, -0.5, 0.0, 0.25], window, "tilted_double_well")


TRIPLE_WELL_ROOTS = (-2.0, -1.1, 0.0, 0.9, 1.8)
TRIPLE_WELL_SCALE = 0.6


def triple_well(window=(-3.3, 3.1)):
    """Sextic with minima at -2, 0, 1.8 and maxima at -1.1, 0.9.

    V' = 0.6 (x+2)(x+1.1) x (x-0.9)(x-1.8), V(0) = 0.  The three wells have
    distinct depths and the two barriers give distinct activation energies.
    """
    return _from_roots_of_derivative(TRIPLE_WELL_ROOTS, TRIPLE_WELL_SCALE, window, "triple_well")


def double_well_2d(tilt=0.1, stiffness=1.0, window=((-2.5, 2.5), (-2.5, 2.5))):
    """(x1^2 - 1)^2 / 4 + tilt * x1 + stiffness * x2^2 / 2."""
    terms = [(0, 0, 0.25), (2, 0, -0.5), (4, 0, 0.25), (1, 0, tilt), (0, 2, stiffness / 2)]
    return polynomial_2d(terms, window, "double_well_2d")


def harmonic(window=(-3.0, 3.0)):
    """x^2 / 2 (single well)."""
    return polynomial_1d([0.0, 0.0, 0.5], window, "harmonic")


BUILTINS = {
    "double_well": double_well,
    "tilted_double_well": tilted_double_well,
    "triple_well": triple_well,
    "double_well_2d": double_well_2d,
    "harmonic": harmonic,
}


def from_spec(spec):
    """Build a potential from a config mapping.

    Accepted forms: ``{"builtin": name, "window": ...}``,
    ``{"coefficients": [...], "window": [lo, hi]}`` (1d, ascending) or
    ``{"terms": [[i, j, c], ...], "window": [[..], [..]]}`` (2d).
    """
    spec = dict(spec)
    window = spec.get("window")
    floor = spec.get("grad_floor")
    if "builtin" in spec:
        name = spec["builtin"]
        if name not in BUILTINS:
            raise ConfigError("potential.builtin", f"unknown builtin {name!r}")
        kwargs = {k: v for k, v in spec.items() if k not in ("builtin", "window", "grad_floor")}
        if window is not None:
            kwargs["window"] = window
        try:
            pot = BUILTINS[name](**kwargs)
        except TypeError as exc:
            raise ConfigError("potential", str(exc)) from exc
    elif "coefficients" in spec:
        if window is None:
            raise ConfigError("potential.window", "required for polynomial potentials")
        pot = polynomial_1d(spec["coefficients"], window)
    elif "terms" in spec:
        if window is None:
            raise ConfigError("potential.window", "required for polynomial potentials")
        pot = polynomial_2d(spec["terms"], window)
    else:
        raise ConfigError("potential", "need one of builtin / coefficients / terms")
    if floor is not None:
        pot = Potential(pot.dim, pot.eval, pot.grad, pot.hess, pot.window, pot.name,
                        float(floor), pot.meta)
    return pot
