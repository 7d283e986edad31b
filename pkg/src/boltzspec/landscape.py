"""Morse landscape analysis: critical points, separating saddles and the
top-down labeling of minima by sublevel-set connectivity.

Energies handed to the connectivity code are on the ``U = V/2`` scale.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .errors import (DegenerateCritical, LabelingHypothesisViolated, MismatchDetected,
                     NoMinima, ResolutionTooCoarse, TieBreak)
from .potential import Potential


@dataclass
class CriticalPoint:
    location: np.ndarray
    index: int
    value: float
    hessian: np.ndarray
    hess_eigen: np.ndarray

    @property
    def unstable_direction(self):
        """Unit eigenvector of the smallest Hessian eigenvalue."""
        w, V = np.linalg.eigh(self.hessian)
        return V[:, 0]

    def to_dict(self):
        return {"location": self.location.tolist(), "index": self.index, "value": self.value,
                "hessian_eigenvalues": self.hess_eigen.tolist()}


def _half(P):
    """The field U = V/2 as a potential (same window)."""
    return Potential(P.dim, lambda x: 0.5 * P.eval(x), lambda x: 0.5 * P.grad(x),
                     lambda x: 0.5 * P.hess(x), P.window, P.name + "/2", P.grad_floor)


def _lattice(window, n):
    axes = [np.linspace(lo, hi, n) for lo, hi in window]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _grad_scale(P, n=64):
    pts = _lattice(P.window, n if P.dim == 1 else 32)
    return max(1.0, float(np.linalg.norm(P.grad(pts), axis=-1).max()))


def _newton(P, x, scale, max_iter=100):
    lo, hi = P.window[:, 0], P.window[:, 1]
    pad = 0.05 * (hi - lo)
    for _ in range(max_iter):
        g = P.grad(x)
        gn = np.linalg.norm(g)
        if gn <= 1e-13 * scale:
            return x
        H = P.hess(x)
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = -g / scale
        if not np.all(np.isfinite(step)):
            step = -g / scale
        # backtrack on |grad| so that Newton cannot run off to infinity
        t = 1.0
        while t > 1e-6:
            xn = x + t * step
            if np.linalg.norm(P.grad(xn)) < gn:
                break
            t *= 0.5
        else:
            xn = x - 1e-2 * g / scale  # gradient-descent fallback on |grad|^2 stall
        x = xn
        if np.any(x < lo - pad) or np.any(x > hi + pad):
            return None
    return x if np.linalg.norm(P.grad(x)) <= 1e-9 * scale else None


def find_critical_points(P, seeds_per_axis=16, dedup=1e-6):
    """Locate critical points by damped Newton from a seed lattice.

    :param P: potential.
    :param seeds_per_axis: seeds per coordinate (>= 8).
    :param dedup: merge radius relative to the window diameter.
    :returns: critical points sorted by value.
    :raises DegenerateCritical: singular Hessian at a critical point.
    :raises NoMinima: fewer than two local minima.
    """
    if seeds_per_axis < 8:
        raise ValueError("seeds_per_axis must be >= 8")
    scale = _grad_scale(P)
    found = []
    radius = dedup * P.size
    lo, hi = P.window[:, 0], P.window[:, 1]
    for seed in _lattice(P.window, seeds_per_axis):
        x = _newton(P, seed.astype(float), scale)
        if x is None or np.any(x < lo) or np.any(x > hi):
            continue
        if any(np.linalg.norm(x - y) <= radius for y in found):
            continue
        found.append(x)
    pts = []
    for x in found:
        H = np.atleast_2d(P.hess(x))
        H = (H + H.T) / 2
        ev = np.linalg.eigvalsh(H)
        if np.min(np.abs(ev)) < 1e-8:
            raise DegenerateCritical(f"Hessian eigenvalues {ev} at {x}")
        pts.append(CriticalPoint(x, int(np.count_nonzero(ev < 0)), float(P.eval(x)), H, ev))
    pts.sort(key=lambda c: (c.value, tuple(c.location)))
    nmin = sum(1 for c in pts if c.index == 0)
    if nmin < 2:
        raise NoMinima(f"found {nmin} local minimum; at least two are required")
    return pts


# ------------------------------------------------------------------ grids

@dataclass
class Grid:
    axes: list
    values: np.ndarray  # U on the lattice, shape (n,) * d
    quantum: float

    @property
    def shape(self):
        return self.values.shape

    def nearest(self, x):
        return tuple(int(np.clip(np.rint((xi - a[0]) / (a[1] - a[0])), 0, a.size - 1))
                     for xi, a in zip(np.atleast_1d(x), self.axes))

    def point(self, idx):
        return np.array([a[i] for a, i in zip(self.axes, idx)])

    def neighbours(self, idx):
        for ax in range(len(idx)):
            for step in (-1, 1):
                j = list(idx)
                j[ax] += step
                if 0 <= j[ax] < self.shape[ax]:
                    yield tuple(j)


def make_grid(U, resolution, critical_values=None):
    """Sample the field ``U`` (a Potential) on a uniform lattice.

    The energy quantum is the largest neighbour difference among nodes below
    the topologically relevant energy range, so steep window walls do not
    inflate it.
    """
    axes = [np.linspace(lo, hi, resolution) for lo, hi in U.window]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    vals = U.eval(pts)
    if critical_values is not None and len(critical_values):
        cmin, cmax = min(critical_values), max(critical_values)
        cap = cmax + 0.1 * max(cmax - cmin, 1e-12)
    else:
        cap = np.inf
    q = 0.0
    for ax in range(vals.ndim):
        diff = np.abs(np.diff(vals, axis=ax))
        lowv = np.minimum(np.delete(vals, -1, axis=ax), np.delete(vals, 0, axis=ax))
        sel = diff[lowv <= cap]
        if sel.size:
            q = max(q, float(sel.max()))
    return Grid(axes, vals, q)


def _descend_into(grid, mask, idx, max_steps=10000):
    # steepest discrete descent until the node lies in the mask
    for _ in range(max_steps):
        if mask[idx]:
            return idx
        best = min(grid.neighbours(idx), key=lambda j: grid.values[j])
        if grid.values[best] >= grid.values[idx]:
            return None
        idx = best
    return None


def _descent_nodes(grid, mask, U, cp, level):
    """Grid nodes reached by leaving ``cp`` along +/- its unstable direction."""
    e = cp.unstable_direction
    h = max(a[1] - a[0] for a in grid.axes)
    out = []
    for sgn in (1.0, -1.0):
        r = 2.0 * h
        node = None
        for _ in range(60):
            x = cp.location + sgn * r * e
            if np.any(x < U.window[:, 0]) or np.any(x > U.window[:, 1]):
                break
            if U.eval(x) < level:
                node = _descend_into(grid, mask, grid.nearest(x))
                if node is not None:
                    break
            r *= 1.25
        if node is None:
            raise ResolutionTooCoarse(f"cannot leave saddle {cp.location} downhill on the grid")
        out.append(node)
    return out


def _offset(value, all_values, quantum, tol):
    others = [abs(v - value) for v in all_values if abs(v - value) > tol]
    gap = min(others) if others else np.inf
    return min(2.0 * quantum, 0.25 * gap)


@dataclass
class SaddleInfo:
    point: CriticalPoint
    level: float  # U(s)
    separating: bool
    nodes: tuple  # the two descent nodes
    components: tuple  # labels of the descent nodes at level - delta


def _tie_tol(U_values):
    return 1e-9 * max(1.0, max(abs(v) for v in U_values))


def _scan(U, critical_U, grid):
    """Classify every index-1 point of the field ``U``."""
    cvals = [c.value for c in critical_U]
    tol = _tie_tol(cvals)
    infos = []
    for cp in critical_U:
        if cp.index != 1:
            continue
        delta = _offset(cp.value, cvals, grid.quantum, tol)
        level = cp.value - delta
        mask = grid.values < level
        labels, _ = _kernels.label_components(mask)
        a, b = _descent_nodes(grid, mask, U, cp, level)
        la, lb = int(labels[a]), int(labels[b])
        infos.append(SaddleInfo(cp, cp.value, la != lb, (a, b), (la, lb)))
    return infos


def _check_separating(infos, quantum, tol):
    sep = [i for i in infos if i.separating]
    # merge values equal within tolerance
    distinct = []
    for v in sorted((i.level for i in sep), reverse=True):
        if not distinct or abs(distinct[-1] - v) > tol:
            distinct.append(v)
    for a, b in zip(distinct, distinct[1:]):
        if a - b < 4.0 * quantum:
            raise ResolutionTooCoarse(
                f"separating values {a:.6g} and {b:.6g} closer than 4 grid quanta ({quantum:.2e})")
    for v in distinct:
        group = [i for i in sep if abs(i.level - v) <= tol]
        if len(group) > 1:
            common = set(group[0].components)
            for g in group[1:]:
                common &= set(g.components)
            if not common:
                locs = [g.point.location.tolist() for g in group]
                raise TieBreak(f"saddles {locs} share value {v:.6g} but bound disjoint components")
    return distinct, sep


def _as_half(P, critical):
    U = _half(P)
    crit_U = [CriticalPoint(c.location, c.index, 0.5 * c.value, 0.5 * c.hessian, 0.5 * c.hess_eigen)
              for c in critical]
    return U, crit_U


def _default_resolution(dim):
    return 4001 if dim == 1 else 401


def separating_saddles(P, critical, grid_resolution=None):
    """Separating saddle values (on the V/2 scale, decreasing) and points.

    An index-1 point ``s`` separates when its two descent directions land in
    different connected components of ``{V/2 < V(s)/2 - delta}``.

    :raises ResolutionTooCoarse: two values closer than four grid quanta.
    :raises TieBreak: equal values on saddles bounding disjoint components.
    """
    res = grid_resolution or _default_resolution(P.dim)
    U, crit_U = _as_half(P, critical)
    grid = make_grid(U, res, [c.value for c in crit_U])
    infos = _scan(U, crit_U, grid)
    distinct, sep = _check_separating(infos, grid.quantum, _tie_tol([c.value for c in crit_U]))
    by_loc = {tuple(c.location): c for c in critical}
    return distinct, [by_loc[tuple(i.point.location)] for i in sep]


# ------------------------------------------------------------------ labeling

@dataclass
class LabeledMinimum:
    point: CriticalPoint
    rank: int  # k
    sub: int  # j
    sigma: float  # separating value on the V/2 scale, inf for the global minimum
    S: float
    saddles: list  # separating saddle CriticalPoints on the boundary of E(m)
    region: np.ndarray = field(repr=False)  # boolean grid mask of E(m)
    interval: Optional[tuple] = None  # d = 1 only

    @property
    def is_global(self):
        return not np.isfinite(self.sigma)

    def to_dict(self):
        return {
            "label": [self.rank, self.sub],
            "location": self.point.location.tolist(),
            "value": self.point.value,
            "sigma": None if self.is_global else self.sigma,
            "S": None if self.is_global else self.S,
            "saddles": [s.location.tolist() for s in self.saddles],
            "interval": None if self.interval is None else list(self.interval),
        }


@dataclass
class Labeling:
    minima: list  # LabeledMinimum sorted by (rank, sub)
    separating_values: list  # strictly decreasing
    grid: Grid = field(repr=False)
    potential_name: str = ""
    potential: object = field(default=None, repr=False, compare=False)

    sigma1 = np.inf

    @property
    def global_minimum(self):
        return self.minima[0]

    @property
    def n0(self):
        return len(self.minima)

    def non_global(self):
        return [m for m in self.minima if not m.is_global]

    def find(self, x):
        """The labeled minimum nearest to ``x``."""
        return min(self.minima, key=lambda m: np.linalg.norm(m.point.location - np.atleast_1d(x)))

    def to_dict(self):
        return {
            "potential": self.potential_name,
            "separating_values": list(self.separating_values),
            "minima": [m.to_dict() for m in self.minima],
            "grid_quantum": self.grid.quantum,
        }


def _interval_1d(U, sigma, x0, saddles, n=4001):
    """Exact end points of the component of ``{U < sigma}`` containing ``x0``.

    An end point is either a boundary saddle (where ``U`` touches ``sigma``
    from below) or a transversal crossing located by root bracketing.
    """
    lo_w, hi_w = float(U.window[0, 0]), float(U.window[0, 1])
    if not np.isfinite(sigma):
        return lo_w, hi_w

    def f(t):
        return float(U.eval(np.array([t]))) - sigma

    ends = []
    for side, stop in ((-1, lo_w), (1, hi_w)):
        walls = [s for s in saddles if (s - x0) * side > 0]
        limit = min(walls, key=lambda s: abs(s - x0)) if walls else stop
        xs = np.linspace(x0, limit, n)
        vals = U.eval(xs[:, None]) - sigma
        up = np.flatnonzero(vals >= 0)
        if up.size and not (walls and up[0] == n - 1):
            k = up[0]
            ends.append(brentq(f, xs[k - 1], xs[k]) if k > 0 else x0)
        else:
            ends.append(limit)
    return float(min(ends)), float(max(ends))


def build_labeling(P, critical, saddles=None, grid_resolution=None):
    """Top-down labeling of minima adapted to the separating saddle values.

    Levels are processed from +inf downward.  At each level every connected
    component of ``{V/2 < sigma_k}`` without a labeled minimum receives one:
    its global minimum, with rank ``k``.

    :raises LabelingHypothesisViolated: a component with two global minima,
        or two minima sharing a separating saddle.
    """
    res = grid_resolution or _default_resolution(P.dim)
    U, crit_U = _as_half(P, critical)
    cvals = [c.value for c in crit_U]
    tol = _tie_tol(cvals)
    grid = make_grid(U, res, cvals)
    infos = _scan(U, crit_U, grid)
    distinct, sep = _check_separating(infos, grid.quantum, tol)
    if saddles is not None:
        want = {tuple(np.round(s.location, 9)) for s in saddles}
        got = {tuple(np.round(i.point.location, 9)) for i in sep}
        if want != got:
            raise MismatchDetected(f"saddle set {sorted(want)} disagrees with grid scan {sorted(got)}")
    minima_U = [c for c in crit_U if c.index == 0]
    by_loc = {tuple(c.location): c for c in critical}
    nodes = [grid.nearest(m.location) for m in minima_U]

    def unique_min(members, where):
        members = sorted(members, key=lambda i: minima_U[i].value)
        if len(members) > 1 and minima_U[members[1]].value - minima_U[members[0]].value <= tol:
            a, b = (minima_U[i].location.tolist() for i in members[:2])
            raise LabelingHypothesisViolated(f"{where}: two global minima {a} and {b}")
        return members[0]

    labeled = {}  # minimum index -> (rank, sub, sigma, region)
    g = unique_min(range(len(minima_U)), "top level")
    labeled[g] = (1, 1, np.inf, np.ones(grid.shape, dtype=bool))
    for k, sigma in enumerate(distinct, start=2):
        delta = _offset(sigma, cvals, grid.quantum, tol)
        mask = grid.values < sigma - delta
        labels, count = _kernels.label_components(mask)
        comp_of = [int(labels[n]) for n in nodes]
        sub = 0
        fresh = []
        for c in range(1, count + 1):
            members = [i for i, cc in enumerate(comp_of) if cc == c]
            if not members:
                continue
            old = [i for i in members if i in labeled]
            if len(old) > 1:
                raise ResolutionTooCoarse(f"level {sigma:.6g}: labeled minima merged on the grid")
            if old:
                continue
            fresh.append((unique_min(members, f"level {sigma:.6g}"), c))
        for i, c in sorted(fresh, key=lambda t: minima_U[t[0]].value):
            sub += 1
            labeled[i] = (k, sub, sigma, labels == c)
    if len(labeled) != len(minima_U):
        missing = [minima_U[i].location.tolist() for i in range(len(minima_U)) if i not in labeled]
        raise LabelingHypothesisViolated(f"minima {missing} never received a label")

    entries = []
    for i, (k, j, sigma, region) in labeled.items():
        m = minima_U[i]
        if np.isfinite(sigma):
            js = [by_loc[tuple(s.point.location)] for s in sep
                  if abs(s.level - sigma) <= tol and any(region[n] for n in s.nodes)]
            S = sigma - m.value
        else:
            js, S = [], np.inf
        interval = (_interval_1d(U, sigma, float(m.location[0]), [float(t.location[0]) for t in js])
                    if P.dim == 1 else None)
        entries.append(LabeledMinimum(by_loc[tuple(m.location)], k, j, float(sigma), float(S), js,
                                      region, interval))
    entries.sort(key=lambda e: (e.rank, e.sub))
    seen = {}
    for e in entries:
        for s in e.saddles:
            key = tuple(s.location)
            if key in seen:
                raise LabelingHypothesisViolated(
                    f"saddle {list(key)} bounds both {seen[key]} and {e.point.location.tolist()}")
            seen[key] = e.point.location.tolist()
        if not e.is_global and not e.saddles:
            raise LabelingHypothesisViolated(f"minimum {e.point.location.tolist()} has no saddle")
    return Labeling(entries, list(distinct), grid, P.name, P)


def analyze(P, seeds_per_axis=16, grid_resolution=None):
    """Critical points, separating saddles and labeling in one call."""
    crit = find_critical_points(P, seeds_per_axis)
    _, sadd = separating_saddles(P, crit, grid_resolution)
    return crit, build_labeling(P, crit, sadd, grid_resolution)


# ------------------------------------------------------------------ lift

def lifted_field(P, vmax):
    """``W(x, v) = V(x)/2 + v^2/4`` as a 2d potential on window x [-vmax, vmax]."""
    if P.dim != 1:
        raise ValueError("the lift check is implemented for d = 1")

    def ev(p):
        return 0.5 * P.eval(p[..., :1]) + 0.25 * p[..., 1] ** 2

    def gr(p):
        return np.stack([0.5 * P.grad(p[..., :1])[..., 0], 0.5 * p[..., 1]], axis=-1)

    def he(p):
        hxx = 0.5 * P.hess(p[..., :1])[..., 0, 0]
        z = np.zeros_like(hxx)
        return np.stack([np.stack([hxx, z], -1), np.stack([z, z + 0.5], -1)], -2)

    window = np.array([P.window[0], [-vmax, vmax]])
    return Potential(2, ev, gr, he, window, P.name + "/lift")


def lift_check_W(P, L=None, grid_resolution=1024, seeds_per_axis=16):
    """Compare separating saddles of the phase-space energy W with those of V/2.

    Critical points of W are located independently (Newton in the plane);
    their separating values are recomputed by flood fill on a 2d grid.
    Without a labeling ``L`` the V-side data come from
    :func:`separating_saddles`, which also covers potentials with tied minima.

    :raises MismatchDetected: values differ by more than two W-grid quanta,
        or a W-saddle is not of the form ``(s, 0)`` with ``s`` a V-saddle.
    """
    if P.dim != 1:
        raise ValueError("lift check requires d = 1")
    if L is None:
        crit = find_critical_points(P, seeds_per_axis)
        v_values, sads = separating_saddles(P, crit)
        umin = min(c.value for c in crit) / 2
        v_sad = [float(s.location[0]) for s in sads]
    else:
        v_values = list(L.separating_values)
        umin = L.global_minimum.point.value / 2
        v_sad = [float(s.location[0]) for m in L.minima for s in m.saddles]
    top = max(v_values) if v_values else umin + 1
    vmax = 2.0 * np.sqrt(max(top - umin, 1e-6)) * 1.5
    Wp = lifted_field(P, vmax)
    crit_W = find_critical_points(Wp, seeds_per_axis)
    grid = make_grid(Wp, grid_resolution, [c.value for c in crit_W])
    infos = _scan(Wp, crit_W, grid)
    tol = _tie_tol([c.value for c in crit_W])
    w_values, sep = _check_separating(infos, grid.quantum, tol)
    report = {"W_values": w_values, "V_values": v_values, "quantum": grid.quantum,
              "W_saddles": [i.point.location.tolist() for i in sep]}
    if len(w_values) != len(v_values):
        raise MismatchDetected(f"value lists differ in length: {w_values} vs {v_values}")
    diff = max((abs(a - b) for a, b in zip(w_values, v_values)), default=0.0)
    report["max_value_diff"] = diff
    if diff > 2.0 * grid.quantum:
        raise MismatchDetected(f"separating values differ by {diff:.3e}")
    for i in sep:
        x, v = i.point.location
        if abs(v) > 1e-8 or min(abs(x - s) for s in v_sad) > 1e-6 * P.size:
            raise MismatchDetected(f"W-saddle at {(x, v)} is not a lifted V-saddle")
    for s in v_sad:
        if min(abs(i.point.location[0] - s) for i in sep) > 1e-6 * P.size:
            raise MismatchDetected(f"V-saddle {s} has no W counterpart")
    return report
