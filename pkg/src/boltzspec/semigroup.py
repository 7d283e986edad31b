"""Implicit time stepping of ``u' = -(1/h) A u`` and metastability diagnostics."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .discretization import shifted_factor
from .errors import InsufficientWindow, NoPlateauDetected, SolverFailure


@dataclass
class TimestepPolicy:
    """Dyadic ladder: ``per_block`` steps of ``dt0 * 2**j`` for j = 0, 1, ...

    With ``per_block = 8`` one time decade holds about 26 steps.  ``max_dt``
    caps the step once the ladder reaches it (resolution of the slow modes).
    ``start_euler`` implicit Euler steps damp the stiff start.  Crank-Nicolson
    hardly damps modes with large imaginary part once ``dt`` is long, so with
    ``damp_on_change`` every change of step size is taken by implicit Euler
    as well (Rannacher smoothing).
    """

    dt0: float = None  # default: h
    per_block: int = 8
    max_dt: float = None
    start_euler: int = 4
    method: str = "cn"  # or "euler"
    damp_on_change: bool = True

    def steps(self, h, t_end):
        dt = self.dt0 or h
        t, out = 0.0, []
        k = 0
        while t < t_end * (1 - 1e-12):
            step = dt * 2 ** (k // self.per_block)
            if self.max_dt is not None:
                step = min(step, self.max_dt)
            step = min(step, t_end - t)
            out.append(step)
            t += step
            k += 1
        return np.array(out)

    def per_decade(self, h, t_end):
        dts = self.steps(h, t_end)
        t = np.cumsum(dts)
        keep = t >= 10 * (self.dt0 or h)
        if not keep.any():
            return len(t)
        return len(t[keep]) / max(np.log10(t[-1] / t[keep][0]), 1e-12)


def default_policy(h, slowest, fraction=0.1):
    """Ladder capped at ``fraction * h / slowest`` (``slowest``: smallest nonzero rate)."""
    return TimestepPolicy(max_dt=fraction * h / abs(slowest))


class SpectralProjector:
    """Bi-orthogonal projector onto a set of right eigenvectors.

    Left vectors follow from the velocity reflection ``J``: ``P u =
    sum_j r_j (r_j^T J u) / (r_j^T J r_j)``.
    """

    def __init__(self, vectors, parity):
        self.R = np.asarray(vectors)
        self.JR = parity[:, None] * self.R
        G = self.JR.T @ self.R  # Gram matrix, diagonal up to rounding
        self.coef = np.linalg.inv(G)

    def coefficients(self, u):
        return self.coef @ (self.JR.T @ u)

    def __call__(self, u):
        P = self.R @ self.coefficients(u)
        return P.real if np.isrealobj(u) and np.allclose(P.imag, 0, atol=1e-12 * max(np.abs(P).max(), 1e-300)) else P


def projectors(sr, opr, ks):
    """``{k: projector onto the k eigenvalues of smallest modulus}``."""
    return {k: SpectralProjector(sr.vectors[:, :k], opr.parity) for k in ks}


@dataclass
class EvolutionRun:
    h: float
    t: np.ndarray
    norm: np.ndarray  # ||u(t)||
    dist: dict  # k -> ||u(t) - P_k u(t)||
    drift: dict  # k -> ||u(t) - P_k u(0)||
    norm0: float
    kernel_drift: float  # max ||P_1 u(t) - P_1 u(0)||
    steps: int = 0
    factorizations: int = 0
    info: dict = field(default_factory=dict)

    def rows(self):
        ks = sorted(self.dist)
        out = []
        for i, t in enumerate(self.t):
            row = {"t": float(t), "norm": float(self.norm[i])}
            for k in ks:
                row[f"dist_{k}"] = float(self.dist[k][i])
                row[f"plateau_{k}"] = float(self.drift[k][i])
            out.append(row)
        return out


def evolve(opr, u0, t_end, sr=None, ks=(1,), policy=None, norm_slack=1e-9):
    """Integrate from ``t = 0`` to ``t_end`` and record norm decompositions.

    :param opr: assembled operator ``A``.
    :param u0: initial state (normalised internally).
    :param t_end: final time.
    :param sr: SpectralResult supplying eigenvectors for the projectors.
    :param ks: projector ranks to record (``1`` is the kernel).
    :param policy: TimestepPolicy.
    :raises SolverFailure: non-finite state or a norm increase above ``norm_slack``.
    """
    h = opr.h
    policy = policy or TimestepPolicy()
    dts = policy.steps(h, t_end)
    if policy.per_decade(h, t_end) < 20:
        raise ValueError("time step policy gives fewer than 20 steps per decade")
    u = np.asarray(u0, dtype=float).copy()
    u /= opr.norm(u)
    proj = projectors(sr, opr, ks) if sr is not None else {}
    base = {k: P(u) for k, P in proj.items()}
    kern0 = base.get(1)
    used = set()

    def record(store, t, u):
        store["t"].append(t)
        store["norm"].append(opr.norm(u))
        for k, P in proj.items():
            pu = P(u)
            store["dist"][k].append(opr.norm(u - pu))
            store["drift"][k].append(opr.norm(u - base[k]))
            if k == 1:
                store["kd"] = max(store["kd"], opr.norm(pu - kern0))

    store = {"t": [], "norm": [], "dist": {k: [] for k in proj}, "drift": {k: [] for k in proj}, "kd": 0.0}
    record(store, 0.0, u)
    t = 0.0
    prev = store["norm"][0]
    n_euler = policy.start_euler
    last = None
    for i, dt in enumerate(dts):
        # both schemes factor A - z with z = -2h/dt
        z = -2.0 * h / dt
        lu = shifted_factor(opr, z)
        used.add(z)
        changed = last is not None and abs(dt - last) > 1e-12 * dt
        last = dt
        if policy.method == "euler" or n_euler > 0 or (policy.damp_on_change and changed):
            # two implicit Euler half steps
            for _ in range(2):
                u = lu.solve(-z * u)
            n_euler = max(n_euler - 1, 0)
        else:
            # Crank-Nicolson: (A - z)^{-1} (-z - A) u = -2z (A - z)^{-1} u - u
            u = -2.0 * z * lu.solve(u) - u
        t += dt
        if not np.all(np.isfinite(u)):
            raise SolverFailure(f"non-finite state at t={t:.4g}")
        record(store, t, u)
        cur = store["norm"][-1]
        if cur > prev * (1 + norm_slack) + 1e-300:
            raise SolverFailure(f"norm increased from {prev:.17g} to {cur:.17g} at t={t:.4g}")
        prev = cur
    for z in used:
        opr._lu_cache.pop(complex(z), None)
    return EvolutionRun(h, np.array(store["t"]), np.array(store["norm"]),
                        {k: np.array(v) for k, v in store["dist"].items()},
                        {k: np.array(v) for k, v in store["drift"].items()},
                        1.0, float(store["kd"]), len(dts), len(used))


# ------------------------------------------------------------------ analysis

@dataclass
class RateFit:
    rate: float  # decay rate of the residual in t
    rate_times_h: float  # comparable with Re lambda
    rms: float  # rms residual of the log-linear fit
    window: tuple  # (t_first, t_last)
    decades: float  # decades of decay covered by the window
    points: int


def decay_rate(run, k=1, window=None, upper=1e-1, floor=1e-10, min_decades=3.0):
    """Least-squares fit of ``log ||u(t) - P_k u(t)||`` against ``t``.

    Without an explicit ``window`` the fit uses the snapshots where the
    residual lies between ``floor`` and ``upper`` times its initial value,
    i.e. after the transient and above round-off.

    :raises InsufficientWindow: fewer than 3 points or less than
        ``min_decades`` of decay inside the window.
    """
    t = np.asarray(run.t)
    r = np.asarray(run.dist[k])
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1]) & (r > 0)
    else:
        r0 = r[0] if r[0] > 0 else r.max()
        sel = (r <= upper * r0) & (r >= floor * r0) & (t > 0)
    if np.count_nonzero(sel) < 3:
        raise InsufficientWindow(f"only {np.count_nonzero(sel)} usable snapshots")
    ts, ys = t[sel], np.log(r[sel])
    decades = (ys.max() - ys.min()) / np.log(10.0)
    if decades < min_decades:
        raise InsufficientWindow(f"window covers {decades:.2f} decades of decay, need {min_decades}")
    (slope, icpt), res, *_ = np.linalg.lstsq(np.column_stack([ts, np.ones_like(ts)]), ys, rcond=None)
    rms = float(np.sqrt(np.mean((ys - slope * ts - icpt) ** 2)))
    return RateFit(float(-slope), float(-slope * run.h), rms, (float(ts[0]), float(ts[-1])),
                   float(decades), int(ts.size))


@dataclass
class PlateauRow:
    k: int  # rank of the projector (k = 1 is equilibrium)
    observed: tuple  # (onset, end); end = inf for k = 1
    predicted: tuple  # (h / lambda_EK of the first discarded mode, h / lambda_EK of the last kept one)
    decades: float


def _onset(t, d, tau):
    """First time after which ``d`` stays below ``tau``."""
    above = np.flatnonzero(d >= tau)
    if above.size == 0:
        return float(t[1]) if t.size > 1 else 0.0
    i = above[-1] + 1
    return float(t[i]) if i < t.size else np.inf


def plateau_report(run, predictions, threshold=1e-3, min_decades=1.0):
    """Metastable plateaus of ``u(t)``.

    Plateau k is the time interval on which ``u(t)`` lies in the range of
    ``P_k`` to relative accuracy ``threshold`` but not yet in that of
    ``P_{k-1}``: it opens at the onset of ``||u - P_k u|| < threshold`` and
    closes at the onset for ``k - 1``.  Only plateaus spanning at least
    ``min_decades`` time decades are reported; the equilibrium plateau
    (k = 1) is open ended.

    Returns ``(rows, ratios)`` where ``ratios`` lists, for consecutive
    reported ranks k and k + 1 (k >= 1), the observed onset ratio and
    ``exp(2 (S_k - S_{k+1}) / h)`` with S sorted decreasingly.

    Emits NoPlateauDetected (a warning) when no metastable plateau is found.
    """
    h = run.h
    t = run.t
    lam = sorted(float(p.lambda_leading(h)) for p in predictions)  # slow to fast
    S = sorted((p.S for p in predictions), reverse=True)
    ks = sorted(run.dist)
    onset = {k: _onset(t, run.dist[k] / run.norm0, threshold) for k in ks}
    rows = []
    for k in ks:
        start = onset[k]
        end = onset.get(k - 1, np.inf) if k > 1 else np.inf
        if not np.isfinite(start) or end <= start:
            continue
        dec = np.inf if not np.isfinite(end) else np.log10(end / max(start, t[1]))
        if dec < min_decades:
            continue
        lo = h / lam[k - 1] if k - 1 < len(lam) else 1.0 / h
        hi = h / lam[k - 2] if k >= 2 else np.inf
        rows.append(PlateauRow(k, (start, end), (lo, hi), float(dec)))
    if not any(r.k > 1 for r in rows):
        warnings.warn(NoPlateauDetected(f"no metastable plateau at threshold {threshold}"))
    ratios = []
    found = {r.k for r in rows}
    for k in sorted(found):
        if k + 1 in found and k - 1 < len(S) and k < len(S):
            observed = onset[k] / onset[k + 1]
            predicted = float(np.exp(2.0 * (S[k - 1] - S[k]) / h))
            ratios.append({"k": k, "observed": observed, "predicted": predicted,
                           "factor": max(observed / predicted, predicted / observed)})
    return rows, ratios
