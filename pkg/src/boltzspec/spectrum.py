"""Small spectrum of the assembled operator.

The eigensolver is a Krylov-Schur restarted Arnoldi iteration applied to
``(A - sigma)^{-1}``, using the cached sparse factorisations of the
discretization module.  Left eigenvectors come for free from the velocity
reflection ``J`` (``J A J = A^T`` for every scheme), which gives condition
numbers and bi-orthogonal spectral projectors.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .discretization import regularizing_shift, solve_shifted
from .errors import CountMismatch, NotConverged


# ------------------------------------------------------------------ Arnoldi

def _orthogonalize(V, w, j):
    # classical Gram-Schmidt with one re-orthogonalisation pass
    h = V[:, :j].conj().T @ w
    w = w - V[:, :j] @ h
    h2 = V[:, :j].conj().T @ w
    w = w - V[:, :j] @ h2
    return w, h + h2


def krylov_schur(op, n, k, ncv=None, tol=1e-12, maxiter=200, v0=None, rng=None):
    """Largest-magnitude eigenpairs of a linear map by Krylov-Schur restarts.

    :param op: callable returning ``M @ v`` for complex vectors.
    :param n: dimension.
    :param k: number of wanted eigenpairs.
    :param ncv: basis size (default ``max(3 k, k + 8)``).
    :param tol: relative Ritz residual tolerance.
    :returns: ``(theta, X, info)`` with ``theta`` sorted by decreasing modulus.
    :raises NotConverged: when ``maxiter`` restarts do not suffice.
    """
    m = ncv or max(3 * k, k + 8)
    m = min(m, n - 1)
    if k >= m:
        raise ValueError("ncv must exceed k")
    rng = np.random.default_rng(12345) if rng is None else rng
    V = np.zeros((n, m + 1), dtype=complex)
    H = np.zeros((m + 1, m), dtype=complex)
    v = rng.standard_normal(n) if v0 is None else np.asarray(v0, dtype=complex)
    V[:, 0] = v / np.linalg.norm(v)
    p = 0  # current size of the retained Schur block
    nmatvec = 0
    history = []
    for it in range(maxiter):
        for j in range(p, m):
            w = op(V[:, j])
            nmatvec += 1
            w, hcol = _orthogonalize(V, w, j + 1)
            beta = np.linalg.norm(w)
            H[: j + 1, j] = hcol
            H[j + 1, j] = beta
            if beta < 1e-14 * np.abs(hcol).max():
                # invariant subspace: restart direction is a fresh random vector
                w = rng.standard_normal(n).astype(complex)
                w, _ = _orthogonalize(V, w, j + 1)
                H[j + 1, j] = 0.0
                beta = np.linalg.norm(w)
            V[:, j + 1] = w / beta
        T, Z = sla.schur(H[:m, :m], output="complex")
        theta = np.diag(T)
        order = np.argsort(-np.abs(theta))
        keep = min(max(k + (m - k) // 2, k + 1), m - 1)
        thr = np.abs(theta[order[keep - 1]])
        T, Z, sdim = sla.schur(H[:m, :m], output="complex", sort=lambda z: abs(z) >= thr * (1 - 1e-14))
        theta = np.diag(T)[:sdim]
        b = H[m, :m] @ Z
        # residual norms of the Ritz pairs in the retained block
        ev, Y = np.linalg.eig(T[:sdim, :sdim])
        res = np.abs(b[:sdim] @ Y) / np.linalg.norm(Y, axis=0)
        idx = np.argsort(-np.abs(ev))[:k]
        conv = res[idx] <= tol * np.abs(ev[idx])
        history.append(float(np.max(res[idx] / np.abs(ev[idx]))))
        if np.all(conv):
            X = V[:, :m] @ (Z[:, :sdim] @ Y[:, idx])
            X /= np.linalg.norm(X, axis=0)
            return ev[idx], X, {"restarts": it + 1, "matvecs": nmatvec, "history": history}
        # truncate to the sorted Schur block and continue
        p = sdim
        Vn = V[:, :m] @ Z[:, :p]
        V[:, :p] = Vn
        V[:, p] = V[:, m]
        H[:] = 0.0
        H[:p, :p] = T[:p, :p]
        H[p, :p] = b[:p]
    raise NotConverged(f"Krylov-Schur: {k} pairs not converged after {maxiter} restarts",
                       {"restarts": maxiter, "matvecs": nmatvec, "history": history[-10:]})


# ------------------------------------------------------------------ results

@dataclass
class SpectralResult:
    h: float
    small_eigs: np.ndarray  # sorted by modulus
    vectors: np.ndarray = field(repr=False)  # right eigenvectors (columns)
    residuals: np.ndarray = None  # ||A v - lam v|| / ||v||
    condition: np.ndarray = None  # 1 / |<J v, v>| (unit right vectors)
    shift: float = 0.0
    info: dict = field(default_factory=dict)
    resolvent_probes: list = field(default_factory=list)

    def left_vectors(self, parity):
        """Left eigenvectors ``y`` with ``y^H A = lam y^H``, from ``J``."""
        return parity[:, None] * self.vectors.conj()

    def count_in_strip(self, bound):
        return int(np.count_nonzero(self.small_eigs.real <= bound))

    def to_rows(self):
        return [{"index": i, "re": float(z.real), "im": float(z.imag),
                 "residual": float(r), "condition": float(c)}
                for i, (z, r, c) in enumerate(zip(self.small_eigs, self.residuals, self.condition))]


def small_eigenvalues(opr, count, tol=1e-10, shift=None, ncv=None, maxiter=200):
    """The ``count`` eigenvalues of the assembled operator nearest to 0.

    Shift-invert around a tiny negative real ``shift`` (the exact kernel
    makes ``A`` itself singular).

    :raises NotConverged: with restart diagnostics.
    """
    sigma = regularizing_shift(opr) if shift is None else float(shift)

    def op(v):
        return solve_shifted(opr, sigma, v)

    theta, X, info = krylov_schur(op, opr.size, count, ncv=ncv, tol=min(tol, 1e-10),
                                  maxiter=maxiter)
    lam = sigma + 1.0 / theta
    order = np.argsort(np.abs(lam))
    lam, X = lam[order], X[:, order]
    # phase-normalise: largest entry real positive (real eigenvectors become real)
    for j in range(X.shape[1]):
        i = np.argmax(np.abs(X[:, j]))
        X[:, j] *= np.exp(-1j * np.angle(X[i, j]))
    AX = opr.matrix @ X
    res = np.linalg.norm(AX - X * lam, axis=0)
    anorm = _norm1(opr)
    if np.any(res > max(tol, 1e-9) * anorm):
        raise NotConverged("eigenpair residuals above tolerance",
                           {"residuals": res.tolist(), "norm": anorm, **info})
    J = opr.parity
    cond = 1.0 / np.abs(np.einsum("i,ij,ij->j", J, X, X))
    info = dict(info, norm=anorm, shift=sigma)
    return SpectralResult(opr.h, lam, X, res, cond, sigma, info)


def _norm1(opr):
    return float(abs(opr.matrix).sum(axis=0).max())


def operator_norm(opr):
    """Cheap bound on ``||A||``: the max column sum."""
    return _norm1(opr)


# ------------------------------------------------------------------ checks

def default_strip(h, c=1.5):
    """Half plane ``Re z <= c h^2`` containing the exponentially small cluster."""
    return c * h * h


def structural_report(sr, opr, n0, c=1.5):
    """Checks on the small cluster: count, kernel, positivity, gap, pairs."""
    lam = sr.small_eigs
    bound = default_strip(sr.h, c)
    inside = lam[lam.real <= bound]
    anorm = sr.info.get("norm", _norm1(opr))
    nonzero = inside[1:] if inside.size else inside
    rep = {
        "count_in_strip": int(inside.size),
        "n0": n0,
        "count_ok": int(inside.size) == n0 and lam.size > n0,
        "kernel_abs": float(abs(lam[0])),
        "kernel_ok": bool(abs(lam[0]) <= 1e-11 * anorm),
        "positive_ok": bool(np.all(nonzero.real > 0)),
        "kernel_gap": float(abs(lam[1]) / max(abs(lam[0]), 1e-300)) if lam.size > 1 else np.inf,
        "max_small": float(np.abs(inside).max()) if inside.size else 0.0,
        "next_beyond": float(np.abs(lam[inside.size])) if lam.size > inside.size else np.nan,
        "conjugate_closed": conjugate_closed(lam),
    }
    return rep


def conjugate_closed(lam, rtol=1e-8, atol=1e-13):
    """Complex members come in conjugate pairs.

    Imaginary parts below ``rtol |z| + atol max|lam|`` count as rounding.
    The outermost modulus is skipped: a truncated list may cut a pair.
    """
    lam = np.asarray(lam)
    top = np.abs(lam).max()
    floor = atol * top
    edge = top * (1 - 1e-9)
    for z in lam[np.abs(lam) < edge]:
        if abs(z.imag) > rtol * abs(z) + floor:
            if np.min(np.abs(lam - z.conjugate())) > 10 * rtol * abs(z) + floor:
                return False
    return True


def resolvent_probe(opr, h, c=1.5, ctilde=1.0, nsamples=16, iters=30, seed=0, include_axis=True):
    """Estimate ``||(A - z)^{-1}||`` on the boundary of the annulus.

    Samples: the circle ``|z| = c h^2`` restricted to ``Re z <= c h^2``
    (i.e. the whole circle), the segment ``Re z = c h^2``, and the inner
    circle ``|z| = ctilde h^2``.  The norm is the square root of the top
    eigenvalue of ``(A - z)^{-1} (A - z)^{-H}`` by power iteration.

    Returns a list of ``(z, bound, h^2 * bound)``.
    """
    rng = np.random.default_rng(seed)
    r_out, r_in = c * h * h, ctilde * h * h
    ang = np.linspace(0.0, np.pi, nsamples // 2 + 1)[1:]  # upper half (real matrix)
    zs = list(r_out * np.exp(1j * ang)) + list(r_in * np.exp(1j * ang))
    zs += list(r_out + 1j * np.linspace(0.0, r_out, nsamples // 4 + 1)[1:])
    if include_axis:
        zs.append(-h * h + 0j)
    out = []
    for z in zs:
        x = rng.standard_normal(opr.size) + 1j * rng.standard_normal(opr.size)
        x /= np.linalg.norm(x)
        est = 0.0
        for _ in range(iters):
            y = solve_shifted(opr, z, x)
            w = solve_shifted(opr, z, y, trans="H")
            nw = np.linalg.norm(w)
            new = np.sqrt(nw)
            x = w / nw
            if abs(new - est) <= 1e-6 * new:
                est = new
                break
            est = new
        out.append((complex(z), float(est), float(h * h * est)))
        opr._lu_cache.pop(complex(z), None)  # probes are one-off shifts
    return out


# ------------------------------------------------------------------ matching

@dataclass
class MatchRow:
    minimum: object
    lambda_numeric: complex
    lambda_ek: float
    ratio: float
    flagged: bool
    overlap: float = np.nan


def match_predictions(sr, predictions, h, band=0.25, n_small=None, quasimode_vectors=None,
                      opr=None):
    """Pair nonzero small eigenvalues with predictions by magnitude.

    :param n_small: size of the small cluster including the kernel (default:
        number of predictions + 1).
    :param quasimode_vectors: optional list (aligned with ``predictions``) of
        discrete quasimodes for an overlap diagnostic.
    :raises CountMismatch: fewer computed eigenvalues than predictions.
    """
    n_small = len(predictions) + 1 if n_small is None else n_small
    if n_small - 1 != len(predictions) or sr.small_eigs.size < n_small:
        raise CountMismatch(f"{n_small - 1} nonzero small eigenvalues vs {len(predictions)} predictions")
    lam = sr.small_eigs[1:n_small]
    vecs = sr.vectors[:, 1:n_small]
    o_num = np.argsort(np.abs(lam))
    pairs = sorted(range(len(predictions)), key=lambda i: float(predictions[i].lambda_leading(h)))
    rows = []
    for jn, ip in zip(o_num, pairs):
        p = predictions[ip]
        ek = float(p.lambda_leading(h))
        ratio = float(lam[jn].real / ek)
        ov = np.nan
        if quasimode_vectors is not None and opr is not None:
            f = quasimode_vectors[ip]
            v = vecs[:, jn]
            ov = float(abs(np.vdot(v, f)) / (np.linalg.norm(v) * np.linalg.norm(f)))
        rows.append(MatchRow(p.minimum, complex(lam[jn]), ek, ratio, abs(ratio - 1.0) > band, ov))
    rows.sort(key=lambda r: abs(r.lambda_numeric))
    return rows


def dense_small_spectrum(opr, count):
    """Reference: dense eigenvalues nearest 0 (small problems only)."""
    w = np.linalg.eigvals(opr.matrix.toarray())
    return w[np.argsort(np.abs(w))][:count]
