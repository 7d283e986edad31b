"""Hot loops with a numba path and a pure numpy/scipy fallback.

Set ``BOLTZSPEC_NO_JIT=1`` to force the fallback (useful for debugging and
for the benchmark in ``benchmarks/bench_kernels.py``).
"""

import os

import numpy as np
from scipy import ndimage

_DISABLED = os.environ.get("BOLTZSPEC_NO_JIT", "0").lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag
    HAVE_NUMBA = False


def jit_enabled():
    return HAVE_NUMBA


# ---------------------------------------------------------------- labeling

def _label_numpy(mask):
    structure = ndimage.generate_binary_structure(mask.ndim, 1)
    labels, count = ndimage.label(mask, structure=structure)
    return labels.astype(np.int64), int(count)


if HAVE_NUMBA:

    @njit(cache=True)
    def _find(parent, i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:  # path compression
            nxt = parent[i]
            parent[i] = root
            i = nxt
        return root

    @njit(cache=True)
    def _union(parent, a, b):
        ra = _find(parent, a)
        rb = _find(parent, b)
        if ra < rb:
            parent[rb] = ra
        elif rb < ra:
            parent[ra] = rb

    @njit(cache=True)
    def _label_flat(flat, shape0, shape1):
        # face connectivity on a (shape0, shape1) grid; shape1 == 1 for d=1
        n = flat.size
        parent = np.empty(n, dtype=np.int64)
        for i in range(shape0):
            for j in range(shape1):
                k = i * shape1 + j
                if not flat[k]:
                    continue
                left = j > 0 and flat[k - 1]
                up = i > 0 and flat[k - shape1]
                if left:
                    parent[k] = _find(parent, k - 1)
                    if up:
                        _union(parent, parent[k], k - shape1)
                elif up:
                    parent[k] = _find(parent, k - shape1)
                else:
                    parent[k] = k
        labels = np.zeros(n, dtype=np.int64)
        remap = -np.ones(n, dtype=np.int64)
        count = 0
        # scan order matches scipy.ndimage.label numbering
        for k in range(n):
            if not flat[k]:
                continue
            r = _find(parent, parent[k])
            if remap[r] < 0:
                count += 1
                remap[r] = count
            labels[k] = remap[r]
        return labels, count

    def _label_jit(mask):
        if mask.ndim == 1:
            s0, s1 = mask.shape[0], 1
        else:
            s0, s1 = mask.shape
        labels, count = _label_flat(np.ascontiguousarray(mask).ravel(), s0, s1)
        return labels.reshape(mask.shape), int(count)


def label_components(mask, use_jit=None):
    """Label face-connected components of a boolean array (ndim 1 or 2).

    :param mask: boolean array.
    :param use_jit: force a path; ``None`` picks numba when available.
    :returns: ``(labels, count)`` with labels in ``1..count`` and 0 off-mask.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim not in (1, 2):
        raise ValueError("only 1d and 2d grids are supported")
    if use_jit is None:
        use_jit = HAVE_NUMBA
    if use_jit and HAVE_NUMBA:
        return _label_jit(mask)
    return _label_numpy(mask)


# ---------------------------------------------------------------- Hermite

def _hermite_numpy(v, h, nmax):
    v = np.asarray(v, dtype=float)
    out = np.empty((nmax + 1, v.size))
    out[0] = np.exp(-v * v / (4.0 * h)) / (2.0 * np.pi * h) ** 0.25
    if nmax >= 1:
        out[1] = v / np.sqrt(h) * out[0]
    s = v / np.sqrt(h)
    for n in range(1, nmax):
        out[n + 1] = (s * out[n] - np.sqrt(n) * out[n - 1]) / np.sqrt(n + 1)
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def _hermite_jit(v, h, nmax):
        m = v.size
        out = np.empty((nmax + 1, m))
        c0 = (2.0 * np.pi * h) ** -0.25
        rh = 1.0 / np.sqrt(h)
        for j in range(m):
            out[0, j] = c0 * np.exp(-v[j] * v[j] / (4.0 * h))
        if nmax >= 1:
            for j in range(m):
                out[1, j] = v[j] * rh * out[0, j]
        # level-major order keeps the inner loop contiguous
        for n in range(1, nmax):
            a = rh / np.sqrt(n + 1.0)
            b = np.sqrt(n / (n + 1.0))
            for j in range(m):
                out[n + 1, j] = a * v[j] * out[n, j] - b * out[n - 1, j]
        return out


def hermite_table(v, h, nmax, use_jit=None):
    """Orthonormal Hermite functions psi_0..psi_nmax for the weight exp(-v^2/2h).

    Returns an array of shape ``(nmax + 1, len(v))``.
    """
    v = np.ascontiguousarray(np.ravel(v), dtype=float)
    if use_jit is None:
        use_jit = HAVE_NUMBA
    if use_jit and HAVE_NUMBA:
        return _hermite_jit(v, float(h), int(nmax))
    return _hermite_numpy(v, h, nmax)
