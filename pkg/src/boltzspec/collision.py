"""Collision models: rate functions of the velocity harmonic oscillator.

The velocity harmonic oscillator ``H0 = b* b`` with ``b = h d/dv + v/2`` is
diagonal on the scaled Hermite functions with eigenvalue ``h n``, so a
collision operator ``rho(H0)`` acts on level ``n`` by ``rho(h n)``.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import CoercivityViolated, ConfigError, MatrixKindUnsupported


def derivative_at_zero(f, eps0=1e-2, levels=8):
    """Richardson-extrapolated one-sided derivative ``lim (f(e) - f(0)) / e``."""
    f0 = f(0.0)
    table = []
    for k in range(levels):
        e = eps0 / 2 ** k
        row = [(f(e) - f0) / e]
        for j in range(1, k + 1):
            row.append(row[j - 1] + (row[j - 1] - table[k - 1][j - 1]) / (2 ** j - 1))
        table.append(row)
    return float(table[-1][-1])


@dataclass(frozen=True)
class RateFunction:
    """A rate function ``rho`` on [0, inf) with ``rho(0) = 0``."""

    rho: Callable
    rho_prime0: float
    rho_inf: Optional[float] = None
    name: str = "custom"

    def __call__(self, t):
        return self.rho(np.asarray(t, dtype=float))

    def check(self, C=4.0, tmax=100.0, samples=2001):
        """Verify ``rho(0) = 0``, ``rho(t) >= t / (C (1 + t))`` and the derivative at 0."""
        if abs(float(self.rho(np.float64(0.0)))) > 0:
            raise CoercivityViolated(f"{self.name}: rho(0) = {self.rho(0.0)} != 0")
        t = np.linspace(0.0, tmax, samples)
        lower = t / (C * (1.0 + t))
        slack = np.min(self(t) - lower)
        if slack < -1e-14:
            raise CoercivityViolated(f"{self.name}: lower bound violated by {-slack:.3e}")
        fd = derivative_at_zero(lambda s: float(self.rho(np.float64(s))))
        if abs(fd - self.rho_prime0) > 1e-8 * max(1.0, abs(self.rho_prime0)):
            raise CoercivityViolated(f"{self.name}: rho'(0) {self.rho_prime0} vs {fd}")
        return {"min_slack": float(slack), "rho_prime0_fd": fd}


def mild_relaxation(scale=1.0):
    """``scale * t / (1 + t)``."""
    return RateFunction(lambda t: scale * t / (1.0 + t), float(scale), float(scale),
                        "mild_relaxation" if scale == 1.0 else f"{scale}*mild_relaxation")


def linear_rate(scale=1.0):
    """``scale * t``: the Fokker-Planck case."""
    return RateFunction(lambda t: scale * t, float(scale), None,
                        "linear" if scale == 1.0 else f"{scale}*linear")


_SAFE_NAMES = {k: getattr(np, k) for k in ("exp", "log", "log1p", "expm1", "sqrt", "tanh",
                                           "arctan", "minimum", "maximum", "abs", "pi")}


def rate_from_expression(expr):
    """Rate function from a numpy expression in ``t``, e.g. ``"2*t/(1+t)"``."""
    code = compile(expr, "<rho>", "eval")
    for name in code.co_names:
        if name not in _SAFE_NAMES and name != "t":
            raise ConfigError("collision.rho", f"name {name!r} not allowed in expression")

    def rho(t):
        return eval(code, {"__builtins__": {}}, dict(_SAFE_NAMES, t=t))

    d0 = derivative_at_zero(lambda s: float(rho(np.float64(s))))
    big = float(rho(np.float64(1e12)))
    return RateFunction(rho, d0, big if np.isfinite(big) and big < 1e9 else None, expr)


@dataclass(frozen=True)
class CollisionModel:
    """Either a BGK-type model ``rho(H0)`` or a constant matrix ``M0``.

    For the matrix kind in d = 1 the operator is ``b* M0 b``, whose Hermite
    action is ``M0 * h * n``.
    """

    kind: str  # "bgk" | "matrix"
    dim: int = 1
    rate: Optional[RateFunction] = None
    m0: Optional[np.ndarray] = None
    coercivity_C: float = 4.0

    def __post_init__(self):
        if self.kind == "bgk":
            if self.rate is None:
                raise ValueError("bgk model needs a rate function")
        elif self.kind == "matrix":
            m = np.atleast_2d(np.asarray(self.m0, dtype=float))
            if m.shape != (self.dim, self.dim):
                raise ValueError(f"m0 must be {self.dim}x{self.dim}")
            if not np.allclose(m, m.T, atol=1e-14):
                raise ValueError("m0 must be symmetric")
            object.__setattr__(self, "m0", m)
        else:
            raise ValueError(f"unknown collision kind {self.kind!r}")
        floor = np.linalg.eigvalsh(m0_at_rest(self)).min()
        if floor < 1.0 / self.coercivity_C:
            raise CoercivityViolated(f"M0 smallest eigenvalue {floor:.3g} < 1/C")

    @classmethod
    def bgk(cls, rate=None, dim=1, coercivity_C=4.0):
        return cls("bgk", dim, rate if rate is not None else mild_relaxation(),
                   coercivity_C=coercivity_C)

    @classmethod
    def constant(cls, m0, coercivity_C=4.0):
        m0 = np.atleast_2d(np.asarray(m0, dtype=float))
        return cls("matrix", m0.shape[0], m0=m0, coercivity_C=coercivity_C)

    def with_dim(self, dim):
        if self.kind == "matrix":
            if self.dim != dim:
                raise ValueError("constant matrix dimension is fixed")
            return self
        return CollisionModel("bgk", dim, self.rate, coercivity_C=self.coercivity_C)

    def level_rate(self, t):
        """Scalar action on a Hermite level of energy ``t = h |n|``."""
        if self.kind == "bgk":
            return self.rate(t)
        if self.dim != 1:
            raise MatrixKindUnsupported("constant matrix models are not Hermite diagonal for d >= 2")
        return float(self.m0[0, 0]) * np.asarray(t, dtype=float)

    def describe(self):
        if self.kind == "bgk":
            return {"kind": "bgk", "rho": self.rate.name, "rho_prime0": self.rate.rho_prime0}
        return {"kind": "matrix", "m0": self.m0.tolist()}


def m0_at_rest(model):
    """The constant matrix governing the saddle dynamics.

    BGK models give ``rho'(0) Id``; matrix models return the stored matrix.
    """
    if model.kind == "bgk":
        return model.rate.rho_prime0 * np.eye(model.dim)
    return np.array(model.m0, dtype=float)


def q_hermite_diagonal(model, h, max_level):
    """Eigencoefficients ``rho(h |n|)`` of the collision operator.

    :param model: collision model.
    :param h: semiclassical parameter.
    :param max_level: highest level per velocity direction.
    :returns: array of shape ``(max_level + 1,) * d`` indexed by the multi-index.
    """
    if model.kind == "matrix" and model.dim >= 2:
        raise MatrixKindUnsupported("constant matrix models are not Hermite diagonal for d >= 2")
    n = np.arange(max_level + 1)
    total = n
    for _ in range(model.dim - 1):
        total = np.add.outer(total, n)
    out = np.asarray(model.level_rate(h * total), dtype=float)
    out[(0,) * model.dim] = 0.0
    return out


def coercivity_report(model, h, max_level):
    """Check ``rho(h|n|) >= h|n| / (C (1 + h|n|))`` and ``>= h / C`` for ``|n| >= 1``."""
    C = model.coercivity_C
    q = q_hermite_diagonal(model, h, max_level)
    n = np.arange(max_level + 1)
    total = n
    for _ in range(model.dim - 1):
        total = np.add.outer(total, n)
    t = h * total
    nz = total >= 1
    b1 = q[nz] - t[nz] / (C * (1.0 + t[nz]))
    b2 = q[nz] - h / C
    return {
        "ok": bool(np.all(b1 >= 0) and np.all(b2 >= 0) and q[(0,) * model.dim] == 0.0),
        "min_slack_rational": float(b1.min()),
        "min_slack_floor": float(b2.min()),
    }


def ladder_matrices(h, max_level):
    """Sparse matrices of ``b = h d/dv + v/2`` and its adjoint on levels 0..max_level.

    ``b`` lowers with coefficient ``sqrt(h n)``; ``b*`` is its transpose.
    """
    if max_level < 2:
        raise ValueError("max_level must be >= 2")
    n = np.arange(1, max_level + 1)
    b = sp.diags(np.sqrt(h * n), 1, shape=(max_level + 1, max_level + 1), format="csr")
    return b, b.T.tocsr()


def from_spec(spec, dim=1):
    """Collision model from a config mapping (``rho`` or ``m0_matrix``)."""
    spec = dict(spec or {})
    C = float(spec.get("coercivity_C", 4.0))
    if spec.get("m0_matrix") is not None:
        arr = np.asarray(spec["m0_matrix"], dtype=float)
        if arr.ndim == 1:
            k = int(round(np.sqrt(arr.size)))
            if k * k != arr.size:
                raise ConfigError("collision.m0_matrix", "row-major array must be square")
            arr = arr.reshape(k, k)
        return CollisionModel.constant(arr, coercivity_C=C)
    rho = spec.get("rho", "mild_relaxation")
    scale = float(spec.get("scale", 1.0))
    if rho == "mild_relaxation":
        rate = mild_relaxation(scale)
    elif rho == "linear":
        rate = linear_rate(scale)
    elif isinstance(rho, str):
        rate = rate_from_expression(rho)
    else:
        raise ConfigError("collision.rho", "expected a name or an expression")
    return CollisionModel.bgk(rate, dim=dim, coercivity_C=C)
