"""Leading-order Eyring-Kramers predictions for the small eigenvalues."""

from dataclasses import dataclass, field

import numpy as np

from .collision import m0_at_rest
from .errors import AmbiguousLambdaStar, BoltzSpecError
from .saddledyn import SaddleData, phi_eigenproblem


@dataclass
class EKPrediction:
    """Prediction attached to one non-global minimum.

    ``S`` lives on the V/2 scale, so the Arrhenius exponent is
    ``2 S / h = (V(s) - V(m)) / h``; ``arrhenius`` stores ``V(s) - V(m)``.
    """

    minimum: object  # CriticalPoint
    S: float
    arrhenius: float
    prefactor_leading: float
    det_hess_min: float
    saddle_terms: list = field(default_factory=list)  # (location, |det|^{-1/2} * alpha0)
    label: tuple = (0, 0)

    def __post_init__(self):
        if not self.prefactor_leading > 0:
            raise ValueError("prefactor must be positive")

    @property
    def amplitude(self):
        """``sqrt(det Hess_m V) / (2 pi) * prefactor``: everything but ``h e^{-2S/h}``."""
        return np.sqrt(self.det_hess_min) / (2.0 * np.pi) * self.prefactor_leading

    def lambda_leading(self, h):
        h = np.asarray(h, dtype=float)
        return h * np.exp(-2.0 * self.S / h) * self.amplitude

    def to_dict(self, h_list=()):
        return {
            "location": np.asarray(self.minimum.location).tolist(),
            "label": list(self.label),
            "S": self.S,
            "barrier": self.arrhenius,
            "prefactor": self.prefactor_leading,
            "det_hess_min": self.det_hess_min,
            "saddles": [[np.asarray(loc).tolist(), t] for loc, t in self.saddle_terms],
            "lambda": {repr(float(h)): float(self.lambda_leading(h)) for h in h_list},
        }


def saddle_term(saddle, model):
    """``|det Hess_s V|^{-1/2} * (M0 nu2 . nu2)`` and the full prefactor data."""
    sd = SaddleData(saddle.location, saddle.hessian, m0_at_rest(model.with_dim(len(saddle.location))))
    pre = phi_eigenproblem(sd)
    d = sd.dim
    nu2 = pre.nu[d:]
    weight = float(nu2 @ sd.m0 @ nu2)
    return abs(np.linalg.det(sd.hess_v)) ** -0.5 * weight, pre


def predict(labeling, model):
    """One prediction per non-global minimum, sorted by S (descending)."""
    out = []
    for m in labeling.non_global():
        terms = []
        for s in m.saddles:
            try:
                t, _ = saddle_term(s, model)
            except BoltzSpecError as exc:
                raise type(exc)(f"minimum {m.point.location.tolist()}: {exc}") from exc
            terms.append((s.location.copy(), t))
        barrier = 2.0 * m.sigma - m.point.value
        out.append(EKPrediction(
            minimum=m.point,
            S=float(m.S),
            arrhenius=float(barrier),
            prefactor_leading=float(sum(t for _, t in terms)),
            det_hess_min=float(np.linalg.det(m.point.hessian)),
            saddle_terms=terms,
            label=(m.rank, m.sub),
        ))
    out.sort(key=lambda p: -p.S)
    return out


def select_lambda_star(predictions, rtol=1e-12):
    """Prediction governing return to equilibrium.

    Maximal S first; among equal S the smallest ``prefactor * sqrt(det)``.
    """
    if not predictions:
        raise ValueError("no predictions")
    Smax = max(p.S for p in predictions)
    top = [p for p in predictions if abs(p.S - Smax) <= rtol * max(1.0, abs(Smax))]
    keyed = sorted(top, key=lambda p: p.prefactor_leading * np.sqrt(p.det_hess_min))
    if len(keyed) > 1:
        a = keyed[0].prefactor_leading * np.sqrt(keyed[0].det_hess_min)
        b = keyed[1].prefactor_leading * np.sqrt(keyed[1].det_hess_min)
        if abs(a - b) <= rtol * max(abs(a), abs(b)):
            raise AmbiguousLambdaStar(f"predictions tie at S = {Smax} and amplitude {a}")
    return keyed[0]


def export(predictions, h_list):
    return [p.to_dict(h_list) for p in predictions]
