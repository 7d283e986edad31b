"""Small spectrum of semiclassical kinetic (linear Boltzmann) operators.

Landscape labeling, Eyring-Kramers predictions, Hermite discretization,
shift-invert eigensolver, quasimodes and semigroup diagnostics.
"""

from . import (collision, config, discretization, ekformula, errors, landscape, potential, quasimode,
               saddledyn, semigroup, spectrum)
from .collision import CollisionModel
from .discretization import AssembledOperator, assemble
from .ekformula import EKPrediction, predict, select_lambda_star
from .landscape import Labeling, analyze, build_labeling, find_critical_points, separating_saddles
from .potential import Potential
from .quasimode import Quasimode, build_quasimode, laplace_check, quasimode_residual, rayleigh_quotient
from .saddledyn import SaddleData, SaddlePrefactor, bgk_closed_form, phi_eigenproblem
from .semigroup import EvolutionRun, decay_rate, evolve, plateau_report
from .spectrum import SpectralResult, resolvent_probe, small_eigenvalues

__version__ = "0.1.0"
