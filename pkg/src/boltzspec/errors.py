"""Exception hierarchy shared by all modules."""


class BoltzSpecError(Exception):
    """Base class for every error raised by the package."""


# landscape
class DegenerateCritical(BoltzSpecError):
    """A critical point has a (numerically) singular Hessian."""


class NoMinima(BoltzSpecError):
    """Fewer than two local minima were found in the window."""


class ResolutionTooCoarse(BoltzSpecError):
    """The energy grid cannot resolve two separating values."""


class TieBreak(BoltzSpecError):
    """Two separating saddles share a value but bound different components."""


class LabelingHypothesisViolated(BoltzSpecError):
    """A sublevel component has two global minima, or saddle sets intersect."""


class MismatchDetected(BoltzSpecError):
    """Phase-space lift and base landscape disagree."""


class ConfinementError(BoltzSpecError):
    """Gradient too small on the window boundary."""


# collision
class MatrixKindUnsupported(BoltzSpecError):
    """Constant-matrix collision models have no Hermite-diagonal form for d >= 2."""


class CoercivityViolated(BoltzSpecError):
    """Rate function fails its lower bound."""


# saddle dynamics
class ImaginaryAxisSpectrum(BoltzSpecError):
    """The linearization has eigenvalues on the imaginary axis."""


class NotAGraph(BoltzSpecError):
    """An invariant subspace is not transverse to the fibre."""


class MultipleNonpositiveEigenvalues(BoltzSpecError):
    """More than one eigenvalue with non-positive real part."""


class ComplexLeftmostEigenvalue(BoltzSpecError):
    """The non-positive eigenvalue is not real."""


# prediction
class AmbiguousLambdaStar(BoltzSpecError):
    """Two predictions tie in both selection keys."""


# discretization / spectrum
class WindowTooSmall(BoltzSpecError):
    """Equilibrium density is not negligible at the window boundary."""


class TailMass(BoltzSpecError):
    """The kernel vector has significant weight in the top Hermite levels."""


class SingularShift(BoltzSpecError):
    """The requested shift is (numerically) an eigenvalue."""


class NotConverged(BoltzSpecError):
    """Iterative eigensolver did not converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CountMismatch(BoltzSpecError):
    """Numerical and predicted small eigenvalue counts differ."""


# quasimode
class GridTooCoarse(BoltzSpecError):
    """Quadrature grid does not resolve the sqrt(h) scale."""


class CollarOverlap(BoltzSpecError):
    """Transition layers of two saddles intersect."""


# semigroup
class SolverFailure(BoltzSpecError):
    """Time stepping produced an inconsistent state."""


class InsufficientWindow(BoltzSpecError):
    """Not enough decay to fit a rate."""


class NoPlateauDetected(UserWarning):
    """Issued (not raised) when plateau detection finds nothing."""


# cli
class ConfigError(BoltzSpecError):
    """Invalid run configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class ShapeMismatch(BoltzSpecError):
    """Two reports cannot be compared field by field."""


# name used by the interface contract
HypothesisJVideViolated = LabelingHypothesisViolated
