"""Exception taxonomy shared by all modules."""


class ParlabError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParamsError(ParlabError):
    """Construction parameters are out of range (non-positive lengths, ...)."""


class EmptyIntersectionError(ParlabError):
    """A cylinder restriction produced an empty intersection with the grid."""


class GridFormatError(ParlabError):
    """Base class for binary grid file problems."""


class BadMagicError(GridFormatError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(GridFormatError):
    """File carries an unsupported format version."""


class DimsMismatchError(GridFormatError):
    """Header dimensions disagree with the payload length."""


class HOutOfRangeError(ParlabError):
    """Steklov averaging length outside (0, T - t0)."""


class NoConvergenceError(ParlabError):
    """An iterative minimizer exhausted its iteration budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class WeightPreconditionError(ParlabError):
    """A weight function violates the preconditions of an inequality check."""


class ExponentConstraintError(ParlabError):
    """Interpolation exponents violate their admissibility constraint."""


class EmptyComplementError(ParlabError):
    """A Whitney covering was requested for a set with empty complement."""


class InvalidExponentLadderError(ParlabError):
    """The exponent chain 1 < p - eps0 < q <= p - 2*beta is empty or violated."""


class NewtonDivergenceError(ParlabError):
    """The damped Newton iteration failed to reach the residual tolerance."""

    def __init__(self, message, last_iterate=None, residual_history=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual_history = residual_history or []


class Alpha0AssumptionError(ParlabError):
    """The two-sided intrinsic-level assumption fails for the given cylinder."""

    def __init__(self, message, failed_side=None, detail=None):
        super().__init__(message)
        self.failed_side = failed_side
        self.detail = detail or {}


class CylinderCrossingError(ParlabError):
    """A cylinder does not straddle the initial time slice as required."""


class HypothesisViolatedError(ParlabError):
    """Sampled data violate the hypothesis of an iteration-type lemma."""
