"""Exception hierarchy shared across the package."""


class SoftlimitError(Exception):
    """Base class for all package-specific errors."""


class NotSquare(SoftlimitError):
    """Matrix operation requires a square matrix."""


class NotHermitian(SoftlimitError):
    """Symmetrization defect exceeds the allowed tolerance."""


class NotSelfAdjoint(SoftlimitError):
    """Net entries are required to be self-adjoint."""


class ShapeMismatch(SoftlimitError):
    """Operand shapes or block structures are incompatible."""


class DimensionMismatch(SoftlimitError):
    """Source/target algebras of maps do not line up."""


class NotInSpan(SoftlimitError):
    """Element lies outside the spanned subspace (up to tolerance)."""


class InconsistentAction(SoftlimitError):
    """Action on a spanning set is not well defined on linear dependencies."""


class FlagViolation(SoftlimitError):
    """A map fails its required cp/ucp/cpc verification."""


class MaxIterations(SoftlimitError):
    """Iterative solver hit its iteration cap without converging."""


class NumericalFailure(SoftlimitError):
    """Ill-conditioned or otherwise failed numerical subproblem."""


class SolverFailure(SoftlimitError):
    """Semidefinite solve did not reach an optimal certificate."""


class HorizonTooShort(SoftlimitError):
    """Measured decay has not reached the requested target within the horizon."""


class NotStrict(SoftlimitError):
    """Operation requires an exactly transitive system."""


class BadGrid(SoftlimitError):
    """Interval discretization grids are invalid."""


class ParseError(SoftlimitError):
    """JSON bundle is malformed or violates an encoding invariant."""


class ConfigInvalid(SoftlimitError):
    """Experiment configuration failed schema validation."""
