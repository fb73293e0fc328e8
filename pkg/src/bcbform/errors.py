"""Exception hierarchy shared across the package."""


class BcbformError(Exception):
    """Base class for all package errors."""


class DimensionError(BcbformError):
    """Input has the wrong shape or an inconsistent length."""


class DegenerateFormationError(BcbformError):
    """Desired coordinates do not span a rank-4 kernel basis."""


class TooFewAgentsError(BcbformError):
    """A formation needs at least three agents."""


class ConfigurationError(BcbformError):
    """Missing or inconsistent controller/scenario configuration."""


class GuaranteeViolationError(BcbformError):
    """Parameters fall outside the range covered by the convergence guarantees."""


class InfeasibleTopologyError(BcbformError):
    """No stabilizing gain matrix exists for this graph/formation pair."""


class JointInfeasibilityError(InfeasibleTopologyError):
    """Joint gain design infeasible although each topology is individually feasible."""

    def __init__(self, message, tie_groups=None):
        super().__init__(message)
        self.tie_groups = tie_groups or []


class SolverFailureError(BcbformError):
    """Solver stopped without meeting its residual tolerances."""

    def __init__(self, message, primal_residual=None, dual_residual=None):
        super().__init__(message)
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual
