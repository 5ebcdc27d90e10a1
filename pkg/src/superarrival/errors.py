"""Exception types raised across the package."""


class SuperarrivalError(Exception):
    """Base class for all package errors."""


class IntegrationFailure(SuperarrivalError):
    pass


class NoDeviation(SuperarrivalError):
    """Perturbed and free curves never differ by more than the threshold."""


class NoCrossing(SuperarrivalError):
    """Perturbed curve never drops back to the free curve inside the span."""


class DegenerateWindow(SuperarrivalError):
    pass


class SupportOverflow(SuperarrivalError):
    """Initial packet does not fit on the grid."""


class EdgeLeak(SuperarrivalError):
    """Probability density reached the hard-wall boundaries of the grid."""

    def __init__(self, message, t=None, edge_density=None):
        super().__init__(message)
        self.t = t
        self.edge_density = edge_density


class NoConvergence(SuperarrivalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class Caustic(SuperarrivalError):
    pass


class QuadratureNonConvergence(SuperarrivalError):
    def __init__(self, message, error_estimate=None):
        super().__init__(message)
        self.error_estimate = error_estimate


class AmbiguousDecode(SuperarrivalError):
    pass


class OrderingViolation(SuperarrivalError):
    """Detected deviation precedes the start of the barrier perturbation."""
