"""Exception types shared across the toolkit."""


class GridModelError(ValueError):
    """Raised when a grid description violates a structural invariant."""


class EquilibriumError(RuntimeError):
    """Raised when no valid operating point can be computed."""


class LmiError(RuntimeError):
    """Raised on malformed matrix-inequality input."""


class CertificateError(RuntimeError):
    """Raised when certificate construction or verification fails."""


class DesignError(RuntimeError):
    """Raised when an emergency design request is malformed."""


class SimulationError(RuntimeError):
    """Raised when a trajectory cannot be produced as requested."""
