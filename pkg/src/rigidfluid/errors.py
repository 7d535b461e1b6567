"""Exception types shared across the package."""


class RigidFluidError(Exception):
    """Base class for all package errors."""


class ValidationError(RigidFluidError):
    """Configuration or input failed a declared invariant."""


class InvalidStateError(RigidFluidError):
    """Non-finite or otherwise corrupt numerical state."""


class DiffeomorphismError(RigidFluidError):
    """Flow-map Jacobian determinant drifted too far from 1."""


class MetricError(RigidFluidError):
    """Pulled-back metric lost positive definiteness."""


class ProjectionError(RigidFluidError):
    """Divergence-free/rigid-compatible projection failed to converge."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class SolverError(RigidFluidError):
    """Linear solver did not reach the requested tolerance."""

    def __init__(self, msg, residual_history=None):
        super().__init__(msg)
        self.residual_history = residual_history or []


class CFLError(RigidFluidError):
    """Requested time step violates the advective CFL bound."""


class StepError(RigidFluidError):
    """Within-step fixed-point iteration did not converge."""
