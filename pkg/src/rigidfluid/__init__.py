"""Simulator for a rigid body of general form moving in an incompressible perfect fluid.

The moving-boundary problem is pulled back to a fixed exterior domain through
a divergence-free flow-map diffeomorphism that is rigid near the body and the
identity far away.  The package provides the rigid-body kinematics, the flow
map with its metric/Christoffel bundle, the weighted-space projector, the
nonlocal-Neumann pressure solver, the coupled time stepper, and a CLI.
"""

from .rigid import (
    RigidBodyState,
    CutoffProfile,
    RigidTrajectory,
    advance_rotation,
    body_to_world,
    rigid_velocity,
    stream_moment,
    cutoff_value,
    extension_field,
    extension_jacobian,
    skew,
    unskew,
)

__all__ = [
    "RigidBodyState",
    "CutoffProfile",
    "RigidTrajectory",
    "advance_rotation",
    "body_to_world",
    "rigid_velocity",
    "stream_moment",
    "cutoff_value",
    "extension_field",
    "extension_jacobian",
    "skew",
    "unskew",
]
