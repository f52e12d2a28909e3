"""KdV-Burgers solvers, weighted null control and numerical checks."""

from ._kdvb import (
    ConfigError,
    InvalidArgument,
    NoConvergence,
    SolverError,
    carleman,
    duality_residuals,
    null_control,
    operators,
    profile,
    resolve_config,
    s_from_target_exponent,
    schema_version,
    simulate,
    track,
)

__all__ = [
    "ConfigError",
    "InvalidArgument",
    "NoConvergence",
    "SolverError",
    "carleman",
    "duality_residuals",
    "null_control",
    "operators",
    "profile",
    "resolve_config",
    "s_from_target_exponent",
    "schema_version",
    "simulate",
    "track",
]
