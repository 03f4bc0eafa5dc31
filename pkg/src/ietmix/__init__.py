"""Suspension flows over interval exchanges with asymmetric logarithmic singularities."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConstructionError,
    ExceptionalPointError,
    IetMixError,
    InvalidIetError,
    OutOfDomainError,
    PreconditionError,
    RauzyConnectionError,
    ResourceCapError,
    SingularityHitError,
)
from .iet import Iet, Observable, Permutation, birkhoff_sum, golden_iet, new_iet, rotation  # noqa: E402
from .rauzy import RvTrajectory, dc_diagnostics, iterate, iterate_until, tower_partition  # noqa: E402
from .roof import LogRoof, check_asymmetric  # noqa: E402
from .suspension import Suspension, SuspensionPoint  # noqa: E402

__all__ = [
    "ConstructionError",
    "ExceptionalPointError",
    "IetMixError",
    "InvalidIetError",
    "OutOfDomainError",
    "PreconditionError",
    "RauzyConnectionError",
    "ResourceCapError",
    "SingularityHitError",
    "Iet",
    "Observable",
    "Permutation",
    "birkhoff_sum",
    "golden_iet",
    "new_iet",
    "rotation",
    "RvTrajectory",
    "dc_diagnostics",
    "iterate",
    "iterate_until",
    "tower_partition",
    "LogRoof",
    "check_asymmetric",
    "Suspension",
    "SuspensionPoint",
]
