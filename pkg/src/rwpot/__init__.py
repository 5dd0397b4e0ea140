"""Random walk in random potential: travel costs, Lyapunov exponents,
rate functions and strict-comparison experiments on Z^d."""

__version__ = "0.1.0"

from .errors import (ConfigError, CouplingViolation, CoverageError, DomainError,  # noqa: E402
                     ModelAssumptionError, NumericError, PreconditionError, ResourceError,
                     RwpotError)
from .distributions import (Atomic, DistributionSpec, Exponential, PointMass, Shifted,  # noqa: E402
                            Uniform, laplace_transform, pseudo_inverse, shift_by,
                            strictly_dominates)
from .fields import Box, realize, sample_uniform_field  # noqa: E402

__all__ = [
    "__version__", "RwpotError", "ConfigError", "CouplingViolation", "CoverageError", "DomainError",
    "ModelAssumptionError", "NumericError", "PreconditionError", "ResourceError",
    "DistributionSpec", "PointMass", "Atomic", "Exponential", "Uniform", "Shifted",
    "laplace_transform", "pseudo_inverse", "shift_by", "strictly_dominates",
    "Box", "realize", "sample_uniform_field",
]
