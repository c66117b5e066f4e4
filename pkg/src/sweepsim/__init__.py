"""sweepsim: event-driven Monte Carlo for selective sweeps in structured
populations — forward models, conditioned diffusions, the labeled
ancestral particle system with its moment duality, the marked
birth-death proxy for the fixation time, and the two limit epidemics.
"""

__version__ = "0.1.0"

from .core import (
    MigrationStructure,
    RegimeSpec,
    RngStream,
    SweepParams,
    build_migration,
    migration_from_json,
    resolve_regime,
)
from .errors import (
    AbsorbedState,
    BadDimension,
    BudgetExceeded,
    ConfigError,
    DomainError,
    EmptyConfiguration,
    NotIrreducible,
    StepSizeTooLarge,
    SweepSimError,
    TruncationError,
    Unreachable,
)

__all__ = [
    "__version__",
    "MigrationStructure",
    "RegimeSpec",
    "RngStream",
    "SweepParams",
    "build_migration",
    "migration_from_json",
    "resolve_regime",
    "AbsorbedState",
    "BadDimension",
    "BudgetExceeded",
    "ConfigError",
    "DomainError",
    "EmptyConfiguration",
    "NotIrreducible",
    "StepSizeTooLarge",
    "SweepSimError",
    "TruncationError",
    "Unreachable",
]
