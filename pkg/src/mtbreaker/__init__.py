"""mtbreaker: forge difficult-to-translate test sets against target MT
systems and quantify their difficulty, diversity and transfer."""

from .core import (
    DatasetRecord,
    LanguagePair,
    MethodSpec,
    ModelRef,
    ScoreSet,
    SourceAnalysis,
    Step,
    Trajectory,
    combine_scores,
    select_step,
    trajectory_difficulty,
)
from .engine import PlanItem, RunPlan, RunResult, run_dataset
from .errors import (
    CacheIntegrityError,
    ConfigurationError,
    MTBreakerError,
    ParseError,
    ProviderUnavailableError,
    ValidationError,
)
from .providers import ProviderConfig, ProviderStack, build_stack

__version__ = "0.1.0"

__all__ = [
    "LanguagePair",
    "ModelRef",
    "ScoreSet",
    "Step",
    "Trajectory",
    "MethodSpec",
    "DatasetRecord",
    "SourceAnalysis",
    "combine_scores",
    "trajectory_difficulty",
    "select_step",
    "RunPlan",
    "RunResult",
    "PlanItem",
    "run_dataset",
    "ProviderConfig",
    "ProviderStack",
    "build_stack",
    "MTBreakerError",
    "ConfigurationError",
    "ValidationError",
    "ParseError",
    "ProviderUnavailableError",
    "CacheIntegrityError",
    "__version__",
]
