"""Online piecewise-linear regression with trained soft partitions.

Three streaming predictors share one second-order update rule: straight
partitioning (global separators, sign-pattern regions), finest-model
partitioning (a depth-d soft tree), and the all-subtree ensemble that
combines every pruning of the tree. A compiled kernel backend is used when
available; `backend_name` reports which one is active.
"""
from .backend import backend_name
from .core import (OnsState, augment, epsilon_from_diameter, gate, gate_grad,
                   ons_step, sherman_morrison_update)
from .ensemble import EnsembleModel, count_prunings, enumerate_prunings
from .harness import (ExperimentConfig, RegretOracleConfig, RunMetrics,
                      hindsight_oracle, regret_check, run_regret, run_stream,
                      timing_profile)
from .straight import SpModel, sp_max_regions
from .synth import GeneratorSpec, generate, iter_samples
from .tree import FmpModel

__version__ = "0.1.0"

__all__ = [
    "EnsembleModel",
    "ExperimentConfig",
    "FmpModel",
    "GeneratorSpec",
    "OnsState",
    "RegretOracleConfig",
    "RunMetrics",
    "SpModel",
    "augment",
    "backend_name",
    "count_prunings",
    "enumerate_prunings",
    "epsilon_from_diameter",
    "gate",
    "gate_grad",
    "generate",
    "hindsight_oracle",
    "iter_samples",
    "ons_step",
    "regret_check",
    "run_regret",
    "run_stream",
    "sherman_morrison_update",
    "sp_max_regions",
    "timing_profile",
    "__version__",
]
