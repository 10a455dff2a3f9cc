"""Sequential resource allocation under a unit budget with unknown
per-job difficulty cut-offs: environment model, optimistic allocation with
weighted reciprocal confidence intervals, halving initialisation, and a
Monte-Carlo experiment harness."""

from .allocator import (
    PolicyOptions,
    RunTrace,
    allocate,
    default_delta,
    run_episode,
    regret_upper_bound,
)
from .estimator import (
    EstimatorState,
    WeightOverflowError,
    confidence_radius_f,
    weight,
    width,
)
from .harness import (
    ArmSpec,
    ExperimentConfig,
    ExperimentResult,
    MinimaxStressResult,
    bootstrap_ci,
    emit_csv,
    minimax_family,
    minimax_stress,
    run_experiment,
)
from .initialization import (
    InitRecord,
    halving_init,
    init_budget,
    run_modified,
    sample_eta,
)
from .model import (
    Allocation,
    Observation,
    OptimalProfile,
    ProblemInstance,
    beta,
    brute_force_optimal,
    instantaneous_regret,
    optimal_profile,
    sample_step,
    split_rng,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "ArmSpec",
    "EstimatorState",
    "ExperimentConfig",
    "ExperimentResult",
    "InitRecord",
    "MinimaxStressResult",
    "Observation",
    "OptimalProfile",
    "PolicyOptions",
    "ProblemInstance",
    "RunTrace",
    "WeightOverflowError",
    "allocate",
    "beta",
    "bootstrap_ci",
    "brute_force_optimal",
    "confidence_radius_f",
    "default_delta",
    "emit_csv",
    "halving_init",
    "init_budget",
    "instantaneous_regret",
    "minimax_family",
    "minimax_stress",
    "optimal_profile",
    "run_episode",
    "run_experiment",
    "run_modified",
    "sample_eta",
    "sample_step",
    "split_rng",
    "regret_upper_bound",
    "weight",
    "width",
]
