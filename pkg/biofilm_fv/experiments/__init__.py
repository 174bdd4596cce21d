from biofilm_fv.experiments.cases import SimulationCase, UnknownCaseError, get_case
from biofilm_fv.experiments.convergence import (
    ConvergenceResult,
    ModelComparison,
    observed_orders,
)
from biofilm_fv.experiments.runner import (
    ExperimentRunner,
    RunJob,
    StepFailedError,
    Trajectory,
    run_simulation,
)

__all__ = [
    "ConvergenceResult",
    "ExperimentRunner",
    "ModelComparison",
    "RunJob",
    "SimulationCase",
    "StepFailedError",
    "Trajectory",
    "UnknownCaseError",
    "get_case",
    "observed_orders",
    "run_simulation",
]
