from biofilm_fv.numerics.diagnostics import (
    DiagnosticsRecord,
    discrete_energy,
    discrete_entropy,
    l2_distance,
    linf_bounds,
    restrict,
)
from biofilm_fv.numerics.potential import PotentialParams
from biofilm_fv.numerics.scheme import (
    CoefficientTreatment,
    Grid,
    History,
    Model,
    SchemeConfig,
    State,
    TimeGrid,
)
from biofilm_fv.numerics.solver import (
    BlockTridiagonalMatrix,
    Damping,
    NewtonConfig,
    NewtonReport,
    newton_solve,
    solve_block_tridiagonal,
)

__all__ = [
    "BlockTridiagonalMatrix",
    "CoefficientTreatment",
    "Damping",
    "DiagnosticsRecord",
    "Grid",
    "History",
    "Model",
    "NewtonConfig",
    "NewtonReport",
    "PotentialParams",
    "SchemeConfig",
    "State",
    "TimeGrid",
    "discrete_energy",
    "discrete_entropy",
    "l2_distance",
    "linf_bounds",
    "newton_solve",
    "restrict",
    "solve_block_tridiagonal",
]
