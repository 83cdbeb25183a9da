"""Rapid-prototyping toolkit for successive-linearization MPC.

Workflow: describe a nonlinear plant, linearize it along the closed-loop
trajectory, Euler-discretize, augment to the input-increment form, assemble
condensed or sparse QPs and solve them with the construction-free CDAL
method or a warm-started active-set method, then evaluate the schemes in
closed loop against a multi-PID baseline.
"""

from .model import (
    AugmentedModel,
    CtLinearModel,
    DtLinearModel,
    FeedthroughError,
    LinearizationError,
    OperatingPoint,
    PlantDivergenceError,
    PlantModel,
    ReductionError,
    SimResult,
    augment_delta,
    discretize_euler,
    integrate_plant,
    linearize,
    reduce_minimal_subset,
)
from .mpc import (
    AssemblyError,
    CondensedQp,
    MpcConfig,
    PredictionMatrices,
    SolverError,
    SparseQp,
    build_condensed_qp,
    build_prediction_matrices,
    build_sparse_qp,
    extract_first_move,
    rollout,
    stack_sparse_solution,
)
from .solvers import (
    ActiveSetWorkspace,
    CdalWorkspace,
    QpSolution,
    set_alloc_hook,
    solve_condensed_activeset,
    solve_oracle_bruteforce,
    solve_sparse_cdal,
)

__version__ = "0.1.0"
