"""Federated composite saddle-point optimization simulator."""

from .bregman import (
    GeneralizedDgf,
    Pair,
    Regularizer,
    StepSizeSchedule,
    bregman_div,
    effective_threshold,
    generalized_prox,
    prox_map,
    soft_threshold_clip,
    svt_clip,
    theorem1_stepsize,
)
from .fedsim import (
    PRESETS,
    RunRecord,
    SimConfig,
    grid_search,
    repeat_seeds,
    run_experiment,
    sample_clients,
)
from .linalg import SvdResult, thin_svd
from .optimizers import DivergenceError
from .problems import (
    BilinearL1Problem,
    BilinearNuclearProblem,
    NoiseModel,
    QuadraticL1Problem,
    brute_force_gap,
    duality_gap,
    duality_gap_l1,
    duality_gap_nuclear,
    generate_l1_problem,
    generate_nuclear_problem,
    gradient_operator,
    init_point,
    numerical_rank,
    sparsity,
    stochastic_gradient,
)

__version__ = "0.1.0"
