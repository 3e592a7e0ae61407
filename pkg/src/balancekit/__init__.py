"""balancekit: simulation, PID gain tuning, and benchmarking for an
inverted-pendulum-on-a-cart balance system."""

__version__ = "0.1.0"

from .plant import (
    DegenerateConfigurationError,
    DivergenceError,
    LinearModel,
    PlantParams,
    SimConfig,
    StateVector,
    linear_derivative,
    linearize,
    nonlinear_derivative,
    paper_model,
    step_rk4,
)
from .control import (
    LqrGain,
    LqrWeights,
    PidGains,
    PidState,
    RiccatiSolverError,
    SimTrace,
    SquareWaveReference,
    StepReference,
    closed_loop_sim,
    lqr_feedback,
    pid_update,
    solve_care,
)
from .metrics import (
    ObjectiveSpec,
    PENALTY_COST,
    StepMetrics,
    evaluate_objective,
    quadratic_integrals,
    step_metrics,
)
from .nlta import NltaConfig, NltaRunRecord, accept, propose_neighbor, threshold
from .policy_nn import (
    GridSpec,
    PolicyNet,
    QTable,
    build_qtable,
    extract_policy,
    load_policy_net,
    nn_feedback,
    one_step_cost,
    save_policy_net,
    train_policy_net,
)

__all__ = [name for name in dir() if not name.startswith("_")]
