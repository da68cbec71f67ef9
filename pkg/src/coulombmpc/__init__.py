"""Receding-horizon control of collinear Coulomb spacecraft formations.

The per-sample optimal control problem is nonconvex because accelerations
depend on products of the commanded charges; it is lifted to a semidefinite
relaxation, solved with a first-order operator-splitting conic solver, and
the applied charges are recovered by rank-one rounding of the first lifted
matrix.
"""

from .conic import ConeDims, ConicProblem, sym_to_vec, vec_dim, vec_to_sym
from .controller import ControllerState, MpcController, StepRecord, warm_start_payload
from .dynamics import (
    COULOMB_CONSTANT,
    AbsoluteState,
    DiscreteModel,
    FormationConfig,
    PairIndex,
    RelativeState,
    SingularityError,
    absolute_input_matrix,
    build_discrete_model,
    charge_products,
    continuous_rhs,
    pair_count,
    relative_input_matrix,
    rk4_step,
    spacecraft_pairs,
)
from .horizon import (
    HorizonProblem,
    MpcParams,
    build_horizon_problem,
    evaluate_cost,
    pair_matrix,
    to_conic,
    update_initial_state,
)
from .recovery import RecoveredCharges, recover, saturate
from .simulate import (
    RUN_ABORTED_COLLISION,
    RUN_COMPLETED,
    RunLog,
    ScenarioConfig,
    brute_force_qcqp,
    propagate,
    read_csv,
    replay_cost,
    run_closed_loop,
    write_csv,
)
from .solver import (
    INFEASIBLE_SUSPECT,
    MAX_ITERS,
    OPTIMAL,
    ConicSolver,
    SolveResult,
    SolverSettings,
    project_cone,
    project_psd,
    solve,
)

__version__ = "0.1.0"
