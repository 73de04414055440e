"""Data-driven representation and simulation of continuous-time LTI systems
from sampled input-output trajectories."""

from .errors import (
    InconsistentInitialConditionsError,
    InsufficientDataError,
    JetsimError,
    OutOfDomainError,
    RankDeficiencyError,
    StageFailureError,
)
from .signals import (
    JetTrajectory,
    TimeGrid,
    Trajectory,
    build_jet,
    differentiate,
    truncate_jet,
)
from .datamatrix import (
    DataMatrixView,
    ShiftSpec,
    apply_alpha,
    hankel_eval,
    stacked_eval,
    suggest_num_shifts,
)
from .informativity import (
    FullRowRankReport,
    InformativityReport,
    check_full_row_rank,
    check_informativity,
    numerical_rank,
)
from .representation import (
    AlphaTrajectory,
    ConditionReport,
    check_conditions,
    check_latent_conditions,
    check_state_conditions,
    generate_jet,
    solve_state_alpha,
)
from .simulator import (
    SimulationProblem,
    SimulationResult,
    integrate_explicit,
    integrate_implicit_lsq,
    simulate,
    solve_initial_alpha,
)
from .oracle import (
    AnalyticInput,
    ImageFormModel,
    StateSpaceModel,
    generate_latent,
    kernel_residual,
    make_image_form,
    make_random_system,
    random_multisine,
    simulate_exact,
)

__version__ = "0.1.0"
