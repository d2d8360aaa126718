"""Time- and location-aware mobile data pricing.

Stage II: every user type schedules its traffic against announced prices
(closed forms for logarithmic and linear utilities, a bisection-based solver
for general concave ones).  Stage I: the operator picks discount prices to
minimize excess-provisioning cost minus revenue, via three backends — a
smoothing + spectral-projected-gradient method (logarithmic utilities), a
complementarity-penalty block-coordinate-descent method (linear utilities),
and a surrogate-assisted derivative-free search (any utilities).
"""

from .bcd import PenaltyState, bcd_solve, default_tau0, penalty_escalate
from .dycors import DycorsConfig, RbfSurrogate, dycors_solve, rbf_fit
from .errors import (
    DimensionGuard,
    DomainError,
    InvalidOrigin,
    LpStall,
    MissingSchedule,
    NoSignChange,
    NonConcaveUtility,
    NonLinearUtility,
    SolverError,
    TlPricingError,
    ToleranceNotMet,
)
from .gridsearch import oracle_grid
from .io import load_scenario, read_report, save_scenario, write_report
from .kernels import BACKEND as KERNEL_BACKEND
from .lp import LpProblem, LpSolution, solve_lp
from .model import (
    GeneralConcave,
    Linear,
    Logarithmic,
    PriceSpace,
    Scenario,
    SchedulingWindow,
    UserType,
    Violation,
    check_prices,
    normalize_scenario,
    validate_scenario,
    window,
)
from .objective import (
    AggregateLoad,
    Metrics,
    SolveReport,
    aggregate_load,
    best_response_schedules,
    cost_components,
    excess_cost,
    make_report,
    metrics,
    operator_cost,
    operator_cost_batch,
)
from .scheduler import (
    Schedule,
    TIE_LEXICOGRAPHIC,
    TIE_SPLIT_UNIFORM,
    kkt_residuals,
    schedule_general,
    schedule_linear,
    schedule_log,
    solve_multiplier,
    user_payoff,
)
from .spg import (
    SmoothedEval,
    SpgConfig,
    smooth_max,
    smoothed_cost,
    smoothed_cost_gradient,
    spg_solve,
)

__version__ = "0.1.0"
