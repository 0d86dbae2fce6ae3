"""Online least-squares estimation, set-based uncertainty and CBF safety filters.

The package simulates a planar double integrator tracking a figure-eight
through wind it has to identify online, while a quadratic-program safety
filter keeps it out of obstacles using either worst-case (zonotope) or
probabilistic (Gaussian) uncertainty margins around the running estimate.
"""

from .regression import (
    EstimationError,
    EstimatorState,
    FEReport,
    HistoryStack,
    Prior,
    RecordOutcome,
    Sample,
    error_transform,
    initial_state,
    propagate,
    solve_closed_form,
)
from .uncertainty import (
    AffineMap,
    GaussianBelief,
    Zonotope,
    affine_image,
    contains_point,
    contains_zonotope,
    estimator_affine_map,
    estimator_zonotope,
    gaussian_posterior,
    lie_sigma,
    support_inf,
)
from .safety_filter import (
    BarrierEval,
    CbfCriterionReport,
    ConstraintRow,
    FilterConfig,
    FilterResult,
    MatchedReport,
    cbf_criterion_check,
    gracbf_constraint,
    matched_check,
    racbf_constraint,
    solve_filter_qp,
)
from .plant import (
    ObstacleSpec,
    PlantConfig,
    PlantState,
    barrier_eval,
    barrier_gradient,
    barrier_value,
    desired_trajectory,
    dynamics,
    measurement,
    nominal_controller,
    parameter_matrix,
    regressor,
    wind_field,
)
from .scenario import (
    Mode,
    ScenarioConfig,
    default_scenario,
    scenario_from_dict,
    scenario_from_json,
    scenario_to_dict,
    scenario_to_json,
)
from .simulate import Comparison, Metrics, RunLog, SimState, compare, init_sim, run, step

__version__ = "0.1.0"
