"""Safety filtering for planar double-integrator motion under unmodeled
input dynamics, certified by exponentially weighted integral constraints.

The public surface re-exports the main types and operations; the modules
group them by concern: ``lti`` (state-space primitives), ``uncertainty``
(perturbation families, envelope fitting, certificates), ``barrier``
(obstacle barrier and affine constraints), ``robust`` (worst-case
elimination), ``qcqp`` (projection solvers), ``sim`` (closed-loop runs),
``config``/``cli`` (scenario files and the command line).
"""

from .barrier import (
    AffineConstraint,
    BarrierEval,
    BarrierSpec,
    cbf_constraint_rd1,
    ecbf_constraint,
    eval_barrier,
)
from .config import ConfigError, ScenarioConfig, load_config, parse_config_text
from .lti import (
    FrequencyGrid,
    StateSpace,
    first_order_coeffs,
    freq_response,
    is_stable,
    shift,
    step_filter,
    zoh_discretize,
)
from .qcqp import (
    NumericalFailureError,
    OracleResult,
    SolveReport,
    grid_oracle,
    project_halfspace,
    project_quadratic,
)
from .robust import (
    QuadraticConstraint,
    RobustChannel,
    robust_cbf_constraint_rd1,
    robust_ecbf_constraint,
    worst_case_w,
)
from .sim import (
    BaselineGain,
    PlantState,
    ReferenceProfile,
    RunSummary,
    SimulationAborted,
    TrajectoryLog,
    TrajectoryRecord,
    run_closed_loop,
    write_trajectory_csv,
)
from .uncertainty import (
    FitError,
    IqcSpec,
    PerturbationFamily,
    ShiftedUnstableError,
    build_iqc,
    check_iqc_numeric,
    family_envelope,
    fit_first_order_bound,
    shifted_actuator_magnitude,
    shifted_delay_magnitude,
)

__version__ = "0.1.0"

__all__ = [
    "AffineConstraint",
    "BarrierEval",
    "BarrierSpec",
    "BaselineGain",
    "ConfigError",
    "FitError",
    "FrequencyGrid",
    "IqcSpec",
    "NumericalFailureError",
    "OracleResult",
    "PerturbationFamily",
    "PlantState",
    "QuadraticConstraint",
    "ReferenceProfile",
    "RobustChannel",
    "RunSummary",
    "ScenarioConfig",
    "ShiftedUnstableError",
    "SimulationAborted",
    "SolveReport",
    "StateSpace",
    "TrajectoryLog",
    "TrajectoryRecord",
    "build_iqc",
    "cbf_constraint_rd1",
    "check_iqc_numeric",
    "ecbf_constraint",
    "eval_barrier",
    "family_envelope",
    "first_order_coeffs",
    "fit_first_order_bound",
    "freq_response",
    "grid_oracle",
    "is_stable",
    "load_config",
    "parse_config_text",
    "project_halfspace",
    "project_quadratic",
    "robust_cbf_constraint_rd1",
    "robust_ecbf_constraint",
    "run_closed_loop",
    "shift",
    "shifted_actuator_magnitude",
    "shifted_delay_magnitude",
    "step_filter",
    "worst_case_w",
    "write_trajectory_csv",
    "zoh_discretize",
    "__version__",
]
