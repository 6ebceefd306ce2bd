"""
ladder_control — finite-time Lyapunov stabilisation of ladder n-level quantum systems.
"""
from .analysis import (
    ConvergenceReport, bound_simulation_form, bound_theorem_form, detect_convergence,
    finite_time_inequality_check, lemma1_check, lemma1_sweep, lemma1_upper,
    singular_escape_check,
)
from .controllers import (
    ControlVector, ControllerKind, ControllerParams, control, lyapunov_rate_general,
    lyapunov_rate_ladder,
)
from .errors import (
    ConfigError, IntegrationError, InvalidLevelError, LadderControlError,
    NonDegeneracyError, SingularStateError,
)
from .experiment import (
    ExperimentConfig, compare_controllers, load_config, parse_config,
    read_trajectory_csv, run_experiment, write_trajectory_csv,
)
from .propagation import (
    IntegratorConfig, Trajectory, rhs, rhs_polar, simulate, simulate_polar, step,
)
from .states import (
    ComplexState, PolarState, TargetState, from_polar, lyapunov_value, relative_phase,
    to_polar,
)
from .system import LadderSystem, build_ladder, hermiticity_check

__version__ = "1.0.0"
