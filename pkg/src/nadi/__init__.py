"""nadi: dynamic-inversion control for non-affine systems.

The control update law integrates toward the root of the implicit control
equation v(x, u) = z instead of solving it at every step, which makes exact
output linearization usable on plants where the control enters nonlinearly.
Ships with a scalar validation plant and a 3-DOF point-mass aircraft for
outer-loop trajectory control.
"""

from .aircraft import (
    ActuatorBank,
    AeroModel,
    AircraftControls,
    AircraftState,
    ErrorInjection,
    actuator_step,
    forces,
    jac_v_controls,
    jac_v_states,
    make_aircraft_model,
    state_derivative,
    trim_level_flight,
    v_aircraft,
)
from .controller import (
    ControllerState,
    GainSet,
    ReferenceStack,
    build_error_dynamics,
    closed_loop_matrix,
    control_derivative,
    gain_bound_at,
    min_gain_bound,
    pole_gains,
    prescribed_z,
    residual,
    step,
    zdot,
)
from .errors import (
    ConfigurationError,
    DivergenceError,
    EvaluationError,
    InvalidInputError,
    NadiError,
    OracleFailureError,
    RankError,
    ShapeError,
    SingularityError,
    StabilityError,
    TrimError,
)
from .numerics import (
    eig_extrema_sym,
    finite_diff_jacobian,
    pseudo_inverse,
    rk4_step,
    solve_lyapunov,
)
from .plant import (
    PlantInstance,
    SystemModel,
    error_coordinates,
    eval_v,
    get_plant,
    jacobians,
    list_plants,
    make_benchmark_model,
    register_plant,
)
from .sim import (
    OutputReference,
    ReferenceSpec,
    RunSummary,
    ScenarioConfig,
    TraceRecord,
    config_from_dict,
    load_config,
    newton_oracle,
    oracle_deviation,
    read_trace,
    reference_signal,
    run_scenario,
    write_trace,
)

__version__ = "0.1.0"
