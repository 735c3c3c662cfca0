"""PMU-driven targeted false data injection against DC state estimation."""
from .attack_builder import (
    AttackRegion,
    AttackSpec,
    AttackVector,
    build_attack_vector,
    determine_region,
    predict_residual_shift,
)
from .grid_model import (
    GridCase,
    MeasurementModel,
    build_measurement_jacobian,
    dc_power_flow,
    ieee39,
    load_case,
    neighbors,
)
from .state_estimation import bdd_check, calibrate_threshold, wls_estimate
from .stochastic_sim import (
    LoadDynamicsConfig,
    OUSystem,
    PmuTrace,
    TrajectoryConfig,
    assemble_ou,
    emulate_pmu,
    simulate_ou,
)
from .system_id import (
    estimate_A,
    estimate_time_constant,
    extract_line_params,
    identify,
    lag_correlation,
    matrix_log_principal,
)

__version__ = "0.1.0"
