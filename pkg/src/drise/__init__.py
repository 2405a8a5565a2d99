"""Distributionally robust input and state estimation for linear time-varying
systems, with KF/ISE/DRE baselines and a kinematic-bicycle benchmark."""

from .errors import (
    DomainError,
    DriseError,
    InvalidParams,
    LengthMismatch,
    NotPsd,
    NotSymmetric,
    RankDeficient,
    SingularMatrix,
)
from .matfound import is_psd, spd_inv, spd_solve, sym_pinv_sqrt, sym_sqrt, symmetrize
from .model import (
    Belief,
    FixedTransition,
    GainBundle,
    LtvModel,
    RobustParams,
    StepOutput,
    Transition,
    check_rank_condition,
    validate_params,
)
from .estimators import (
    dre_step,
    drise_measurement_update,
    drise_step,
    estimate_unknown_input,
    i_min,
    ise_step,
    kf_step,
    predict,
    psi_clamp,
    std_normal_cdf,
    time_update,
)
from .vehicle import (
    ContaminationSpec,
    ControlPolicy,
    Scenario,
    TrajectoryRecord,
    VehicleGeometry,
    VehicleState,
    bicycle_step,
    linearize,
    sample_measurement_noise,
    simulate,
    simulate_closed_loop,
    slip_angle,
    unknown_input_signal,
)
from .bench import BenchConfig, BenchReport, RunReport, emit_csv, emit_json, load_config, rmse, run_benchmark

__version__ = "0.1.0"
