"""Simulation, construction and numerical verification of time-varying
ISS-Lyapunov functions for impulsive dynamical systems."""

__version__ = "0.1.0"

from .comparison import (
    ComparisonFunction,
    KLFunction,
    compose,
    identity,
    inverse,
    inverse_fn,
    linear,
    pointwise_max,
    power,
    verify_class,
)
from .construct import (
    ConstructionResult,
    DwellParams,
    DwellReport,
    check_dwell_sfuj,
    check_dwell_ufsj,
    construct_sfuj,
    construct_ufsj,
    default_kappa,
    build_phi,
)
from .lyapunov import (
    CandidateLyapunov,
    TimeVaryingLyapunov,
    VerificationReport,
    check_iss_estimate,
    dini_derivative,
    verify_definition2,
    verify_definition3,
)
from .scenarios import (
    Scenario,
    load_scenario,
    scenario_heat,
    scenario_rotation2d,
    scenario_scalar_sfuj,
    scenario_scalar_ufsj,
)
from .system import (
    GridMeta,
    ImpulseSequence,
    ImpulsiveSystem,
    InputSignal,
    Trajectory,
    l2_norm,
    left_limit,
    semidiscretize_heat,
    simulate,
)
from .transform import (
    IssGains,
    MonotoneTransform,
    build_beta_tilde,
    build_iss_gains,
    build_transform,
    transform_inverse,
)
