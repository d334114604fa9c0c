"""Strang-splitting simulation and estimation for second-order SDEs.

The package simulates hypoelliptic models of the form dX = V dt,
dV = F(X, V) dt + Sigma dW, and estimates drift and diffusion
parameters from complete (position + velocity) or partial
(position-only) discrete observations via splitting-based
pseudo-likelihoods, with Euler-Maruyama and locally Gaussian baselines,
asymptotic confidence intervals, and a mean-transition-time report for
the Kramers oscillator.
"""

from .asymptotics import (
    C_OBJ,
    AsymptoticInfo,
    InvariantDensity,
    TauEstimate,
    TauInterval,
    c_beta_empirical,
    c_sigma,
    confidence_intervals,
    empirical_asymptotic_info,
    joint_asymptotic_covariance,
    kramers_asymptotic_info,
    kramers_c_beta_quadrature,
    kramers_invariant_density,
    kramers_tau,
    tau_ci_delta,
)
from .errors import (
    DomainError,
    EstimationError,
    HyposplitError,
    IngestionError,
    NumericalError,
    SimulationError,
    StudyError,
)
from .functionals import (
    FunctionalDraws,
    MomentCheck,
    MomentReport,
    check_moments,
    sample_functionals,
)
from .linear_ou import (
    OmegaExpansion,
    OUFlow,
    RescaledLogdet,
    omega_expansion,
    omega_rescaled,
    ou_covariance,
    ou_flow,
    ou_mean,
)
from .models import (
    DriftSplit,
    KramersParams,
    ModelSpec,
    SplitReport,
    kramers_model,
    validate_split,
)
from .objectives import (
    ObjectiveKind,
    ResidualFrames,
    lg_transition,
    objective,
    objective_em_partial,
    residuals,
)
from .observe import (
    DifferenceSeries,
    ObservationSet,
    build_observations,
    finite_difference,
)
from .optimize import (
    EstimationOptions,
    EstimationResult,
    ProfileCurve,
    estimate,
    profile_objective,
)
from .pipeline import (
    CrossingReport,
    IngestSpec,
    StudyConfig,
    StudyTable,
    crossing_analysis,
    ingest_series,
    run_simulation_study,
)
from .simulate import (
    Trajectory,
    load_trajectory,
    save_trajectory,
    simulate_em,
    simulate_strang,
    subsample,
)

__version__ = "0.1.0"

__all__ = [
    "AsymptoticInfo",
    "C_OBJ",
    "CrossingReport",
    "DifferenceSeries",
    "DomainError",
    "DriftSplit",
    "EstimationError",
    "EstimationOptions",
    "EstimationResult",
    "FunctionalDraws",
    "HyposplitError",
    "IngestSpec",
    "IngestionError",
    "InvariantDensity",
    "KramersParams",
    "ModelSpec",
    "MomentCheck",
    "MomentReport",
    "NumericalError",
    "ObjectiveKind",
    "ObservationSet",
    "OmegaExpansion",
    "OUFlow",
    "ProfileCurve",
    "ResidualFrames",
    "RescaledLogdet",
    "SimulationError",
    "SplitReport",
    "StudyConfig",
    "StudyError",
    "StudyTable",
    "TauEstimate",
    "TauInterval",
    "Trajectory",
    "build_observations",
    "c_beta_empirical",
    "c_sigma",
    "check_moments",
    "confidence_intervals",
    "crossing_analysis",
    "empirical_asymptotic_info",
    "estimate",
    "finite_difference",
    "ingest_series",
    "joint_asymptotic_covariance",
    "kramers_asymptotic_info",
    "kramers_c_beta_quadrature",
    "kramers_invariant_density",
    "kramers_model",
    "kramers_tau",
    "lg_transition",
    "load_trajectory",
    "objective",
    "objective_em_partial",
    "omega_expansion",
    "omega_rescaled",
    "ou_covariance",
    "ou_flow",
    "ou_mean",
    "profile_objective",
    "residuals",
    "run_simulation_study",
    "sample_functionals",
    "save_trajectory",
    "simulate_em",
    "simulate_strang",
    "subsample",
    "tau_ci_delta",
    "validate_split",
    "__version__",
]
