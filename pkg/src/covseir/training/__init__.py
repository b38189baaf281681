"""End-to-end model training and forecasting.

losses: the fit/feasibility/smoothness/bias objective on the autodiff tape.
model: parameter layout, initial-condition sampling, teacher-forced rollouts.
loop: RMSProp and the two-phase explore/refine protocol, TrainArtifact.
search: seeded random hyperparameter search.
forecast: covariate extension and free-running prediction from an artifact.
"""

from .forecast import (
    ExtendedCovariateSource,
    ForecastResult,
    forecast,
    forecast_to_csv,
)
from .loop import (
    ModelAssembly,
    OptimizerConfig,
    TrainArtifact,
    TrainSettings,
    assemble_model,
    rmsprop_step,
    train,
    validation_fit_score,
)
from .losses import (
    DEFAULT_COMPARTMENT_WEIGHTS,
    LossConfig,
    constraint_loss,
    fit_loss,
    local_bias_reg,
    pinball_loss,
    smoothness_loss,
    total_loss,
)
from .model import (
    FREE_RUNNING,
    IC_COMPARTMENTS,
    ModelSpec,
    RolloutResult,
    TeacherForcingPolicy,
    apply_teacher_forcing,
    build_parameter_store,
    build_slots,
    observables_of,
    predictions_of,
    rates_of,
    rollout_all_locations,
    sample_initial_conditions,
    teacher_forced_rollout,
)
from .search import SearchReport, SearchSpace, TrialResult, hyperparameter_search

__all__ = [
    "DEFAULT_COMPARTMENT_WEIGHTS",
    "LossConfig",
    "pinball_loss",
    "fit_loss",
    "constraint_loss",
    "smoothness_loss",
    "local_bias_reg",
    "total_loss",
    "IC_COMPARTMENTS",
    "TeacherForcingPolicy",
    "FREE_RUNNING",
    "ModelSpec",
    "build_slots",
    "sample_initial_conditions",
    "build_parameter_store",
    "RolloutResult",
    "observables_of",
    "apply_teacher_forcing",
    "teacher_forced_rollout",
    "rollout_all_locations",
    "predictions_of",
    "rates_of",
    "ModelAssembly",
    "OptimizerConfig",
    "TrainSettings",
    "TrainArtifact",
    "assemble_model",
    "rmsprop_step",
    "train",
    "validation_fit_score",
    "SearchSpace",
    "TrialResult",
    "SearchReport",
    "hyperparameter_search",
    "ExtendedCovariateSource",
    "ForecastResult",
    "forecast",
    "forecast_to_csv",
]
