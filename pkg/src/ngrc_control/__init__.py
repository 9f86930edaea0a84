"""Learn a chaotic map from a handful of samples and steer it to arbitrary
targets with a feedback-linearizing control law over a polynomial readout."""

from .control import (
    ConstantTarget,
    ControllerConfig,
    ControlTrace,
    PeriodicTarget,
    PiecewiseTarget,
    TargetTrajectory,
    control_signal,
    run_closed_loop,
    tracking_error,
)
from .errors import (
    ConfigurationError,
    ControlError,
    DomainError,
    EscapedStateError,
    GenerationError,
    TrainingError,
)
from .harness import (
    DEFAULT_ALPHA_GRID,
    K_SWEEP_GRID,
    K_TRACE_VALUES,
    NOISE_LEVELS,
    RMSE_WINDOW,
    ControlTask,
    DataGenSpec,
    SweepResult,
    child_rng,
    child_seed_seq,
    fit_model,
    generate_dataset,
    grid_search_alpha,
    iterations_to_tolerance,
    rmse,
    run_control_task,
    run_prediction_sweep,
    standard_task,
)
from .ngrc import (
    FeatureConfig,
    NgrcModel,
    TrainingDataset,
    assemble_features,
    build_linear_features,
    build_nonlinear_features,
    feature_matrix,
    feature_names,
    model_from_json,
    model_to_json,
    perturb_weights,
    predict,
    predict_unforced,
    state_features,
    train_ridge,
)
from .plant import (
    DiscretePlant,
    HenonParams,
    HenonPlant,
    NoiseSpec,
    PlantState,
    fixed_points,
    has_escaped,
    henon_step,
    period4_orbit,
)

__version__ = "0.1.0"
