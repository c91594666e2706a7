"""sandlab: a material-point laboratory for sand elasto-plasticity.

Principal-space critical-state constitutive model, strain-driven implicit
integration, synthetic dataset generation, and neural network surrogates
(pure numpy) with physics-informed variants.
"""

__version__ = "0.1.0"

from .datagen import (
    CSV_HEADER,
    Dataset,
    GenConfig,
    dataset_stats,
    generate_dataset,
    generate_path,
    load_dataset,
    load_metadata,
    save_dataset,
)
from .invariants import (
    StrainInvariants,
    StressInvariants,
    strain_invariants,
    stress_invariants,
    void_ratio_increment,
)
from .models import (
    MODEL_KINDS,
    Model,
    ModelOutput,
    assemble,
    attach_scalers,
    default_specs,
    model_cost,
    model_forward,
    model_gradient_check,
    model_grads,
)
from .nn import (
    AdamState,
    MLPParams,
    MLPSpec,
    Scaler,
    adam_init,
    adam_step,
    apply_scaler,
    backward,
    fit_scaler,
    forward,
    gradient_check,
    init_mlp,
    invert_scaler,
    loss,
    loss_grad,
)
from .simulate import (
    ComparisonReport,
    Driver,
    RecallError,
    Trajectory,
    axisym_eps_for_magnitude,
    compare,
    ground_truth,
    recall_step,
    simulate,
    training_mean_step,
    write_trajectory_csv,
)
from .training import (
    Checkpoint,
    TrainConfig,
    evaluate,
    frobenius_error,
    learning_curve,
    load_checkpoint,
    normalize_splits,
    save_checkpoint,
    scaler_digest,
    split,
    train,
    write_curve_csv,
)
from .wg import (
    DEFAULT_TOL,
    IntegrationError,
    IntegratorTolerances,
    MaterialState,
    StepResult,
    StressStateError,
    WGParams,
    critical_void_ratio,
    dilatancy_coefficient,
    drained_triaxial_compression,
    elastic_moduli,
    friction_coefficient,
    integrate_path_explicit_oracle,
    integrate_step,
    mobilized_friction,
    plastic_flow_direction,
    yield_value,
)

__all__ = [
    "__version__",
    "CSV_HEADER",
    "Dataset",
    "GenConfig",
    "dataset_stats",
    "generate_dataset",
    "generate_path",
    "load_dataset",
    "load_metadata",
    "save_dataset",
    "StrainInvariants",
    "StressInvariants",
    "strain_invariants",
    "stress_invariants",
    "void_ratio_increment",
    "MODEL_KINDS",
    "Model",
    "ModelOutput",
    "assemble",
    "attach_scalers",
    "default_specs",
    "model_cost",
    "model_forward",
    "model_gradient_check",
    "model_grads",
    "AdamState",
    "MLPParams",
    "MLPSpec",
    "Scaler",
    "adam_init",
    "adam_step",
    "apply_scaler",
    "backward",
    "fit_scaler",
    "forward",
    "gradient_check",
    "init_mlp",
    "invert_scaler",
    "loss",
    "loss_grad",
    "ComparisonReport",
    "Driver",
    "RecallError",
    "Trajectory",
    "axisym_eps_for_magnitude",
    "compare",
    "ground_truth",
    "recall_step",
    "simulate",
    "training_mean_step",
    "write_trajectory_csv",
    "Checkpoint",
    "TrainConfig",
    "evaluate",
    "frobenius_error",
    "learning_curve",
    "load_checkpoint",
    "normalize_splits",
    "save_checkpoint",
    "scaler_digest",
    "split",
    "train",
    "write_curve_csv",
    "DEFAULT_TOL",
    "IntegrationError",
    "IntegratorTolerances",
    "MaterialState",
    "StepResult",
    "StressStateError",
    "WGParams",
    "critical_void_ratio",
    "dilatancy_coefficient",
    "drained_triaxial_compression",
    "elastic_moduli",
    "friction_coefficient",
    "integrate_path_explicit_oracle",
    "integrate_step",
    "mobilized_friction",
    "plastic_flow_direction",
    "yield_value",
]
