# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""PoseFlow

Skeleton-conditioned generation of 2D capsule characters: a set-latent
shape autoencoder, a multi-condition flow transformer trained with
rectified flow, classifier-free guidance over pose and image conditions,
and point-set evaluation metrics.
"""

from poseflow._version import __version__

# Import CLI
from poseflow.cli import build_parser, main

# Import condition encoders
from poseflow.condenc import ConditionEncoder, ConditionKind, patchify, select_condition

# Import contour extraction
from poseflow.contour import is_closed, marching_squares, polyline_area

# Import errors
from poseflow.errors import (
    CheckpointError,
    ConfigError,
    DatasetError,
    DegenerateBoneError,
    DuplicatePairError,
    NonFiniteError,
    SamplingError,
    ShapeMismatchError,
)

# Import flow model
from poseflow.flowdit import (
    FlowDiT,
    PoseFlowModel,
    flow_matching_loss,
    interpolate,
    load_flow,
    save_flow,
    train_flow,
    velocity_target,
)

# Import guidance and sampling
from poseflow.guidance import (
    GuidanceWeights,
    Strategy,
    extract_shape,
    guided_velocity,
    integrate,
    parse_guidance,
    sample_latents,
)

# Import metrics
from poseflow.metrics import (
    MetricReport,
    aggregate,
    chamfer,
    evaluate_point_sets,
    f1_score,
    fidelity,
    resample_polylines,
)

# Import autodiff kernel
from poseflow.nncore import RngState, Tensor, check_gradients, no_grad, precision

# Import settings
from poseflow.settings import (
    ExperimentConfig,
    dump_config,
    load_config,
    paper_scale_config,
    parse_config,
)

# Import shape autoencoder
from poseflow.shapevae import LatentNormalization, ShapeVAE, load_vae, train_vae

# Import synthetic data
from poseflow.synthdata import (
    Dataset,
    Pose,
    Skeleton,
    SkeletonTopology,
    TrainingPair,
    build_dataset,
    load_dataset,
)

# Import tools
from poseflow.tools import (
    logic_ablate_cfg,
    logic_ablate_pose_repr,
    logic_apose_sweep,
    logic_eval,
    logic_gen_data,
    logic_info,
    logic_plot,
    logic_sample,
    logic_train_flow,
    logic_train_vae,
)

# Import types (public aliases)
from poseflow.types import (
    AblationResult,
    Aggregate,
    AngleRow,
    AposeSweepResult,
    ErrorResult,
    EvalResult,
    GenDataResult,
    InfoResult,
    PairReport,
    PlotResult,
    SampleEntry,
    SampleResult,
    TrainResult,
)

__all__ = [
    # Version
    "__version__",
    # CLI
    "build_parser",
    "main",
    # Condition encoders
    "ConditionEncoder",
    "ConditionKind",
    "patchify",
    "select_condition",
    # Contours
    "is_closed",
    "marching_squares",
    "polyline_area",
    # Errors
    "CheckpointError",
    "ConfigError",
    "DatasetError",
    "DegenerateBoneError",
    "DuplicatePairError",
    "NonFiniteError",
    "SamplingError",
    "ShapeMismatchError",
    # Flow model
    "FlowDiT",
    "PoseFlowModel",
    "flow_matching_loss",
    "interpolate",
    "load_flow",
    "save_flow",
    "train_flow",
    "velocity_target",
    # Guidance
    "GuidanceWeights",
    "Strategy",
    "extract_shape",
    "guided_velocity",
    "integrate",
    "parse_guidance",
    "sample_latents",
    # Metrics
    "MetricReport",
    "aggregate",
    "chamfer",
    "evaluate_point_sets",
    "f1_score",
    "fidelity",
    "resample_polylines",
    # Autodiff kernel
    "RngState",
    "Tensor",
    "check_gradients",
    "no_grad",
    "precision",
    # Settings
    "ExperimentConfig",
    "dump_config",
    "load_config",
    "paper_scale_config",
    "parse_config",
    # Shape autoencoder
    "LatentNormalization",
    "ShapeVAE",
    "load_vae",
    "train_vae",
    # Synthetic data
    "Dataset",
    "Pose",
    "Skeleton",
    "SkeletonTopology",
    "TrainingPair",
    "build_dataset",
    "load_dataset",
    # Tools
    "logic_ablate_cfg",
    "logic_ablate_pose_repr",
    "logic_apose_sweep",
    "logic_eval",
    "logic_gen_data",
    "logic_info",
    "logic_plot",
    "logic_sample",
    "logic_train_flow",
    "logic_train_vae",
    # Types
    "AblationResult",
    "Aggregate",
    "AngleRow",
    "AposeSweepResult",
    "ErrorResult",
    "EvalResult",
    "GenDataResult",
    "InfoResult",
    "PairReport",
    "PlotResult",
    "SampleEntry",
    "SampleResult",
    "TrainResult",
]
