# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""Configuration constants for the poseflow pipeline.

This module contains the numeric tolerances, file-format identifiers and
preset tables shared by the library modules. Tunable hyperparameters live
in :mod:`poseflow.settings`; the values here are fixed contracts.
"""

import math

# Schema version written into every config, dataset and checkpoint manifest
SCHEMA_VERSION = 1

# --- nncore ---------------------------------------------------------------

# Standard deviation of the truncated-normal initializer for projections
INIT_STD = 0.02

# Truncation bound of the initializer, in standard deviations
INIT_TRUNCATION = 2.0

# Layer-norm epsilon added to the variance
LAYER_NORM_EPS = 1e-5

# Adam defaults (the desk-scale learning rate lives in settings)
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

# Finite-difference step used by check_gradients unless overridden
GRADIENT_CHECK_EPS = 1e-3

# Magnitude floor in the relative-error denominator of check_gradients
GRADIENT_CHECK_FLOOR = 1e-8

# --- checkpoints and datasets ---------------------------------------------

CHECKPOINT_FORMAT = "poseflow-checkpoint"
CHECKPOINT_MANIFEST = "manifest.json"
CHECKPOINT_BLOB = "params.bin"

DATASET_FORMAT = "poseflow-dataset"
DATASET_MANIFEST = "manifest.json"
DATASET_BLOB = "records.bin"

# Number of little-endian u32 words in a dataset record header
RECORD_HEADER_WORDS = 13

# Record header flag bits
FLAG_APOSE = 1 << 0
FLAG_SHARP_FALLBACK = 1 << 1
FLAG_TEST_SPLIT = 1 << 2

# --- synthdata ------------------------------------------------------------

# Joint limits in degrees: limbs vs. spine/head
LIMB_LIMIT_DEG = 120.0
AXIAL_LIMIT_DEG = 30.0

# Allowed A-pose arm angles (degrees between upper arm and torso)
APOSE_ANGLES_DEG = (35.0, 45.0, 50.0, 55.0)
DEFAULT_APOSE_ANGLE_DEG = 45.0

# Largest half-extent of a character after canonical normalization.
# Keeps every capsule strictly inside [-1, 1]^D.
CANONICAL_MARGIN = 0.9

# Surface projection: damping factor, iteration cap and convergence bound
PROJECTION_DAMPING = 0.8
PROJECTION_MAX_ITERS = 32
PROJECTION_TOLERANCE = 1e-4

# Re-seeding rounds for seeds that did not converge
PROJECTION_MAX_ROUNDS = 4

# Abort when more than this fraction of first-round seeds fail to converge
PROJECTION_MAX_FAILURE_RATE = 0.10

# Gap between the two smallest per-capsule distances that marks a junction
JUNCTION_EPS = 0.01

# Candidate rounds when searching for junction (sharp) points
SHARP_MAX_ROUNDS = 32

# Standard deviation of near-surface SDF query offsets
NEAR_SURFACE_SIGMA = 0.05

# Fraction of SDF queries drawn uniformly in the box
UNIFORM_QUERY_FRACTION = 0.5

# --- shapevae -------------------------------------------------------------

# SDF regression clamp radius
SDF_CLAMP = 0.1

# Tolerance for "decoded SDF is zero" at true surface points
SURFACE_RECALL_TOL = 0.02

# Floor for latent normalization standard deviations
LATENT_STD_FLOOR = 1e-6

# --- guidance -------------------------------------------------------------

# Guidance presets as (lambda1, lambda2, lambda3, lambda4) weights over
# v(pose, image), v(pose, null), v(null, image), v(null, null)
GUIDANCE_PRESETS: dict[str, tuple[float, float, float, float]] = {
    "A": (7.5, -6.5, 0.0, 0.0),
    "B": (14.5, -7.0, -3.0, -3.0),
}

# Default guidance scale of the frozen-pose strategy
DEFAULT_GUIDANCE_SCALE = 7.5

# Smallest lattice accepted by extract_shape
MIN_GRID_RES = 16

# --- metrics --------------------------------------------------------------

# F1 distance threshold in model units
F1_TAU = 0.02

# Reference box diagonal, for documentation of the threshold above
BOX_DIAGONAL = 2.0 * math.sqrt(2.0)

# Points per shape used for evaluation
EVAL_POINTS = 1024

# --- large-scale documentation preset --------------------------------------

PAPER_SCALE = {
    "n_bones": 21,
    "dim": 3,
    "pose_dim": 768,
    "image_tokens": 1370,
    "image_dim": 1024,
    "depth": 24,
    "width": 1024,
    "num_latents": 2048,
    "n_surface": 49512,
    "n_sharp": 16384,
    "lr": 1e-4,
}


__all__ = [
    "ADAM_BETAS",
    "ADAM_EPS",
    "APOSE_ANGLES_DEG",
    "AXIAL_LIMIT_DEG",
    "BOX_DIAGONAL",
    "CANONICAL_MARGIN",
    "CHECKPOINT_BLOB",
    "CHECKPOINT_FORMAT",
    "CHECKPOINT_MANIFEST",
    "DATASET_BLOB",
    "DATASET_FORMAT",
    "DATASET_MANIFEST",
    "DEFAULT_APOSE_ANGLE_DEG",
    "DEFAULT_GUIDANCE_SCALE",
    "EVAL_POINTS",
    "F1_TAU",
    "FLAG_APOSE",
    "FLAG_SHARP_FALLBACK",
    "FLAG_TEST_SPLIT",
    "GRADIENT_CHECK_EPS",
    "GRADIENT_CHECK_FLOOR",
    "GUIDANCE_PRESETS",
    "INIT_STD",
    "INIT_TRUNCATION",
    "JUNCTION_EPS",
    "LATENT_STD_FLOOR",
    "LAYER_NORM_EPS",
    "LIMB_LIMIT_DEG",
    "MIN_GRID_RES",
    "NEAR_SURFACE_SIGMA",
    "PAPER_SCALE",
    "PROJECTION_DAMPING",
    "PROJECTION_MAX_FAILURE_RATE",
    "PROJECTION_MAX_ITERS",
    "PROJECTION_MAX_ROUNDS",
    "PROJECTION_TOLERANCE",
    "RECORD_HEADER_WORDS",
    "SCHEMA_VERSION",
    "SDF_CLAMP",
    "SHARP_MAX_ROUNDS",
    "SURFACE_RECALL_TOL",
    "UNIFORM_QUERY_FRACTION",
]
