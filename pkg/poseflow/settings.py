# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""Experiment configuration schema.

All models are frozen pydantic models that reject unknown keys. Config
files are JSON; :func:`load_config` turns validation failures into a
:class:`~poseflow.errors.ConfigError` carrying JSON-pointer paths, and
:func:`dump_config` writes sorted keys so parsing a dumped config gives
back an equal object.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from poseflow.config import (
    APOSE_ANGLES_DEG,
    CANONICAL_MARGIN,
    DEFAULT_APOSE_ANGLE_DEG,
    DEFAULT_GUIDANCE_SCALE,
    EVAL_POINTS,
    F1_TAU,
    MIN_GRID_RES,
    PAPER_SCALE,
    SCHEMA_VERSION,
)
from poseflow.errors import ConfigError

logger = logging.getLogger(__name__)


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class DataConfig(_Frozen):
    """Synthetic dataset generation."""

    n_chars: int = Field(50, ge=1)
    poses_per_char: int = Field(7, ge=1)
    holdout_chars: int = Field(5, ge=0)
    n_bones: int = Field(10, ge=1)
    dim: Literal[2, 3] = 2
    n_surface: int = Field(1024, ge=1)
    n_sharp: int = Field(256, ge=1)
    n_queries: int = Field(2048, ge=2)
    raster_size: int = Field(32, ge=8)
    apose_fraction: float = Field(0.1, ge=0.0, le=1.0)
    apose_angles_deg: tuple[float, ...] = (DEFAULT_APOSE_ANGLE_DEG,)
    allow_identity_pairs: bool = False
    strict_duplicates: bool = False
    margin: float = Field(CANONICAL_MARGIN, gt=0.0, lt=1.0)
    root_rotation_deg: float = Field(0.0, ge=0.0, le=180.0)
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "DataConfig":
        if not self.apose_angles_deg:
            raise ValueError("apose_angles_deg must not be empty")
        for angle in self.apose_angles_deg:
            if angle not in APOSE_ANGLES_DEG:
                raise ValueError(f"A-pose angle {angle} not in {APOSE_ANGLES_DEG}")
        if self.holdout_chars >= self.n_chars:
            raise ValueError("holdout_chars must leave at least one training identity")
        return self


class VaeConfig(_Frozen):
    """Set autoencoder architecture and its training loop."""

    num_latents: int = Field(16, ge=1)
    latent_dim: int = Field(32, ge=1)
    width: int = Field(64, ge=1)
    heads: int = Field(4, ge=1)
    encoder_depth: int = Field(1, ge=0)
    decoder_depth: int = Field(1, ge=0)
    num_freqs: int = Field(6, ge=1)
    kl_weight: float = Field(0.0, ge=0.0)
    steps: int = Field(3000, ge=0)
    batch_size: int = Field(8, ge=1)
    queries_per_step: int = Field(512, ge=1)
    lr: float = Field(3e-4, gt=0.0)
    log_every: int = Field(50, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "VaeConfig":
        if self.width % self.heads != 0:
            raise ValueError("width must be divisible by heads")
        return self


class CondConfig(_Frozen):
    """Raster and skeleton condition encoders."""

    pose_repr: Literal["bones", "joints"] = "bones"
    image_dim: int = Field(64, ge=1)
    pose_dim: int = Field(64, ge=1)
    patch_size: int = Field(4, ge=1)
    image_tokens: int | None = Field(None, ge=1)
    image_blocks: int = Field(2, ge=0)
    heads: int = Field(4, ge=1)
    num_freqs: int = Field(6, ge=1)
    hidden_dim: int = Field(128, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "CondConfig":
        if self.image_dim % self.heads or self.pose_dim % self.heads:
            raise ValueError("image_dim and pose_dim must be divisible by heads")
        return self


class FlowConfig(_Frozen):
    """Multi-condition DiT."""

    width: int = Field(128, ge=1)
    depth: int = Field(4, ge=1)
    heads: int = Field(4, ge=1)
    mlp_ratio: int = Field(4, ge=1)
    time_freqs: int = Field(8, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "FlowConfig":
        if self.width % self.heads != 0:
            raise ValueError("width must be divisible by heads")
        return self


class TrainConfig(_Frozen):
    """Flow-matching training loop."""

    steps: int = Field(5000, ge=0)
    batch_size: int = Field(16, ge=1)
    lr: float = Field(3e-4, gt=0.0)
    p_image: float = Field(0.1, ge=0.0, le=1.0)
    p_pose: float = Field(0.1, ge=0.0, le=1.0)
    t_sampling: Literal["uniform", "logit_normal"] = "uniform"
    log_every: int = Field(50, ge=1)


class GuidanceConfig(_Frozen):
    strategy: Literal["image-only", "frozen-pose", "independent"] = "frozen-pose"
    scale: float = DEFAULT_GUIDANCE_SCALE
    weights: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)


class SamplerConfig(_Frozen):
    steps: int = Field(32, ge=1)
    scheme: Literal["euler", "heun"] = "euler"


class EvalConfig(_Frozen):
    tau: float = Field(F1_TAU, gt=0.0)
    n_points: int = Field(EVAL_POINTS, ge=1)
    grid_res: int = Field(64, ge=MIN_GRID_RES)
    n_eval: int = Field(100, ge=1)


class ExperimentConfig(_Frozen):
    """Everything one pipeline run needs; the seed feeds every substream."""

    schema_version: Literal[1] = SCHEMA_VERSION
    preset: Literal["desk", "paper-scale-doc"] = "desk"
    seed: int = Field(0, ge=0, lt=2**64)
    data: DataConfig = DataConfig()
    vae: VaeConfig = VaeConfig()
    cond: CondConfig = CondConfig()
    flow: FlowConfig = FlowConfig()
    train: TrainConfig = TrainConfig()
    guidance: GuidanceConfig = GuidanceConfig()
    sampler: SamplerConfig = SamplerConfig()
    eval: EvalConfig = EvalConfig()

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        if self.preset == "desk":
            if self.data.dim != 2 or self.data.n_bones != 10:
                raise ValueError("the desk preset uses the 10-bone 2D topology")
            if self.data.raster_size % self.cond.patch_size != 0:
                raise ValueError("raster_size must be a multiple of patch_size")
            expected = (self.data.raster_size // self.cond.patch_size) ** 2
            if self.cond.image_tokens not in (None, expected):
                raise ValueError(f"image_tokens must be {expected} for this raster")
        return self

    @property
    def image_tokens(self) -> int:
        if self.cond.image_tokens is not None:
            return self.cond.image_tokens
        return (self.data.raster_size // self.cond.patch_size) ** 2


def _pointer(location: tuple[Any, ...]) -> str:
    return "/" + "/".join(str(part).replace("~", "~0").replace("/", "~1") for part in location)


def parse_config(document: dict[str, Any] | str | bytes) -> ExperimentConfig:
    """Validate a config document (JSON text or already-parsed mapping)."""
    try:
        if isinstance(document, (str, bytes)):
            return ExperimentConfig.model_validate_json(document)
        return ExperimentConfig.model_validate(document)
    except ValidationError as exc:
        paths = [_pointer(tuple(err["loc"])) for err in exc.errors()]
        details = "; ".join(f"{_pointer(tuple(e['loc']))}: {e['msg']}" for e in exc.errors())
        raise ConfigError(f"invalid config: {details}", paths) from None


def load_config(path: str | os.PathLike[str] | None) -> ExperimentConfig:
    """Load a JSON config file; ``None`` gives the desk defaults."""
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", ["/"]) from None
    try:
        json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}", ["/"]) from None
    config = parse_config(text)
    logger.debug("loaded config %s (preset=%s, seed=%d)", path, config.preset, config.seed)
    return config


def dump_config(config: ExperimentConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def require_trainable(config: ExperimentConfig) -> None:
    """Reject presets that exist for documentation only."""
    if config.preset != "desk":
        raise ConfigError(
            f"preset {config.preset!r} documents large-scale constants and cannot be trained",
            ["/preset"],
        )


def paper_scale_config() -> ExperimentConfig:
    """The large-scale constants, for documentation and validation tests."""
    p = PAPER_SCALE
    return ExperimentConfig(
        preset="paper-scale-doc",
        data=DataConfig(
            n_bones=p["n_bones"],
            dim=p["dim"],
            n_surface=p["n_surface"],
            n_sharp=p["n_sharp"],
        ),
        vae=VaeConfig(num_latents=p["num_latents"], lr=p["lr"]),
        cond=CondConfig(
            image_dim=p["image_dim"],
            image_tokens=p["image_tokens"],
            pose_dim=p["pose_dim"],
            heads=16,
        ),
        flow=FlowConfig(width=p["width"], depth=p["depth"], heads=16),
        train=TrainConfig(lr=p["lr"]),
    )


__all__ = [
    "CondConfig",
    "DataConfig",
    "EvalConfig",
    "ExperimentConfig",
    "FlowConfig",
    "GuidanceConfig",
    "SamplerConfig",
    "TrainConfig",
    "VaeConfig",
    "dump_config",
    "load_config",
    "paper_scale_config",
    "parse_config",
    "require_trainable",
]
