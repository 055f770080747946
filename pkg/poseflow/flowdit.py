# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""Multi-condition diffusion transformer and its rectified-flow training loop.

Time convention: data sits at ``t = 0`` and noise at ``t = 1``,

    x_t = (1 - t) * x1 + t * x0,        v = x1 - x0,

so moving from ``t`` to ``t - dt`` adds ``dt * v``. Every block receives
six modulation vectors (shift, scale and gate for attention and for the
MLP) from one shared timestep projection plus small per-block offsets.
Condition tokens ``[image || pose]`` and latent tokens run through
separate projections and MLPs and meet in one joint self-attention.
"""

import logging
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from poseflow.checkpoint import load_checkpoint, read_manifest, save_checkpoint
from poseflow.condenc import ConditionEncoder, select_condition
from poseflow.errors import CheckpointError, NonFiniteError, ShapeMismatchError
from poseflow.layers import MLP, Adam, Linear, ParameterStore, count_parameters
from poseflow.nncore import (
    RngState,
    Tensor,
    as_tensor,
    attention,
    concat,
    frequency_embed,
    gelu,
    layer_norm,
    mse_loss,
    mul,
    reshape,
)
from poseflow.runlog import MetricsLog
from poseflow.settings import CondConfig, ExperimentConfig, FlowConfig, TrainConfig
from poseflow.shapevae import LatentNormalization, ShapeVAE, encode_latents
from poseflow.synthdata import TrainingPair

logger = logging.getLogger(__name__)

TimeLaw = Literal["uniform", "logit_normal"]

_N_MOD = 6


def _chunks(mod: Tensor, count: int) -> list[Tensor]:
    """Split ``(B, count, W)`` into ``count`` tensors of shape ``(B, 1, W)``."""
    batch, _, width = mod.shape
    return [reshape(mod[:, i], (batch, 1, width)) for i in range(count)]


def _modulate(x: Tensor, shift: Tensor, scale: Tensor) -> Tensor:
    return mul(layer_norm(x), scale + 1.0) + shift


class DiTBlock:
    """One dual-stream block with joint attention over ``[c || x]``."""

    def __init__(
        self, store: ParameterStore, name: str, width: int, heads: int, mlp_ratio: int
    ) -> None:
        self.width = width
        self.heads = heads
        self.latent_offsets = store.create(f"{name}.latent_offsets", (_N_MOD, width), "zeros")
        self.cond_offsets = store.create(f"{name}.cond_offsets", (_N_MOD, width), "zeros")
        self.latent_qkv = Linear(store, f"{name}.latent_qkv", width, 3 * width)
        self.cond_qkv = Linear(store, f"{name}.cond_qkv", width, 3 * width)
        self.latent_proj = Linear(store, f"{name}.latent_proj", width, width)
        self.cond_proj = Linear(store, f"{name}.cond_proj", width, width)
        self.latent_mlp = MLP(store, f"{name}.latent_mlp", width, width * mlp_ratio, width)
        self.cond_mlp = MLP(store, f"{name}.cond_mlp", width, width * mlp_ratio, width)

    def _split_qkv(self, qkv: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        w = self.width
        return qkv[..., :w], qkv[..., w : 2 * w], qkv[..., 2 * w :]

    def __call__(self, x: Tensor, c: Tensor, modulation: Tensor) -> tuple[Tensor, Tensor]:
        x_shift_a, x_scale_a, x_gate_a, x_shift_m, x_scale_m, x_gate_m = _chunks(
            modulation + self.latent_offsets, _N_MOD
        )
        c_shift_a, c_scale_a, c_gate_a, c_shift_m, c_scale_m, c_gate_m = _chunks(
            modulation + self.cond_offsets, _N_MOD
        )
        xq, xk, xv = self._split_qkv(self.latent_qkv(_modulate(x, x_shift_a, x_scale_a)))
        cq, ck, cv = self._split_qkv(self.cond_qkv(_modulate(c, c_shift_a, c_scale_a)))
        n_cond = c.shape[1]
        mixed = attention(
            concat([cq, xq], axis=1), concat([ck, xk], axis=1), concat([cv, xv], axis=1),
            self.heads,
        )
        assert isinstance(mixed, Tensor)
        c = c + mul(c_gate_a, self.cond_proj(mixed[:, :n_cond]))
        x = x + mul(x_gate_a, self.latent_proj(mixed[:, n_cond:]))
        c = c + mul(c_gate_m, self.cond_mlp(_modulate(c, c_shift_m, c_scale_m)))
        x = x + mul(x_gate_m, self.latent_mlp(_modulate(x, x_shift_m, x_scale_m)))
        return x, c


class FlowDiT:
    """Velocity network ``v(x_t, t, c_image, c_pose)`` over latent sets."""

    def __init__(
        self,
        cfg: FlowConfig,
        store: ParameterStore,
        *,
        latent_dim: int,
        image_dim: int,
        pose_dim: int,
    ) -> None:
        self.cfg = cfg
        self.latent_dim = latent_dim
        width = cfg.width
        self.latent_in = Linear(store, "flow.latent_in", latent_dim, width)
        self.image_in = Linear(store, "flow.image_in", image_dim, width)
        self.pose_in = Linear(store, "flow.pose_in", pose_dim, width)
        self.time_embed = MLP(store, "flow.time_embed", 2 * cfg.time_freqs, width, width)
        self.adaln = Linear(store, "flow.adaln", width, _N_MOD * width, init="zeros")
        self.blocks = [
            DiTBlock(store, f"flow.blocks.{i}", width, cfg.heads, cfg.mlp_ratio)
            for i in range(cfg.depth)
        ]
        self.final_offsets = store.create("flow.final_offsets", (2, width), "zeros")
        self.latent_out = Linear(store, "flow.latent_out", width, latent_dim, init="zeros")

    def embed_time(self, t: Any, batch: int) -> Tensor:
        times = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (batch,))
        return self.time_embed(frequency_embed(Tensor(times.reshape(batch, 1)), self.cfg.time_freqs))

    def __call__(self, x_t: Any, t: Any, c_image: Tensor, c_pose: Tensor) -> Tensor:
        x = as_tensor(x_t)
        if x.ndim != 3 or x.shape[-1] != self.latent_dim:
            raise ShapeMismatchError("flow forward", x.shape, (self.latent_dim,), "latent set")
        batch = x.shape[0]
        for label, cond in (("image", c_image), ("pose", c_pose)):
            if cond.ndim != 3 or cond.shape[0] != batch:
                raise ShapeMismatchError("flow forward", x.shape, cond.shape, f"{label} condition")
        width = self.cfg.width
        t_emb = self.embed_time(t, batch)
        modulation = reshape(self.adaln(gelu(t_emb)), (batch, _N_MOD, width))
        h = self.latent_in(x)
        c = concat([self.image_in(c_image), self.pose_in(c_pose)], axis=1)
        for i, block in enumerate(self.blocks):
            h, c = block(h, c, modulation)
            if not np.all(np.isfinite(h.data)):
                raise NonFiniteError(f"non-finite activations after block {i}", block=i)
        final = reshape(t_emb, (batch, 1, width)) + self.final_offsets
        shift, scale = _chunks(final, 2)
        return self.latent_out(_modulate(h, shift, scale))


class PoseFlowModel:
    """Condition encoders and the DiT sharing one parameter store."""

    def __init__(
        self,
        flow_cfg: FlowConfig,
        cond_cfg: CondConfig,
        store: ParameterStore,
        *,
        latent_dim: int,
        num_latents: int,
        raster_size: int,
        n_bones: int,
        dim: int = 2,
    ) -> None:
        self.store = store
        self.num_latents = num_latents
        self.latent_dim = latent_dim
        self.encoder = ConditionEncoder(
            cond_cfg, store, raster_size=raster_size, n_bones=n_bones, dim=dim
        )
        self.dit = FlowDiT(
            flow_cfg, store,
            latent_dim=latent_dim, image_dim=cond_cfg.image_dim, pose_dim=cond_cfg.pose_dim,
        )

    @classmethod
    def from_config(
        cls, config: ExperimentConfig, store: ParameterStore, *, latent_dim: int, num_latents: int
    ) -> "PoseFlowModel":
        return cls(
            config.flow, config.cond, store,
            latent_dim=latent_dim, num_latents=num_latents,
            raster_size=config.data.raster_size, n_bones=config.data.n_bones, dim=config.data.dim,
        )

    def encode_conditions(
        self, rasters: Any, P_s: Any, P_e: Any, joints: Any
    ) -> tuple[Tensor, Tensor]:
        return self.encoder.encode_raster(rasters), self.encoder.encode_pose(P_s, P_e, joints)

    def null_conditions(self, batch: int) -> tuple[Tensor, Tensor]:
        return self.encoder.null_condition("image", batch), self.encoder.null_condition("pose", batch)

    def velocity(self, x_t: Any, t: Any, c_image: Tensor, c_pose: Tensor) -> Tensor:
        return self.dit(x_t, t, c_image, c_pose)

    def parameter_count(self, prefix: str = "") -> int:
        return count_parameters(self.store, prefix)


# -- flow matching ------------------------------------------------------------


def interpolate(x0: np.ndarray, x1: np.ndarray, t: Any) -> np.ndarray:
    """Point on the straight path: ``t = 0`` gives ``x1``, ``t = 1`` gives ``x0``.

    ``t`` is a scalar or one value per leading-axis element.
    """
    x0, x1 = np.asarray(x0), np.asarray(x1)
    if x0.shape != x1.shape:
        raise ShapeMismatchError("interpolate", x0.shape, x1.shape)
    times = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(times)) or np.any(times < 0.0) or np.any(times > 1.0):
        raise ValueError("t must lie in [0, 1]")
    if times.ndim == 1:
        times = times.reshape(-1, *([1] * (x0.ndim - 1)))
    out = (1.0 - times) * x1 + times * x0
    return out.astype(np.result_type(x0.dtype, x1.dtype))


def velocity_target(x0: np.ndarray, x1: np.ndarray) -> np.ndarray:
    x0, x1 = np.asarray(x0), np.asarray(x1)
    if x0.shape != x1.shape:
        raise ShapeMismatchError("velocity_target", x0.shape, x1.shape)
    return x1 - x0


def sample_timesteps(rng: RngState, n: int, law: TimeLaw = "uniform") -> np.ndarray:
    if law == "uniform":
        return rng.uniform(n)
    if law == "logit_normal":
        return 1.0 / (1.0 + np.exp(-rng.normal(n)))
    raise ValueError(f"unknown t-sampling law {law!r}")


def sample_condition_masks(
    rng: RngState, n: int, p_image: float, p_pose: float
) -> tuple[np.ndarray, np.ndarray]:
    """Keep masks ``(keep_image, keep_pose)``; each condition has its own coin."""
    coins = rng.uniform((n, 2))
    return coins[:, 0] >= p_image, coins[:, 1] >= p_pose


def flow_matching_loss(pred: Tensor, x0: np.ndarray, x1: np.ndarray) -> Tensor:
    """Mean squared error against the path velocity over every latent entry."""
    return mse_loss(pred, velocity_target(x0, x1))


@dataclass
class FlowBatch:
    """Normalized target latents with the conditions of the same pairs."""

    x1: np.ndarray
    rasters: np.ndarray
    P_s: np.ndarray
    P_e: np.ndarray
    joints: np.ndarray

    @classmethod
    def from_pairs(cls, pairs: Sequence[TrainingPair], latents: np.ndarray) -> "FlowBatch":
        return cls(
            np.asarray(latents, dtype=np.float32),
            np.stack([p.condition_raster for p in pairs]).astype(np.float32),
            np.stack([p.target_skeleton.P_s for p in pairs]),
            np.stack([p.target_skeleton.P_e for p in pairs]),
            np.stack([p.target_skeleton.joints for p in pairs]),
        )

    def __len__(self) -> int:
        return int(self.x1.shape[0])


def flow_loss(
    model: PoseFlowModel, batch: FlowBatch, cfg: TrainConfig, rng: RngState
) -> tuple[Tensor, dict[str, float]]:
    """Conditional flow-matching loss of one batch with condition dropout."""
    n = len(batch)
    t = sample_timesteps(rng.substream("t"), n, cfg.t_sampling)
    x0 = rng.substream("noise").normal(batch.x1.shape).astype(np.float32)
    keep_image, keep_pose = sample_condition_masks(rng.substream("dropout"), n, cfg.p_image, cfg.p_pose)
    c_image, c_pose = model.encode_conditions(batch.rasters, batch.P_s, batch.P_e, batch.joints)
    c_image = select_condition(c_image, model.encoder.null_image, keep_image)
    c_pose = select_condition(c_pose, model.encoder.null_pose, keep_pose)
    x_t = interpolate(x0, batch.x1, t)
    pred = model.velocity(x_t, t, c_image, c_pose)
    loss = flow_matching_loss(pred, x0, batch.x1)
    if not np.all(np.isfinite(loss.data)):
        raise NonFiniteError("flow-matching loss is not finite")
    parts = {
        "image_kept": float(keep_image.mean()),
        "pose_kept": float(keep_pose.mean()),
    }
    return loss, parts


def train_step(
    model: PoseFlowModel,
    optimizer: Adam,
    batch: FlowBatch,
    cfg: TrainConfig,
    rng: RngState,
) -> float:
    """One optimizer step; returns the batch loss before the update."""
    model.store.zero_grad()
    loss, _ = flow_loss(model, batch, cfg, rng)
    loss.backward()
    optimizer.step()
    return float(loss.data)


@dataclass
class FlowTrainingResult:
    store: ParameterStore
    model: PoseFlowModel
    normalization: LatentNormalization
    losses: list[float] = field(default_factory=list)


def latent_cache(
    vae: ShapeVAE, normalization: LatentNormalization, pairs: Sequence[TrainingPair]
) -> np.ndarray:
    """Normalized target latents of ``pairs``, encoded once with the frozen VAE."""
    return normalization.normalize(encode_latents(vae, pairs))


def train_flow(
    train_pairs: Sequence[TrainingPair],
    vae: ShapeVAE,
    normalization: LatentNormalization,
    config: ExperimentConfig,
    rng: RngState,
    log: MetricsLog | None = None,
) -> FlowTrainingResult:
    """Train encoders and DiT jointly against cached VAE latents."""
    if not train_pairs:
        raise ValueError("no training pairs")
    cfg = config.train
    cache = latent_cache(vae, normalization, train_pairs)
    logger.info("cached %d target latent sets of shape %s", len(cache), cache.shape[1:])
    store = ParameterStore(rng.substream("params").child_seed())
    model = PoseFlowModel.from_config(
        config, store, latent_dim=vae.cfg.latent_dim, num_latents=vae.cfg.num_latents
    )
    optimizer = Adam(store, cfg.lr)
    batch_rng = rng.substream("batches")
    losses: list[float] = []
    started = time.perf_counter()
    for step in range(1, cfg.steps + 1):
        pick = batch_rng.choice(len(train_pairs), cfg.batch_size)
        batch = FlowBatch.from_pairs([train_pairs[i] for i in pick], cache[pick])
        losses.append(train_step(model, optimizer, batch, cfg, rng.substream("step", step)))
        if log is not None and (step % cfg.log_every == 0 or step == cfg.steps):
            log.record(
                "flow_step", step=step, loss=losses[-1], lr=cfg.lr,
                wall_time=round(time.perf_counter() - started, 3),
            )
        logger.debug("flow step %d loss %.5f", step, losses[-1])
    logger.info(
        "flow trained for %d steps (%d parameters)", cfg.steps, model.parameter_count()
    )
    return FlowTrainingResult(store, model, normalization, losses)


def save_flow(
    directory: str,
    model: PoseFlowModel,
    normalization: LatentNormalization,
    config: ExperimentConfig,
    *,
    step: int,
) -> None:
    save_checkpoint(
        directory, model.store, step=step,
        extra={
            "kind": "flow",
            "config": config.model_dump(mode="json"),
            "latent_dim": model.latent_dim,
            "num_latents": model.num_latents,
            "normalization": normalization.to_dict(),
        },
    )


def load_flow(directory: str) -> tuple[PoseFlowModel, LatentNormalization, ExperimentConfig]:
    """Rebuild a trained flow model from its checkpoint directory."""
    manifest = read_manifest(directory)
    extra = manifest.get("extra", {})
    if extra.get("kind") != "flow":
        raise CheckpointError(f"{directory} is not a flow checkpoint")
    config = ExperimentConfig.model_validate(extra["config"])
    store = ParameterStore(int(manifest["seed"]))
    model = PoseFlowModel.from_config(
        config, store,
        latent_dim=int(extra["latent_dim"]), num_latents=int(extra["num_latents"]),
    )
    load_checkpoint(directory, store)
    return model, LatentNormalization.from_dict(extra["normalization"]), config


__all__ = [
    "DiTBlock",
    "FlowBatch",
    "FlowDiT",
    "FlowTrainingResult",
    "PoseFlowModel",
    "TimeLaw",
    "flow_loss",
    "flow_matching_loss",
    "interpolate",
    "latent_cache",
    "load_flow",
    "sample_condition_masks",
    "sample_timesteps",
    "save_flow",
    "train_flow",
    "train_step",
    "velocity_target",
]
