# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""Set autoencoder mapping point samples to a fixed-length latent set.

The encoder lets ``K`` learned query tokens cross-attend to the
frequency-embedded surface and sharp points, so the latents do not depend
on point order. The decoder turns latents into a context set and lets
every SDF query attend to it independently, so outputs follow query
order. The SDF head's last layer starts at zero.
"""

import logging
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from poseflow.checkpoint import load_checkpoint, read_manifest
from poseflow.config import LATENT_STD_FLOOR, SDF_CLAMP, SURFACE_RECALL_TOL
from poseflow.errors import CheckpointError, NonFiniteError, ShapeMismatchError
from poseflow.layers import (
    Adam,
    CrossAttentionBlock,
    LayerNorm,
    Linear,
    MLP,
    ParameterStore,
    TransformerBlock,
)
from poseflow.nncore import (
    RngState,
    Tensor,
    as_tensor,
    broadcast_to,
    clip,
    exp,
    frequency_embed,
    l1_loss,
    mul,
    no_grad,
    reshape,
    tensor_mean,
)
from poseflow.runlog import MetricsLog
from poseflow.settings import VaeConfig
from poseflow.synthdata import ShapeSample, TrainingPair

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LatentNormalization:
    """Per-dimension statistics that standardize latents for the flow prior."""

    mean: np.ndarray
    std: np.ndarray

    def normalize(self, latents: np.ndarray) -> np.ndarray:
        return ((latents - self.mean) / self.std).astype(np.float32)

    def denormalize(self, latents: np.ndarray) -> np.ndarray:
        return (latents * self.std + self.mean).astype(np.float32)

    def to_dict(self) -> dict[str, list[float]]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, document: dict[str, Any]) -> "LatentNormalization":
        return cls(
            np.asarray(document["mean"], dtype=np.float32),
            np.asarray(document["std"], dtype=np.float32),
        )

    @classmethod
    def identity(cls, latent_dim: int) -> "LatentNormalization":
        return cls(np.zeros(latent_dim, np.float32), np.ones(latent_dim, np.float32))

    @classmethod
    def fit(cls, latents: np.ndarray) -> "LatentNormalization":
        """Statistics over every token of every shape in ``latents (P, K, L)``."""
        flat = latents.reshape(-1, latents.shape[-1]).astype(np.float64)
        std = np.maximum(flat.std(axis=0), LATENT_STD_FLOOR)
        return cls(flat.mean(axis=0).astype(np.float32), std.astype(np.float32))


@dataclass
class VaeBatch:
    points: np.ndarray
    queries: np.ndarray
    values: np.ndarray


def _batched(array: Tensor) -> tuple[Tensor, bool]:
    if array.ndim == 2:
        return reshape(array, (1, *array.shape)), True
    return array, False


class ShapeVAE:
    """Encoder/decoder pair over point sets in ``[-1, 1]^dim``.

    ``num_points`` fixes the surface-plus-sharp sample count the encoder
    accepts; ``None`` accepts any count.
    """

    def __init__(
        self, cfg: VaeConfig, store: ParameterStore, dim: int = 2, num_points: int | None = None
    ) -> None:
        self.cfg = cfg
        self.dim = dim
        self.num_points = num_points
        width, heads = cfg.width, cfg.heads
        embed_in = dim * 2 * cfg.num_freqs
        self.latent_queries = store.create("vae.latent_queries", (cfg.num_latents, width))
        self.point_embed = Linear(store, "vae.point_embed", embed_in, width)
        self.encoder_cross = CrossAttentionBlock(store, "vae.encoder_cross", width, heads)
        self.encoder_blocks = [
            TransformerBlock(store, f"vae.encoder.{i}", width, heads)
            for i in range(cfg.encoder_depth)
        ]
        self.to_mean = Linear(store, "vae.to_mean", width, cfg.latent_dim)
        self.to_logvar = (
            Linear(store, "vae.to_logvar", width, cfg.latent_dim) if cfg.kl_weight > 0 else None
        )
        self.from_latent = Linear(store, "vae.from_latent", cfg.latent_dim, width)
        self.decoder_blocks = [
            TransformerBlock(store, f"vae.decoder.{i}", width, heads)
            for i in range(cfg.decoder_depth)
        ]
        self.query_embed = Linear(store, "vae.query_embed", embed_in, width)
        self.decoder_cross = CrossAttentionBlock(store, "vae.decoder_cross", width, heads)
        self.head_norm = LayerNorm(store, "vae.head_norm", width)
        self.head = MLP(store, "vae.head", width, width, 1, zero_output=True)

    def encode(
        self, points: Any, rng: RngState | None = None
    ) -> tuple[Tensor, Tensor, Tensor | None]:
        """Latents, posterior mean and log-variance for ``points [B, n, D]``.

        Without ``rng`` (or with ``kl_weight == 0``) the latents are the mean.
        """
        pts, single = _batched(as_tensor(points))
        if pts.shape[-1] != self.dim:
            raise ShapeMismatchError("encode", pts.shape, (self.dim,), "point dimension")
        if self.num_points is not None and pts.shape[1] != self.num_points:
            raise ShapeMismatchError(
                "encode", pts.shape, (pts.shape[0], self.num_points, self.dim), "point count"
            )
        batch = pts.shape[0]
        tokens = self.point_embed(frequency_embed(pts, self.cfg.num_freqs))
        queries = broadcast_to(self.latent_queries, (batch, *self.latent_queries.shape))
        hidden = self.encoder_cross(queries, tokens)
        for block in self.encoder_blocks:
            hidden = block(hidden)
        mean = self.to_mean(hidden)
        logvar = None
        latents = mean
        if self.to_logvar is not None:
            logvar = clip(self.to_logvar(hidden), -10.0, 10.0)
            if rng is not None:
                noise = Tensor(rng.normal(mean.shape))
                latents = mean + mul(exp(mul(logvar, 0.5)), noise)
        if single:
            latents, mean = latents[0], mean[0]
            logvar = logvar[0] if logvar is not None else None
        return latents, mean, logvar

    def decode_sdf(self, latents: Any, queries: Any) -> Tensor:
        """SDF predictions ``[B, n]`` for ``queries [B, n, D]``."""
        lat, single = _batched(as_tensor(latents))
        qry, _ = _batched(as_tensor(queries))
        if lat.shape[0] != qry.shape[0]:
            raise ShapeMismatchError("decode_sdf", lat.shape, qry.shape, "batch sizes differ")
        context = self.from_latent(lat)
        for block in self.decoder_blocks:
            context = block(context)
        hidden = self.decoder_cross(
            self.query_embed(frequency_embed(qry, self.cfg.num_freqs)), context
        )
        out = self.head(self.head_norm(hidden))
        out = reshape(out, out.shape[:-1])
        return out[0] if single else out


def shape_points(sample: ShapeSample) -> np.ndarray:
    """Encoder input: surface points followed by sharp points."""
    return np.concatenate([sample.surface_points, sample.sharp_points])


def vae_loss(
    vae: ShapeVAE, batch: VaeBatch, rng: RngState | None = None
) -> tuple[Tensor, dict[str, float]]:
    """Clamped L1 SDF reconstruction, plus ``kl_weight`` times the KL term."""
    latents, mean, logvar = vae.encode(batch.points, rng)
    pred = vae.decode_sdf(latents, batch.queries)
    target = np.clip(batch.values, -SDF_CLAMP, SDF_CLAMP)
    recon = l1_loss(clip(pred, -SDF_CLAMP, SDF_CLAMP), target)
    parts = {"recon": float(recon.data)}
    loss = recon
    if vae.cfg.kl_weight > 0 and logvar is not None:
        kl = mul(tensor_mean(mean * mean + exp(logvar) - 1.0 - logvar), 0.5)
        parts["kl"] = float(kl.data)
        loss = recon + mul(kl, vae.cfg.kl_weight)
    if not np.isfinite(loss.data).all():
        raise NonFiniteError("VAE loss is not finite")
    return loss, parts


def sign_accuracy(pred: np.ndarray, target: np.ndarray) -> float:
    """Fraction of predictions on the same side of the surface as the target."""
    pred, target = np.asarray(pred), np.asarray(target)
    return float(np.mean((pred <= 0.0) == (target <= 0.0)))


def surface_recall(pred_at_surface: np.ndarray, tol: float = SURFACE_RECALL_TOL) -> float:
    """Fraction of true surface points where the decoded SDF is within ``tol`` of 0."""
    return float(np.mean(np.abs(np.asarray(pred_at_surface)) < tol))


def make_batch(pairs: Sequence[TrainingPair], n_queries: int, rng: RngState) -> VaeBatch:
    points, queries, values = [], [], []
    for pair in pairs:
        shape = pair.target_shape
        points.append(shape_points(shape))
        pick = rng.choice(len(shape.sdf_queries), min(n_queries, len(shape.sdf_queries)), replace=False)
        queries.append(shape.sdf_queries[np.sort(pick)])
        values.append(shape.sdf_values[np.sort(pick)])
    return VaeBatch(np.stack(points), np.stack(queries), np.stack(values))


def encode_latents(vae: ShapeVAE, pairs: Sequence[TrainingPair], batch_size: int = 16) -> np.ndarray:
    """Deterministic (mean) latents ``(P, K, L)`` of every pair's target shape."""
    chunks = []
    with no_grad():
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start : start + batch_size]
            points = np.stack([shape_points(p.target_shape) for p in chunk])
            _, mean, _ = vae.encode(points)
            chunks.append(mean.data.astype(np.float32))
    if not chunks:
        return np.zeros((0, vae.cfg.num_latents, vae.cfg.latent_dim), np.float32)
    return np.concatenate(chunks)


def evaluate_vae(vae: ShapeVAE, pairs: Sequence[TrainingPair], batch_size: int = 16) -> dict[str, float]:
    """Sign accuracy on SDF queries and surface recall on surface points."""
    if not pairs:
        return {"sign_accuracy": float("nan"), "surface_recall": float("nan")}
    preds, targets, at_surface = [], [], []
    with no_grad():
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start : start + batch_size]
            latents = Tensor(encode_latents(vae, chunk, batch_size))
            queries = np.stack([p.target_shape.sdf_queries for p in chunk])
            surface = np.stack([p.target_shape.surface_points for p in chunk])
            preds.append(vae.decode_sdf(latents, queries).data.reshape(-1))
            targets.append(np.stack([p.target_shape.sdf_values for p in chunk]).reshape(-1))
            at_surface.append(vae.decode_sdf(latents, surface).data.reshape(-1))
    return {
        "sign_accuracy": sign_accuracy(np.concatenate(preds), np.concatenate(targets)),
        "surface_recall": surface_recall(np.concatenate(at_surface)),
    }


@dataclass
class VaeTrainingResult:
    store: ParameterStore
    model: ShapeVAE
    normalization: LatentNormalization
    losses: list[float] = field(default_factory=list)
    metrics: dict[str, float] = field(default_factory=dict)


def train_vae(
    train_pairs: Sequence[TrainingPair],
    test_pairs: Sequence[TrainingPair],
    cfg: VaeConfig,
    rng: RngState,
    log: MetricsLog | None = None,
) -> VaeTrainingResult:
    """Train the autoencoder with Adam and fit latent normalization statistics."""
    if not train_pairs:
        raise ValueError("no training pairs")
    dim = train_pairs[0].target_skeleton.dim
    store = ParameterStore(rng.substream("params").child_seed())
    vae = ShapeVAE(cfg, store, dim, len(shape_points(train_pairs[0].target_shape)))
    optimizer = Adam(store, cfg.lr)
    batch_rng = rng.substream("batches")
    noise_rng = rng.substream("posterior") if cfg.kl_weight > 0 else None
    losses: list[float] = []
    started = time.perf_counter()
    for step in range(1, cfg.steps + 1):
        pick = batch_rng.choice(len(train_pairs), cfg.batch_size)
        batch = make_batch([train_pairs[i] for i in pick], cfg.queries_per_step, batch_rng)
        store.zero_grad()
        loss, parts = vae_loss(vae, batch, noise_rng)
        loss.backward()
        optimizer.step()
        losses.append(float(loss.data))
        if log is not None and (step % cfg.log_every == 0 or step == cfg.steps):
            log.record(
                "vae_step", step=step, loss=losses[-1], lr=cfg.lr,
                wall_time=round(time.perf_counter() - started, 3), **parts,
            )
        logger.debug("vae step %d loss %.5f", step, losses[-1])

    latents = encode_latents(vae, train_pairs)
    normalization = LatentNormalization.fit(latents)
    metrics = evaluate_vae(vae, test_pairs)
    logger.info(
        "VAE trained for %d steps: sign accuracy %.3f, surface recall %.3f",
        cfg.steps, metrics["sign_accuracy"], metrics["surface_recall"],
    )
    return VaeTrainingResult(store, vae, normalization, losses, metrics)


def load_vae(directory: str) -> tuple[ShapeVAE, LatentNormalization, dict[str, Any]]:
    """Rebuild a trained VAE from its checkpoint directory."""
    manifest = read_manifest(directory)
    extra = manifest.get("extra", {})
    if extra.get("kind") != "vae":
        raise CheckpointError(f"{directory} is not a VAE checkpoint")
    cfg = VaeConfig.model_validate(extra["vae"])
    store = ParameterStore(int(manifest["seed"]))
    num_points = extra.get("num_points")
    vae = ShapeVAE(
        cfg, store, int(extra.get("dim", 2)), None if num_points is None else int(num_points)
    )
    load_checkpoint(directory, store)
    return vae, LatentNormalization.from_dict(extra["normalization"]), manifest


__all__ = [
    "LatentNormalization",
    "ShapeVAE",
    "VaeBatch",
    "VaeTrainingResult",
    "encode_latents",
    "evaluate_vae",
    "load_vae",
    "make_batch",
    "shape_points",
    "sign_accuracy",
    "surface_recall",
    "train_vae",
    "vae_loss",
]
