# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""Condition encoders: raster to image tokens, skeleton to pose tokens.

Bone tokens embed the concatenated start and end points of each bone and
carry no index position, so permuting bones permutes the tokens. The
joints encoder is the ablation variant that only sees joint positions.
Each condition has a learned null embedding used when it is dropped.
"""

import logging
from typing import Any, Literal

import numpy as np

from poseflow.errors import ShapeMismatchError
from poseflow.layers import MLP, Linear, ParameterStore, TransformerBlock
from poseflow.nncore import Tensor, as_tensor, broadcast_to, frequency_embed, mul
from poseflow.settings import CondConfig

logger = logging.getLogger(__name__)

ConditionKind = Literal["image", "pose"]


def patchify(grids: np.ndarray, patch: int) -> np.ndarray:
    """Split ``(B, H, W)`` rasters into row-major ``(B, M, patch*patch)`` patches."""
    grids = np.asarray(grids, dtype=np.float32)
    batch, height, width = grids.shape
    if height % patch or width % patch:
        raise ShapeMismatchError("patchify", grids.shape, (patch, patch), "raster not divisible")
    gh, gw = height // patch, width // patch
    blocks = grids.reshape(batch, gh, patch, gw, patch).transpose(0, 1, 3, 2, 4)
    return blocks.reshape(batch, gh * gw, patch * patch)


class ConditionEncoder:
    """Image and pose condition encoders plus their null embeddings."""

    def __init__(
        self,
        cfg: CondConfig,
        store: ParameterStore,
        *,
        raster_size: int,
        n_bones: int,
        dim: int = 2,
    ) -> None:
        self.cfg = cfg
        self.raster_size = raster_size
        self.dim = dim
        self.n_bones = n_bones
        grid = raster_size // cfg.patch_size
        self.num_image_tokens = grid * grid
        self.patch_proj = Linear(store, "cond.image.patch_proj", cfg.patch_size**2, cfg.image_dim)
        self.image_pos = store.create("cond.image.pos", (self.num_image_tokens, cfg.image_dim))
        self.image_blocks = [
            TransformerBlock(store, f"cond.image.blocks.{i}", cfg.image_dim, cfg.heads)
            for i in range(cfg.image_blocks)
        ]
        if cfg.pose_repr == "bones":
            self.num_pose_tokens = n_bones
            token_in = 2 * dim * 2 * cfg.num_freqs
        else:
            self.num_pose_tokens = n_bones + 1
            token_in = dim * 2 * cfg.num_freqs
        self.pose_mlp = MLP(store, f"cond.{cfg.pose_repr}.mlp", token_in, cfg.hidden_dim, cfg.pose_dim)
        self.pose_block = TransformerBlock(store, f"cond.{cfg.pose_repr}.block", cfg.pose_dim, cfg.heads)
        self.null_image = store.create("cond.null_image", (self.num_image_tokens, cfg.image_dim))
        self.null_pose = store.create("cond.null_pose", (self.num_pose_tokens, cfg.pose_dim))

    # -- image ------------------------------------------------------------------

    def embed_patches(self, grids: Any) -> Tensor:
        """Projected patches before the positional embedding, ``(B, M, C_i)``."""
        grids = np.asarray(grids)
        if grids.ndim == 2:
            grids = grids[None]
        if grids.shape[1:] != (self.raster_size, self.raster_size):
            raise ShapeMismatchError(
                "encode_raster", grids.shape[1:], (self.raster_size, self.raster_size)
            )
        return self.patch_proj(Tensor(patchify(grids, self.cfg.patch_size)))

    def encode_raster(self, grids: Any) -> Tensor:
        tokens = self.embed_patches(grids) + self.image_pos
        for block in self.image_blocks:
            tokens = block(tokens)
        return tokens

    # -- pose -------------------------------------------------------------------

    def _check_coords(self, *arrays: np.ndarray) -> None:
        for arr in arrays:
            if not np.all(np.isfinite(arr)):
                raise ValueError("pose coordinates contain NaN or infinity")

    def bone_tokens(self, P_s: Any, P_e: Any) -> Tensor:
        """Per-bone tokens after the MLP and before self-attention."""
        starts, ends = np.asarray(P_s, dtype=np.float64), np.asarray(P_e, dtype=np.float64)
        if starts.shape != ends.shape:
            raise ShapeMismatchError("encode_skeleton", starts.shape, ends.shape)
        if starts.shape[-1] != self.dim:
            raise ShapeMismatchError("encode_skeleton", starts.shape, (self.dim,), "dimension")
        self._check_coords(starts, ends)
        if starts.ndim == 2:
            starts, ends = starts[None], ends[None]
        bones = np.concatenate([starts, ends], axis=-1)
        return self.pose_mlp(frequency_embed(Tensor(bones), self.cfg.num_freqs))

    def encode_skeleton(self, P_s: Any, P_e: Any) -> Tensor:
        if self.cfg.pose_repr != "bones":
            raise ValueError("encoder was configured for joint tokens")
        return self.pose_block(self.bone_tokens(P_s, P_e))

    def encode_joints(self, joints: Any) -> Tensor:
        if self.cfg.pose_repr != "joints":
            raise ValueError("encoder was configured for bone tokens")
        coords = np.asarray(joints, dtype=np.float64)
        if coords.shape[-1] != self.dim:
            raise ShapeMismatchError("encode_joints", coords.shape, (self.dim,), "dimension")
        self._check_coords(coords)
        if coords.ndim == 2:
            coords = coords[None]
        return self.pose_block(self.pose_mlp(frequency_embed(Tensor(coords), self.cfg.num_freqs)))

    def encode_pose(self, P_s: Any, P_e: Any, joints: Any) -> Tensor:
        """Pose tokens in the configured representation."""
        if self.cfg.pose_repr == "bones":
            return self.encode_skeleton(P_s, P_e)
        return self.encode_joints(joints)

    # -- nulls ------------------------------------------------------------------

    def null_condition(self, kind: ConditionKind, batch: int | None = None) -> Tensor:
        if kind not in ("image", "pose"):
            raise ValueError(f"unknown condition kind {kind!r}")
        table = self.null_image if kind == "image" else self.null_pose
        if batch is None:
            return table
        return broadcast_to(table, (batch, *table.shape))


def select_condition(real: Tensor, null: Tensor, keep: np.ndarray) -> Tensor:
    """Per-element choice between real tokens (``keep``) and the null tokens.

    Rows with ``keep == False`` equal ``null`` exactly.
    """
    keep = np.asarray(keep, dtype=bool)
    if real.shape[0] != keep.shape[0] or tuple(real.shape[1:]) != null.shape:
        raise ShapeMismatchError("select_condition", real.shape, null.shape)
    mask = keep.astype(np.float64).reshape(-1, *([1] * (real.ndim - 1)))
    return mul(real, Tensor(mask)) + mul(as_tensor(null), Tensor(1.0 - mask))


__all__ = [
    "ConditionEncoder",
    "ConditionKind",
    "patchify",
    "select_condition",
]
