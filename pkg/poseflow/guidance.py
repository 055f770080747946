# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""Multi-condition classifier-free guidance, the ODE sampler and shape
extraction.

Guidance terms are written ``v(pose, image)``, with a null slot standing
for the learned null embedding of that condition:

* ``image-only``:  v(null, null) + s * (v(null, image) - v(null, null))
* ``frozen-pose``: v(pose, null) + s * (v(pose, image) - v(pose, null))
* ``independent``: w1 v(pose, image) + w2 v(pose, null) + w3 v(null, image) + w4 v(null, null)

The independent weights are applied as given, without renormalization.
"""

import enum
import logging
from collections.abc import Callable
from dataclasses import dataclass
from typing import Any

import numpy as np

from poseflow.config import DEFAULT_GUIDANCE_SCALE, GUIDANCE_PRESETS, MIN_GRID_RES
from poseflow.contour import marching_squares
from poseflow.errors import NonFiniteError
from poseflow.flowdit import PoseFlowModel
from poseflow.nncore import RngState, Tensor, no_grad
from poseflow.settings import GuidanceConfig, SamplerConfig
from poseflow.shapevae import LatentNormalization, ShapeVAE

logger = logging.getLogger(__name__)

VelocityFn = Callable[[np.ndarray, float], np.ndarray]

_QUERY_CHUNK = 4096


class Strategy(str, enum.Enum):
    IMAGE_ONLY = "image-only"
    FROZEN_POSE = "frozen-pose"
    INDEPENDENT = "independent"


@dataclass(frozen=True)
class GuidanceWeights:
    strategy: Strategy
    scale: float = DEFAULT_GUIDANCE_SCALE
    weights: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_config(cls, cfg: GuidanceConfig) -> "GuidanceWeights":
        return cls(Strategy(cfg.strategy), cfg.scale, tuple(cfg.weights))  # type: ignore[arg-type]

    def coefficients(self) -> tuple[float, float, float, float]:
        """Weights over ``(v(p,i), v(p,null), v(null,i), v(null,null))``."""
        s = self.scale
        if self.strategy is Strategy.IMAGE_ONLY:
            return (0.0, 0.0, s, 1.0 - s)
        if self.strategy is Strategy.FROZEN_POSE:
            return (s, 1.0 - s, 0.0, 0.0)
        return self.weights

    def label(self) -> str:
        if self.strategy is Strategy.INDEPENDENT:
            return "independent:" + ",".join(f"{w:g}" for w in self.weights)
        return f"{self.strategy.value}:{self.scale:g}"


def parse_guidance(text: str) -> GuidanceWeights:
    """Parse ``image-only:s``, ``frozen-pose:s``, ``independent:w1,w2,w3,w4``
    or ``preset:A|B|eq7``."""
    name, _, params = text.partition(":")
    try:
        if name == "preset":
            if params == "eq7":
                return GuidanceWeights(Strategy.FROZEN_POSE, DEFAULT_GUIDANCE_SCALE)
            if params in GUIDANCE_PRESETS:
                return GuidanceWeights(Strategy.INDEPENDENT, weights=GUIDANCE_PRESETS[params])
            raise ValueError(f"unknown guidance preset {params!r}")
        strategy = Strategy(name)
        if strategy is Strategy.INDEPENDENT:
            values = tuple(float(v) for v in params.split(","))
            if len(values) != 4:
                raise ValueError("independent guidance needs four weights")
            return GuidanceWeights(strategy, weights=values)  # type: ignore[arg-type]
        scale = float(params) if params else DEFAULT_GUIDANCE_SCALE
        return GuidanceWeights(strategy, scale)
    except ValueError as exc:
        raise ValueError(f"invalid guidance {text!r}: {exc}") from None


@dataclass
class EncodedConditions:
    """Real and null condition tokens for a batch, encoded once per sample."""

    image: Tensor
    pose: Tensor
    null_image: Tensor
    null_pose: Tensor

    def slots(self, use_pose: bool, use_image: bool) -> tuple[Tensor, Tensor]:
        return (self.image if use_image else self.null_image), (self.pose if use_pose else self.null_pose)


def encode_for_sampling(
    model: PoseFlowModel, rasters: Any, P_s: Any, P_e: Any, joints: Any
) -> EncodedConditions:
    with no_grad():
        image, pose = model.encode_conditions(rasters, P_s, P_e, joints)
        batch = image.shape[0]
        null_image, null_pose = model.null_conditions(batch)
    return EncodedConditions(image, pose, null_image, null_pose)


_TERMS = ((True, True), (True, False), (False, True), (False, False))


def guided_velocity(
    model: PoseFlowModel,
    x_t: np.ndarray,
    t: float,
    conditions: EncodedConditions,
    weights: GuidanceWeights,
) -> np.ndarray:
    """Guided velocity in float64; terms with zero weight are not evaluated."""

    def term(use_pose: bool, use_image: bool) -> np.ndarray:
        image, pose = conditions.slots(use_pose, use_image)
        with no_grad():
            return model.velocity(x_t, t, image, pose).data.astype(np.float64)

    s = weights.scale
    if weights.strategy is Strategy.IMAGE_ONLY:
        base = term(False, False)
        return base + s * (term(False, True) - base)
    if weights.strategy is Strategy.FROZEN_POSE:
        base = term(True, False)
        return base + s * (term(True, True) - base)
    if weights.strategy is not Strategy.INDEPENDENT:
        raise ValueError(f"unknown guidance strategy {weights.strategy!r}")
    total = np.zeros(np.shape(x_t), dtype=np.float64)
    for w, (use_pose, use_image) in zip(weights.weights, _TERMS):
        if w != 0.0:
            total = total + w * term(use_pose, use_image)
    return total


def integrate(
    velocity: VelocityFn, x: np.ndarray, steps: int, scheme: str = "euler"
) -> np.ndarray:
    """Integrate from ``t = 1`` to ``t = 0`` in ``steps`` uniform steps.

    Each step adds ``dt * v``. Heun averages the slopes at both ends.

    Args:
        velocity: Callable ``(x, t) -> v`` returning an array shaped like ``x``.
        x: Starting point at ``t = 1``, usually Gaussian noise.
        steps: Number of uniform steps.
        scheme: ``"euler"`` or ``"heun"``.

    Returns:
        The float64 state at ``t = 0``.

    Raises:
        ValueError: If ``steps`` is below 1 or the scheme is unknown.
        NonFiniteError: If a velocity evaluation is not finite.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if scheme not in ("euler", "heun"):
        raise ValueError(f"unknown integration scheme {scheme!r}")
    x = np.array(x, dtype=np.float64)
    dt = 1.0 / steps
    for i in range(steps):
        t = (steps - i) / steps
        v = np.asarray(velocity(x, t), dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise NonFiniteError(f"non-finite velocity at step {i}", step=i)
        if scheme == "heun":
            v_end = np.asarray(velocity(x + dt * v, (steps - i - 1) / steps), dtype=np.float64)
            if not np.all(np.isfinite(v_end)):
                raise NonFiniteError(f"non-finite velocity at step {i}", step=i)
            v = 0.5 * (v + v_end)
        x = x + dt * v
    return x


def sample_latents(
    model: PoseFlowModel,
    conditions: EncodedConditions,
    weights: GuidanceWeights,
    sampler: SamplerConfig,
    rng: RngState,
    normalization: LatentNormalization | None = None,
) -> np.ndarray:
    """Latent sets ``(B, K, L)`` from noise, denormalized when stats are given.

    Args:
        model: Trained condition encoders and flow transformer.
        conditions: Encoded image and pose conditions with their null tokens.
        weights: Guidance strategy and its four velocity coefficients.
        sampler: Step count and integration scheme.
        rng: Stream for the initial noise; one draw of ``(B, K, L)``.
        normalization: Latent statistics to undo, or ``None`` to return
            normalized latents.

    Returns:
        float32 latents ready for :meth:`ShapeVAE.decode_sdf`.
    """
    batch = conditions.image.shape[0]
    x0 = rng.normal((batch, model.num_latents, model.latent_dim))
    out = integrate(
        lambda x, t: guided_velocity(model, x, t, conditions, weights),
        x0, sampler.steps, sampler.scheme,
    )
    logger.debug("sampled %d latent sets with %s", batch, weights.label())
    if normalization is not None:
        return normalization.denormalize(out)
    return out.astype(np.float32)


@dataclass
class ShapeExtraction:
    """Decoded SDF lattice and its zero-isocontour."""

    sdf: np.ndarray
    coords: np.ndarray
    polylines: list[np.ndarray]

    @property
    def collapsed(self) -> bool:
        return not self.polylines


def lattice(grid_res: int) -> tuple[np.ndarray, np.ndarray]:
    """Axis coordinates and ``(res*res, 2)`` points, row index along y."""
    if grid_res < MIN_GRID_RES:
        raise ValueError(f"grid_res must be at least {MIN_GRID_RES}")
    coords = np.linspace(-1.0, 1.0, grid_res)
    gx, gy = np.meshgrid(coords, coords)
    return coords, np.stack([gx, gy], axis=-1).reshape(-1, 2)


def extract_shape_from_sdf(sdf: Callable[[np.ndarray], np.ndarray], grid_res: int) -> ShapeExtraction:
    coords, points = lattice(grid_res)
    values = np.asarray(sdf(points), dtype=np.float32).reshape(grid_res, grid_res)
    return ShapeExtraction(values, coords, marching_squares(values, coords, coords))


def extract_shape(vae: ShapeVAE, latents: np.ndarray, grid_res: int) -> ShapeExtraction:
    """Decode one latent set ``(K, L)`` on the lattice and contour it."""
    lat = Tensor(np.asarray(latents)[None])

    def decode(points: np.ndarray) -> np.ndarray:
        chunks = []
        with no_grad():
            for start in range(0, len(points), _QUERY_CHUNK):
                chunk = points[start : start + _QUERY_CHUNK]
                chunks.append(vae.decode_sdf(lat, chunk[None]).data[0])
        return np.concatenate(chunks)

    shape = extract_shape_from_sdf(decode, grid_res)
    if shape.collapsed:
        logger.warning("decoded SDF has no zero crossing on a %d^2 lattice", grid_res)
    return shape


__all__ = [
    "EncodedConditions",
    "GuidanceWeights",
    "ShapeExtraction",
    "Strategy",
    "VelocityFn",
    "encode_for_sampling",
    "extract_shape",
    "extract_shape_from_sdf",
    "guided_velocity",
    "integrate",
    "lattice",
    "parse_guidance",
    "sample_latents",
]
