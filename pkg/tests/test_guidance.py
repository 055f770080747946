"""Tests for guidance weights, the ODE sampler and shape extraction."""

import math

import numpy as np
import pytest

from poseflow.contour import is_closed, polyline_area
from poseflow.errors import NonFiniteError
from poseflow.flowdit import PoseFlowModel
from poseflow.guidance import (
    EncodedConditions,
    GuidanceWeights,
    Strategy,
    extract_shape,
    extract_shape_from_sdf,
    guided_velocity,
    integrate,
    lattice,
    parse_guidance,
    sample_latents,
)
from poseflow.layers import ParameterStore
from poseflow.nncore import RngState, Tensor
from poseflow.settings import ExperimentConfig, SamplerConfig
from poseflow.shapevae import LatentNormalization, ShapeVAE
from tests.types import RandomizeFunc

pytestmark = pytest.mark.unit


@pytest.fixture
def guided_setup(
    config: ExperimentConfig, randomize_params: RandomizeFunc
) -> tuple[PoseFlowModel, EncodedConditions, np.ndarray]:
    """A randomized model, random condition tokens and a latent state."""
    model = PoseFlowModel.from_config(
        config, ParameterStore(seed=0),
        latent_dim=config.vae.latent_dim, num_latents=config.vae.num_latents,
    )
    randomize_params(model.store, seed=1)
    rng = np.random.default_rng(2)
    null_image, null_pose = model.null_conditions(1)
    conditions = EncodedConditions(
        image=Tensor(rng.normal(size=null_image.shape)),
        pose=Tensor(rng.normal(size=null_pose.shape)),
        null_image=null_image,
        null_pose=null_pose,
    )
    x = rng.normal(size=(1, config.vae.num_latents, config.vae.latent_dim))
    return model, conditions, x


class TestParseGuidance:
    def test_presets(self) -> None:
        assert parse_guidance("preset:A").weights == (7.5, -6.5, 0.0, 0.0)
        assert parse_guidance("preset:B").weights == (14.5, -7.0, -3.0, -3.0)
        eq7 = parse_guidance("preset:eq7")
        assert eq7.strategy is Strategy.FROZEN_POSE
        assert eq7.scale == 7.5

    def test_strategies(self) -> None:
        assert parse_guidance("image-only:3").coefficients() == (0.0, 0.0, 3.0, -2.0)
        assert parse_guidance("frozen-pose:2.5").coefficients() == (2.5, -1.5, 0.0, 0.0)
        assert parse_guidance("frozen-pose").scale == 7.5
        assert parse_guidance("independent:1,2,3,4").coefficients() == (1.0, 2.0, 3.0, 4.0)

    def test_labels(self) -> None:
        assert parse_guidance("frozen-pose:7.5").label() == "frozen-pose:7.5"
        assert parse_guidance("preset:A").label() == "independent:7.5,-6.5,0,0"

    @pytest.mark.parametrize(
        "text", ["preset:C", "independent:1,2,3", "sideways:2", "frozen-pose:abc"]
    )
    def test_invalid(self, text: str) -> None:
        with pytest.raises(ValueError, match="invalid guidance"):
            parse_guidance(text)


class TestGuidedVelocity:
    def test_independent_matches_frozen_pose(
        self, guided_setup: tuple[PoseFlowModel, EncodedConditions, np.ndarray]
    ) -> None:
        """Weights (s, 1-s, 0, 0) reproduce frozen-pose guidance."""
        model, conditions, x = guided_setup
        frozen = guided_velocity(model, x, 0.6, conditions, GuidanceWeights(Strategy.FROZEN_POSE, 7.5))
        weights = GuidanceWeights(Strategy.INDEPENDENT, weights=(7.5, -6.5, 0.0, 0.0))
        independent = guided_velocity(model, x, 0.6, conditions, weights)
        np.testing.assert_allclose(independent, frozen, atol=1e-5)

    def test_independent_matches_image_only(
        self, guided_setup: tuple[PoseFlowModel, EncodedConditions, np.ndarray]
    ) -> None:
        """Weights (0, 0, s, 1-s) reproduce image-only guidance."""
        model, conditions, x = guided_setup
        image_only = guided_velocity(model, x, 0.3, conditions, GuidanceWeights(Strategy.IMAGE_ONLY, 4.0))
        weights = GuidanceWeights(Strategy.INDEPENDENT, weights=(0.0, 0.0, 4.0, -3.0))
        independent = guided_velocity(model, x, 0.3, conditions, weights)
        np.testing.assert_allclose(independent, image_only, atol=1e-5)

    def test_unit_scale_is_the_conditional_velocity(
        self, guided_setup: tuple[PoseFlowModel, EncodedConditions, np.ndarray]
    ) -> None:
        """With s = 1 frozen-pose guidance is plain v(pose, image)."""
        model, conditions, x = guided_setup
        guided = guided_velocity(model, x, 0.5, conditions, GuidanceWeights(Strategy.FROZEN_POSE, 1.0))
        plain = guided_velocity(
            model, x, 0.5, conditions, GuidanceWeights(Strategy.INDEPENDENT, weights=(1.0, 0.0, 0.0, 0.0))
        )
        np.testing.assert_allclose(guided, plain, atol=1e-6)

    def test_sample_latents_is_seeded(
        self, guided_setup: tuple[PoseFlowModel, EncodedConditions, np.ndarray]
    ) -> None:
        model, conditions, _ = guided_setup
        sampler = SamplerConfig(steps=3)
        weights = parse_guidance("preset:A")
        a = sample_latents(model, conditions, weights, sampler, RngState(5, ("sample", 0)))
        b = sample_latents(model, conditions, weights, sampler, RngState(5, ("sample", 0)))
        c = sample_latents(model, conditions, weights, sampler, RngState(5, ("sample", 1)))
        assert a.shape == (1, model.num_latents, model.latent_dim)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_sample_latents_denormalizes(
        self, guided_setup: tuple[PoseFlowModel, EncodedConditions, np.ndarray]
    ) -> None:
        model, conditions, _ = guided_setup
        sampler = SamplerConfig(steps=2)
        weights = parse_guidance("frozen-pose:2")
        norm = LatentNormalization(
            np.full(model.latent_dim, 3.0, np.float32), np.full(model.latent_dim, 2.0, np.float32)
        )
        raw = sample_latents(model, conditions, weights, sampler, RngState(1))
        scaled = sample_latents(model, conditions, weights, sampler, RngState(1), norm)
        np.testing.assert_allclose(scaled, raw * 2.0 + 3.0, rtol=1e-5, atol=1e-4)


class TestIntegrate:
    def test_constant_field_is_exact(self) -> None:
        """Euler integrates a constant velocity exactly."""
        x0 = np.array([[1.0, -2.0]])
        out = integrate(lambda x, t: np.full_like(x, 0.5), x0, steps=7)
        np.testing.assert_allclose(out, x0 + 0.5, atol=1e-12)

    def test_straight_path_single_step(self) -> None:
        """For a straight path one step lands where 64 steps do: on the data."""
        rng = np.random.default_rng(0)
        x1 = rng.normal(size=(2, 4, 3))
        x0 = rng.normal(size=(2, 4, 3))

        def velocity(x: np.ndarray, t: float) -> np.ndarray:
            return (x1 - x) / t

        one = integrate(velocity, x0, steps=1)
        many = integrate(velocity, x0, steps=64)
        np.testing.assert_allclose(one, x1, atol=1e-12)
        np.testing.assert_allclose(many, x1, atol=1e-9)

    def test_heun_is_more_accurate(self) -> None:
        """On dx = x dt the second-order scheme beats Euler."""
        x0 = np.ones((1, 1))
        euler = float(integrate(lambda x, t: x, x0, 64, "euler")[0, 0])
        heun = float(integrate(lambda x, t: x, x0, 64, "heun")[0, 0])
        assert abs(heun - math.e) < abs(euler - math.e) / 10.0
        assert abs(heun - math.e) < 1e-3

    def test_time_grid(self) -> None:
        """Euler evaluates t = 1, (S-1)/S, ..., 1/S."""
        seen: list[float] = []

        def velocity(x: np.ndarray, t: float) -> np.ndarray:
            seen.append(t)
            return np.zeros_like(x)

        integrate(velocity, np.zeros(1), steps=4)
        assert seen == [1.0, 0.75, 0.5, 0.25]

    def test_non_finite_velocity(self) -> None:
        with pytest.raises(NonFiniteError) as exc_info:
            integrate(lambda x, t: np.full_like(x, np.nan), np.zeros(2), steps=3)
        assert exc_info.value.step == 0

    @pytest.mark.parametrize("steps,scheme", [(0, "euler"), (4, "rk4")])
    def test_invalid_arguments(self, steps: int, scheme: str) -> None:
        with pytest.raises(ValueError):
            integrate(lambda x, t: x, np.zeros(1), steps, scheme)


class TestShapeExtraction:
    def test_disk(self) -> None:
        """A disk's contour is one closed CCW loop on the circle."""
        shape = extract_shape_from_sdf(lambda p: np.linalg.norm(p, axis=1) - 0.5, 64)
        assert shape.sdf.shape == (64, 64)
        assert len(shape.polylines) == 1
        loop = shape.polylines[0]
        assert is_closed(loop)
        half_cell = (2.0 / 63) / 2.0
        assert np.all(np.abs(np.linalg.norm(loop, axis=1) - 0.5) < half_cell)
        assert polyline_area(loop) == pytest.approx(math.pi * 0.25, rel=0.02)

    def test_empty_field_collapses(self) -> None:
        shape = extract_shape_from_sdf(lambda p: np.ones(len(p)), 16)
        assert shape.collapsed

    def test_minimum_lattice(self) -> None:
        with pytest.raises(ValueError, match="grid_res"):
            lattice(8)

    def test_lattice_layout(self) -> None:
        """Rows run along y and columns along x."""
        coords, points = lattice(16)
        grid = points.reshape(16, 16, 2)
        assert grid[0, 1, 0] == coords[1] and grid[0, 1, 1] == coords[0]
        assert grid[1, 0, 1] == coords[1]

    def test_fresh_vae_decodes_constant(self, config: ExperimentConfig) -> None:
        """The zero-initialized head yields a constant positive field and no contour."""
        vae = ShapeVAE(config.vae, ParameterStore(seed=0))
        vae.head.fc2.bias.data[...] = 0.1
        latents = np.zeros((config.vae.num_latents, config.vae.latent_dim), np.float32)
        shape = extract_shape(vae, latents, 16)
        np.testing.assert_allclose(shape.sdf, 0.1)
        assert shape.collapsed
