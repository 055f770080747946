"""Tests for the flow transformer and rectified-flow training."""

from pathlib import Path

import numpy as np
import pytest

from poseflow.checkpoint import save_arrays
from poseflow.errors import CheckpointError, ShapeMismatchError
from poseflow.flowdit import (
    FlowBatch,
    PoseFlowModel,
    flow_loss,
    flow_matching_loss,
    interpolate,
    load_flow,
    sample_condition_masks,
    sample_timesteps,
    save_flow,
    train_flow,
    velocity_target,
)
from poseflow.layers import ParameterStore
from poseflow.nncore import RngState, Tensor, check_gradients, no_grad, precision
from poseflow.settings import ExperimentConfig
from poseflow.shapevae import LatentNormalization, ShapeVAE
from poseflow.synthdata import Dataset
from tests.types import RandomizeFunc

pytestmark = pytest.mark.unit


def _model(config: ExperimentConfig, seed: int = 0) -> PoseFlowModel:
    return PoseFlowModel.from_config(
        config, ParameterStore(seed=seed),
        latent_dim=config.vae.latent_dim, num_latents=config.vae.num_latents,
    )


def _conditions(model: PoseFlowModel, config: ExperimentConfig, batch: int = 2) -> tuple[Tensor, Tensor]:
    rng = np.random.default_rng(0)
    c_image = Tensor(rng.normal(size=(batch, model.encoder.num_image_tokens, config.cond.image_dim)))
    c_pose = Tensor(rng.normal(size=(batch, model.encoder.num_pose_tokens, config.cond.pose_dim)))
    return c_image, c_pose


class TestStraightPath:
    def test_interpolate_endpoints(self) -> None:
        """t = 0 is the data, t = 1 the noise."""
        x0 = np.full((2, 3), -1.0)
        x1 = np.full((2, 3), 2.0)
        np.testing.assert_allclose(interpolate(x0, x1, 0.0), x1)
        np.testing.assert_allclose(interpolate(x0, x1, 1.0), x0)
        np.testing.assert_allclose(interpolate(x0, x1, np.array([0.5, 0.25]))[:, 0], [0.5, 1.25])

    @pytest.mark.parametrize("t", [-0.1, 1.5, float("nan")])
    def test_t_outside_unit_interval(self, t: float) -> None:
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            interpolate(np.zeros(3), np.ones(3), t)

    def test_step_along_velocity_follows_path(self) -> None:
        """Moving from t to t - dt by dt * v lands on the path at t - dt."""
        rng = np.random.default_rng(0)
        x0, x1 = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
        stepped = interpolate(x0, x1, 0.7) + 0.3 * velocity_target(x0, x1)
        np.testing.assert_allclose(stepped, interpolate(x0, x1, 0.4), atol=1e-12)

    def test_perfect_predictor_has_zero_loss(self) -> None:
        rng = np.random.default_rng(1)
        x0, x1 = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 3, 4))
        assert flow_matching_loss(Tensor(x1 - x0), x0, x1).item() == pytest.approx(0.0, abs=1e-12)

    def test_shapes_must_agree(self) -> None:
        with pytest.raises(ShapeMismatchError):
            velocity_target(np.zeros((2, 3)), np.zeros((3, 2)))


class TestSampling:
    @pytest.mark.parametrize("law", ["uniform", "logit_normal"])
    def test_timesteps_in_unit_interval(self, law: str) -> None:
        t = sample_timesteps(RngState(0), 1000, law)  # type: ignore[arg-type]
        assert np.all((t >= 0.0) & (t <= 1.0))

    def test_unknown_law(self) -> None:
        with pytest.raises(ValueError, match="unknown t-sampling law"):
            sample_timesteps(RngState(0), 4, "cosine")  # type: ignore[arg-type]

    def test_dropout_frequencies(self) -> None:
        """Independent coins give each keep/drop combination a quarter of the draws."""
        keep_image, keep_pose = sample_condition_masks(RngState(3, ("dropout",)), 10_000, 0.5, 0.5)
        for image, pose in ((True, True), (True, False), (False, True), (False, False)):
            rate = float(np.mean((keep_image == image) & (keep_pose == pose)))
            assert abs(rate - 0.25) < 0.02

    def test_no_dropout(self) -> None:
        keep_image, keep_pose = sample_condition_masks(RngState(0), 100, 0.0, 0.0)
        assert keep_image.all() and keep_pose.all()


class TestFlowDiT:
    def test_initial_velocity_is_zero(self, config: ExperimentConfig) -> None:
        """Zero-initialized output layers predict zero velocity."""
        model = _model(config)
        c_image, c_pose = _conditions(model, config)
        x = np.random.default_rng(1).normal(size=(2, config.vae.num_latents, config.vae.latent_dim))
        with no_grad():
            v = model.velocity(x, np.array([0.3, 0.9]), c_image, c_pose)
        assert v.shape == x.shape
        assert np.all(v.data == 0.0)

    def test_latent_permutation_equivariance(
        self, config: ExperimentConfig, randomize_params: RandomizeFunc
    ) -> None:
        """Permuting latent tokens permutes the predicted velocity."""
        model = _model(config)
        randomize_params(model.store, seed=2)
        c_image, c_pose = _conditions(model, config, batch=1)
        x = np.random.default_rng(1).normal(size=(1, config.vae.num_latents, config.vae.latent_dim))
        perm = np.array([2, 0, 3, 1])
        with no_grad():
            base = model.velocity(x, 0.5, c_image, c_pose).data
            permuted = model.velocity(x[:, perm], 0.5, c_image, c_pose).data
        np.testing.assert_allclose(permuted, base[:, perm], atol=1e-5)

    def test_condition_token_order_is_irrelevant(
        self, config: ExperimentConfig, randomize_params: RandomizeFunc
    ) -> None:
        """Shuffling condition tokens leaves the velocity unchanged."""
        model = _model(config)
        randomize_params(model.store, seed=3)
        c_image, c_pose = _conditions(model, config, batch=1)
        x = np.random.default_rng(1).normal(size=(1, config.vae.num_latents, config.vae.latent_dim))
        image_perm = np.random.default_rng(4).permutation(c_image.shape[1])
        pose_perm = np.random.default_rng(5).permutation(c_pose.shape[1])
        with no_grad():
            base = model.velocity(x, 0.25, c_image, c_pose).data
            shuffled = model.velocity(
                x, 0.25, Tensor(c_image.data[:, image_perm]), Tensor(c_pose.data[:, pose_perm])
            ).data
        np.testing.assert_allclose(shuffled, base, atol=1e-5)

    def test_time_changes_velocity(self, config: ExperimentConfig, randomize_params: RandomizeFunc) -> None:
        model = _model(config)
        randomize_params(model.store, seed=6)
        c_image, c_pose = _conditions(model, config, batch=1)
        x = np.zeros((1, config.vae.num_latents, config.vae.latent_dim))
        with no_grad():
            a = model.velocity(x, 0.1, c_image, c_pose).data
            b = model.velocity(x, 0.9, c_image, c_pose).data
        assert not np.allclose(a, b)

    def test_condition_batch_checked(self, config: ExperimentConfig) -> None:
        model = _model(config)
        c_image, c_pose = _conditions(model, config, batch=3)
        x = np.zeros((2, config.vae.num_latents, config.vae.latent_dim))
        with pytest.raises(ShapeMismatchError):
            model.velocity(x, 0.5, c_image, c_pose)

    def test_latent_width_checked(self, config: ExperimentConfig) -> None:
        model = _model(config)
        c_image, c_pose = _conditions(model, config)
        with pytest.raises(ShapeMismatchError):
            model.velocity(np.zeros((2, 4, 7)), 0.5, c_image, c_pose)


class TestTraining:
    def test_flow_loss_and_gradients(self, config: ExperimentConfig, dataset: Dataset) -> None:
        """A batch loss is finite and yields gradients for the output layer."""
        model = _model(config)
        pairs = dataset.split("train")[:2]
        latents = np.random.default_rng(0).normal(size=(2, config.vae.num_latents, config.vae.latent_dim))
        batch = FlowBatch.from_pairs(pairs, latents)
        loss, parts = flow_loss(model, batch, config.train, RngState(0))
        loss.backward()
        assert np.isfinite(loss.item())
        assert 0.0 <= parts["image_kept"] <= 1.0
        assert model.dit.latent_out.weight.grad is not None

    @pytest.mark.slow
    def test_train_save_load(self, config: ExperimentConfig, dataset: Dataset, tmp_path: Path) -> None:
        """A trained model survives a save/load cycle bit for bit."""
        vae = ShapeVAE(config.vae, ParameterStore(seed=1))
        norm = LatentNormalization.identity(config.vae.latent_dim)
        result = train_flow(dataset.split("train"), vae, norm, config, RngState(7, ("flow",)))
        assert len(result.losses) == config.train.steps
        save_flow(str(tmp_path), result.model, norm, config, step=config.train.steps)
        model, loaded_norm, loaded_config = load_flow(str(tmp_path))
        assert loaded_config == config
        np.testing.assert_array_equal(loaded_norm.std, norm.std)
        for name, param in result.store.items():
            np.testing.assert_array_equal(model.store[name].data, param.data)

    def test_training_is_deterministic(self, config: ExperimentConfig, dataset: Dataset) -> None:
        vae = ShapeVAE(config.vae, ParameterStore(seed=1))
        norm = LatentNormalization.identity(config.vae.latent_dim)
        a = train_flow(dataset.split("train"), vae, norm, config, RngState(7, ("flow",)))
        b = train_flow(dataset.split("train"), vae, norm, config, RngState(7, ("flow",)))
        assert a.losses == b.losses

    def test_load_rejects_other_checkpoints(self, tmp_path: Path) -> None:
        save_arrays(tmp_path, {"w": np.zeros(2)}, seed=0, step=0, extra={"kind": "vae"})
        with pytest.raises(CheckpointError, match="not a flow checkpoint"):
            load_flow(str(tmp_path))

    def test_train_without_pairs(self, config: ExperimentConfig) -> None:
        vae = ShapeVAE(config.vae, ParameterStore(seed=1))
        with pytest.raises(ValueError, match="no training pairs"):
            train_flow([], vae, LatentNormalization.identity(4), config, RngState(0))


class TestModelGradients:
    """Finite-difference checks through the whole two-block transformer."""

    @pytest.mark.parametrize(
        "dtype,eps,tolerance",
        [(np.float64, 1e-6, 1e-5), (np.float32, 1e-2, 1e-2)],
    )
    def test_flow_matching_loss_gradients(
        self,
        config: ExperimentConfig,
        randomize_params: RandomizeFunc,
        dtype: type,
        eps: float,
        tolerance: float,
    ) -> None:
        """Gradients for the noisy latents and for weights at both ends and inside a block."""
        rng = np.random.default_rng(8)
        shape = (2, config.vae.num_latents, config.vae.latent_dim)
        x0, x1 = rng.normal(size=shape), rng.normal(size=shape)
        t = np.array([0.3, 0.8])
        with precision(dtype):
            model = _model(config, seed=2)
            randomize_params(model.store, seed=5)
            c_image, c_pose = _conditions(model, config)
            x_t = Tensor(interpolate(x0, x1, t))
            dit = model.dit
            inputs = [x_t, dit.latent_in.weight, dit.blocks[1].latent_proj.weight, dit.latent_out.weight]

            def loss(x: Tensor, *_: Tensor) -> Tensor:
                return flow_matching_loss(model.velocity(x, t, c_image, c_pose), x0, x1)

            error = check_gradients(loss, inputs, eps=eps)
        assert error < tolerance
