"""Tests for the shape autoencoder."""

import numpy as np
import pytest

from poseflow.errors import ShapeMismatchError
from poseflow.layers import ParameterStore
from poseflow.nncore import RngState, Tensor, check_gradients, mse_loss, no_grad, precision
from poseflow.settings import VaeConfig
from poseflow.shapevae import (
    LatentNormalization,
    ShapeVAE,
    encode_latents,
    evaluate_vae,
    make_batch,
    sign_accuracy,
    surface_recall,
    train_vae,
    vae_loss,
)
from poseflow.synthdata import Dataset
from tests.conftest import GRAD_TOLERANCE, tiny_config
from tests.types import RandomizeFunc

pytestmark = pytest.mark.unit


@pytest.fixture
def vae_config() -> VaeConfig:
    return tiny_config().vae


@pytest.fixture
def store() -> ParameterStore:
    return ParameterStore(seed=3)


@pytest.fixture
def vae(vae_config: VaeConfig, store: ParameterStore) -> ShapeVAE:
    return ShapeVAE(vae_config, store)


class TestShapeVAE:
    def test_shapes(self, vae: ShapeVAE, vae_config: VaeConfig) -> None:
        """Latents are K x L per shape and SDFs follow the query count."""
        points = np.random.default_rng(0).uniform(-1, 1, size=(2, 20, 2))
        queries = np.random.default_rng(1).uniform(-1, 1, size=(2, 9, 2))
        with no_grad():
            latents, mean, logvar = vae.encode(points)
            sdf = vae.decode_sdf(latents, queries)
        assert latents.shape == (2, vae_config.num_latents, vae_config.latent_dim)
        assert logvar is None
        np.testing.assert_array_equal(latents.data, mean.data)
        assert sdf.shape == (2, 9)

    def test_unbatched_inputs(self, vae: ShapeVAE, vae_config: VaeConfig) -> None:
        """A single point set gives unbatched latents and SDF values."""
        with no_grad():
            latents, _, _ = vae.encode(np.zeros((5, 2)))
            sdf = vae.decode_sdf(latents, np.zeros((3, 2)))
        assert latents.shape == (vae_config.num_latents, vae_config.latent_dim)
        assert sdf.shape == (3,)

    def test_initial_output_is_head_bias(self, vae: ShapeVAE) -> None:
        """The zero-initialized head predicts its bias everywhere."""
        vae.head.fc2.bias.data[...] = 0.25
        with no_grad():
            latents, _, _ = vae.encode(np.random.default_rng(0).uniform(-1, 1, size=(1, 12, 2)))
            sdf = vae.decode_sdf(latents, np.random.default_rng(1).uniform(-1, 1, size=(1, 7, 2)))
        np.testing.assert_allclose(sdf.data, 0.25)

    def test_encoder_ignores_point_order(
        self, vae: ShapeVAE, store: ParameterStore, randomize_params: RandomizeFunc
    ) -> None:
        """Shuffling the input points leaves the latents unchanged."""
        randomize_params(store, seed=1)
        points = np.random.default_rng(0).uniform(-1, 1, size=(1, 16, 2))
        perm = np.random.default_rng(2).permutation(16)
        with no_grad():
            a = vae.encode(points)[0].data
            b = vae.encode(points[:, perm])[0].data
        np.testing.assert_allclose(a, b, atol=1e-5)

    def test_decoder_follows_query_order(
        self, vae: ShapeVAE, store: ParameterStore, randomize_params: RandomizeFunc
    ) -> None:
        randomize_params(store, seed=4)
        latents = np.random.default_rng(0).normal(size=(1, 4, 4))
        queries = np.random.default_rng(1).uniform(-1, 1, size=(1, 6, 2))
        perm = np.array([5, 3, 1, 0, 2, 4])
        with no_grad():
            a = vae.decode_sdf(latents, queries).data
            b = vae.decode_sdf(latents, queries[:, perm]).data
        np.testing.assert_allclose(b, a[:, perm], atol=1e-5)

    def test_decoder_gradients(self, vae_config: VaeConfig, randomize_params: RandomizeFunc) -> None:
        """SDF gradients with respect to latents and queries match finite differences."""
        rng = np.random.default_rng(2)
        with precision(np.float64):
            store = ParameterStore(seed=3)
            vae = ShapeVAE(vae_config, store)
            randomize_params(store, seed=6)
            latents = Tensor(rng.normal(size=(2, vae_config.num_latents, vae_config.latent_dim)))
            queries = Tensor(rng.uniform(-1.0, 1.0, size=(2, 5, 2)))
            target = rng.normal(0.0, 0.1, size=(2, 5))
            error = check_gradients(
                lambda lat, qry: mse_loss(vae.decode_sdf(lat, qry), target), [latents, queries], eps=1e-6
            )
        assert error < GRAD_TOLERANCE

    def test_point_dimension_checked(self, vae: ShapeVAE) -> None:
        with pytest.raises(ShapeMismatchError):
            vae.encode(np.zeros((1, 5, 3)))

    def test_point_count_checked(self, vae_config: VaeConfig, store: ParameterStore) -> None:
        """An encoder built for 6 points rejects 5 and 7."""
        vae = ShapeVAE(vae_config, store, num_points=6)
        with no_grad():
            latents, _, _ = vae.encode(np.zeros((1, 6, 2)))
        assert latents.shape == (1, vae_config.num_latents, vae_config.latent_dim)
        for count in (5, 7):
            with pytest.raises(ShapeMismatchError, match="point count"):
                vae.encode(np.zeros((1, count, 2)))

    def test_batch_sizes_must_agree(self, vae: ShapeVAE) -> None:
        with pytest.raises(ShapeMismatchError):
            vae.decode_sdf(np.zeros((2, 4, 4)), np.zeros((3, 5, 2)))

    def test_posterior_sampling(self) -> None:
        """With a KL weight the latents are sampled around the mean."""
        cfg = tiny_config().vae.model_copy(update={"kl_weight": 1e-3})
        vae = ShapeVAE(cfg, ParameterStore(seed=3))
        points = np.random.default_rng(0).uniform(-1, 1, size=(1, 8, 2))
        with no_grad():
            latents, mean, logvar = vae.encode(points, RngState(0))
        assert logvar is not None
        assert not np.allclose(latents.data, mean.data)


class TestLatentNormalization:
    def test_fit_standardizes(self) -> None:
        """Normalized latents have zero mean and unit deviation per dimension."""
        latents = np.random.default_rng(0).normal(3.0, 2.0, size=(10, 4, 5))
        norm = LatentNormalization.fit(latents)
        out = norm.normalize(latents).reshape(-1, 5)
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-4)
        np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-4)
        np.testing.assert_allclose(norm.denormalize(norm.normalize(latents)), latents, atol=1e-4)

    def test_constant_dimension_uses_floor(self) -> None:
        """A dimension without spread does not divide by zero."""
        latents = np.zeros((3, 2, 2))
        norm = LatentNormalization.fit(latents)
        assert np.all(norm.std > 0.0)
        assert np.all(np.isfinite(norm.normalize(latents)))

    def test_dict_round_trip(self) -> None:
        norm = LatentNormalization.fit(np.random.default_rng(1).normal(size=(4, 3, 2)))
        again = LatentNormalization.from_dict(norm.to_dict())
        np.testing.assert_array_equal(again.mean, norm.mean)
        np.testing.assert_array_equal(again.std, norm.std)

    def test_identity(self) -> None:
        latents = np.random.default_rng(2).normal(size=(2, 3, 4)).astype(np.float32)
        np.testing.assert_array_equal(LatentNormalization.identity(4).normalize(latents), latents)


class TestMetricsAndTraining:
    def test_sign_accuracy(self) -> None:
        """Zero counts as inside on both sides."""
        assert sign_accuracy(np.array([-1.0, 0.0, 2.0, 3.0]), np.array([-0.5, -0.1, 1.0, -1.0])) == 0.75

    def test_surface_recall(self) -> None:
        assert surface_recall(np.array([0.0, 0.001, 0.5, -0.002]), tol=0.01) == 0.75

    def test_batch_shapes(self, dataset: Dataset, vae_config: VaeConfig) -> None:
        pairs = dataset.split("train")[:2]
        batch = make_batch(pairs, 32, RngState(0))
        n_points = len(pairs[0].target_shape.surface_points) + len(pairs[0].target_shape.sharp_points)
        assert batch.points.shape == (2, n_points, 2)
        assert batch.queries.shape == (2, 32, 2)
        assert batch.values.shape == (2, 32)

    def test_loss_is_finite_and_differentiable(self, dataset: Dataset, vae: ShapeVAE) -> None:
        batch = make_batch(dataset.split("train")[:2], 16, RngState(0))
        loss, parts = vae_loss(vae, batch)
        loss.backward()
        assert np.isfinite(parts["recon"])
        assert vae.head.fc2.weight.grad is not None

    @pytest.mark.slow
    def test_train_vae(self, dataset: Dataset, vae_config: VaeConfig) -> None:
        """A short run records one loss per step and fits normalization."""
        result = train_vae(dataset.split("train"), dataset.split("test"), vae_config, RngState(7, ("vae",)))
        assert len(result.losses) == vae_config.steps
        assert all(np.isfinite(result.losses))
        assert result.normalization.mean.shape == (vae_config.latent_dim,)
        assert 0.0 <= result.metrics["sign_accuracy"] <= 1.0
        latents = encode_latents(result.model, dataset.split("test"))
        assert latents.shape == (2, vae_config.num_latents, vae_config.latent_dim)
        cfg = tiny_config().data
        assert result.model.num_points == cfg.n_surface + cfg.n_sharp

    def test_train_vae_is_deterministic(self, dataset: Dataset, vae_config: VaeConfig) -> None:
        train, test = dataset.split("train"), dataset.split("test")
        a = train_vae(train, test, vae_config, RngState(7, ("vae",)))
        b = train_vae(train, test, vae_config, RngState(7, ("vae",)))
        assert a.losses == b.losses
        for name, param in a.store.items():
            np.testing.assert_array_equal(param.data, b.store[name].data)

    def test_evaluate_without_pairs(self, vae: ShapeVAE) -> None:
        assert np.isnan(evaluate_vae(vae, [])["sign_accuracy"])

    def test_train_without_pairs(self, vae_config: VaeConfig) -> None:
        with pytest.raises(ValueError, match="no training pairs"):
            train_vae([], [], vae_config, RngState(0))
