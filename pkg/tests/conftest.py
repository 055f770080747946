"""
Shared pytest configuration and fixtures for all tests.
"""

import logging
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
import pytest

from poseflow.layers import ParameterStore
from poseflow.nncore import Tensor, check_gradients, precision
from poseflow.settings import (
    CondConfig,
    DataConfig,
    EvalConfig,
    ExperimentConfig,
    FlowConfig,
    SamplerConfig,
    TrainConfig,
    VaeConfig,
    dump_config,
)
from poseflow.synthdata import (
    CharacterIdentity,
    Dataset,
    Pose,
    SkeletonTopology,
    build_dataset,
    identity_for,
    load_dataset,
)
from tests.types import GradCheckFunc, RandomizeFunc

# Gradient checks in float64 must agree to this relative error
GRAD_TOLERANCE = 1e-6


def tiny_config(seed: int = 7) -> ExperimentConfig:
    """A configuration small enough to generate, train and sample in seconds."""
    return ExperimentConfig(
        seed=seed,
        data=DataConfig(
            n_chars=3,
            poses_per_char=2,
            holdout_chars=1,
            n_surface=64,
            n_sharp=16,
            n_queries=128,
            raster_size=16,
            apose_fraction=0.0,
        ),
        vae=VaeConfig(
            num_latents=4,
            latent_dim=4,
            width=16,
            heads=2,
            encoder_depth=1,
            decoder_depth=1,
            num_freqs=2,
            steps=2,
            batch_size=2,
            queries_per_step=32,
            log_every=1,
        ),
        cond=CondConfig(
            image_dim=16,
            pose_dim=16,
            patch_size=4,
            image_blocks=1,
            heads=2,
            num_freqs=2,
            hidden_dim=16,
        ),
        flow=FlowConfig(width=16, depth=2, heads=2, mlp_ratio=2, time_freqs=4),
        train=TrainConfig(steps=2, batch_size=2, log_every=1),
        sampler=SamplerConfig(steps=2),
        eval=EvalConfig(n_points=64, grid_res=16, n_eval=2),
    )


@pytest.fixture
def topology() -> SkeletonTopology:
    """The 10-bone desk humanoid."""
    return SkeletonTopology.desk()


@pytest.fixture
def identity(topology: SkeletonTopology) -> CharacterIdentity:
    """A sampled character identity."""
    return identity_for(11, 0, topology)


@pytest.fixture
def rest_pose(topology: SkeletonTopology) -> Pose:
    return Pose.rest(topology)


@pytest.fixture
def config() -> ExperimentConfig:
    """The tiny experiment configuration."""
    return tiny_config()


@pytest.fixture
def config_file(tmp_path: Path, config: ExperimentConfig) -> Path:
    """The tiny configuration written as a JSON file."""
    path = tmp_path / "config.json"
    path.write_text(dump_config(config), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """A tiny dataset written once per session."""
    directory = tmp_path_factory.mktemp("dataset")
    cfg = tiny_config()
    build_dataset(cfg.data, cfg.seed, directory, workers=1)
    return directory


@pytest.fixture(scope="session")
def dataset(dataset_dir: Path) -> Dataset:
    return load_dataset(dataset_dir)


@pytest.fixture
def grad_check() -> GradCheckFunc:
    """Fixture running :func:`check_gradients` in float64 on random inputs.

    Returns:
        A function taking ``fn`` and input shapes and returning the worst
        relative error between analytic and numeric gradients.
    """

    def _check(
        fn: Callable[..., Tensor],
        shapes: Sequence[tuple[int, ...]],
        seed: int = 0,
        scale: float = 1.0,
    ) -> float:
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            inputs = [Tensor(rng.normal(0.0, scale, size=s)) for s in shapes]
            return check_gradients(fn, inputs, eps=1e-6)

    return _check


@pytest.fixture
def randomize_params() -> RandomizeFunc:
    """Fixture that fills every parameter of a store with random values.

    Zero-initialized output layers make a fresh model's velocity exactly
    zero, which hides most behaviour under test.
    """

    def _randomize(store: ParameterStore, seed: int = 0, std: float = 0.2) -> None:
        rng = np.random.default_rng(seed)
        for _, param in store.items():
            param.data[...] = rng.normal(0.0, std, size=param.shape).astype(param.data.dtype)

    return _randomize


@pytest.fixture(autouse=True)
def quiet_matplotlib() -> None:
    """Keep matplotlib's font manager from flooding captured logs."""
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
