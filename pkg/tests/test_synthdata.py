"""Tests for skeletons, capsule signed distances, rasters and datasets."""

import math
from pathlib import Path

import numpy as np
import pytest

from poseflow.config import DATASET_BLOB, DATASET_MANIFEST
from poseflow.errors import DatasetError, DuplicatePairError
from poseflow.nncore import RngState
from poseflow.settings import DataConfig
from poseflow.synthdata import (
    CharacterIdentity,
    Dataset,
    Pose,
    Skeleton,
    SkeletonTopology,
    _enumerate_pairs,
    arm_torso_angles,
    build_dataset,
    build_pair,
    capsule_union_sdf,
    decode_record,
    encode_record,
    forward_kinematics,
    load_dataset,
    occupancy_grid,
    pixel_centers,
    pose_skeleton,
    rasterize,
    read_records,
    sample_surface,
    save_dataset,
)
from tests.conftest import tiny_config

pytestmark = pytest.mark.unit


def _small_data(**update: object) -> DataConfig:
    return tiny_config().data.model_copy(update=update)


class TestCapsuleSdf:
    """Signed distance of capsule unions."""

    def test_capsule_oracle(self) -> None:
        """Distances to a single horizontal capsule match hand values."""
        skeleton = Skeleton.from_segments([[0.0, 0.0]], [[1.0, 0.0]], [0.25])
        sdf = capsule_union_sdf(skeleton, np.array([[0.0, 1.0], [0.5, 0.0], [2.0, 0.0]]))
        np.testing.assert_allclose(sdf, [0.75, -0.25, 0.75], atol=1e-6)

    def test_union_takes_minimum(self) -> None:
        """A point inside either capsule is inside the union."""
        skeleton = Skeleton.from_segments(
            [[0.0, 0.0], [0.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]], [0.1, 0.2]
        )
        sdf = capsule_union_sdf(skeleton, np.array([[0.0, 0.9], [0.9, 0.0], [0.7, 0.7]]))
        np.testing.assert_allclose(sdf[:2], [-0.2, -0.1], atol=1e-6)
        assert sdf[2] > 0.0

    def test_empty_skeleton_is_outside_everywhere(self) -> None:
        skeleton = Skeleton.from_segments(np.zeros((0, 2)), np.zeros((0, 2)), [])
        assert np.all(np.isinf(capsule_union_sdf(skeleton, np.zeros((3, 2)))))


class TestRasterization:
    """Occupancy rasters on pixel centres."""

    def test_pixel_centres(self) -> None:
        """Row 0 is the top of the box and centres sit half a pixel in."""
        centres = pixel_centers(8, 8)
        np.testing.assert_allclose(centres[0, 0], [-0.875, 0.875])
        np.testing.assert_allclose(centres[-1, -1], [0.875, -0.875])

    def test_disk_pixel_count(self) -> None:
        """A radius-0.5 disk covers about pi/4 of the 32x32 grid's area."""

        def disk(points: np.ndarray) -> np.ndarray:
            return np.linalg.norm(points, axis=1) - 0.5

        grid = occupancy_grid(disk, 32, 32)
        centres = pixel_centers(32, 32).reshape(-1, 2)
        brute = sum(1 for p in centres if math.hypot(p[0], p[1]) <= 0.5)
        assert int(grid.sum()) == brute
        assert abs(int(grid.sum()) - 201) <= 10

    def test_minimum_size(self) -> None:
        with pytest.raises(ValueError, match="8x8"):
            occupancy_grid(lambda p: np.zeros(len(p)), 4, 4)

    def test_rasterize_matches_sdf_sign(self) -> None:
        """rasterize marks exactly the pixels with non-positive distance."""
        skeleton = Skeleton.from_segments([[-0.5, 0.0]], [[0.5, 0.3]], [0.2])
        raster = rasterize(skeleton, 16, 16)
        sdf = capsule_union_sdf(skeleton, pixel_centers(16, 16).reshape(-1, 2)).reshape(16, 16)
        np.testing.assert_array_equal(raster == 1, sdf <= 0.0)


class TestKinematics:
    """Forward kinematics and canonical normalization."""

    @pytest.mark.parametrize("angle", [35.0, 45.0, 50.0, 55.0])
    def test_apose_arm_angle(self, topology: SkeletonTopology, angle: float) -> None:
        """Both upper arms form the requested angle with the torso."""
        identity = CharacterIdentity.uniform(topology, 0.05)
        joints = forward_kinematics(topology, identity, Pose.apose(topology, angle))
        left, right = arm_torso_angles(topology, joints)
        assert math.degrees(left) == pytest.approx(angle, abs=1e-6)
        assert math.degrees(right) == pytest.approx(angle, abs=1e-6)

    def test_rest_pose_arms_are_horizontal(self, topology: SkeletonTopology) -> None:
        identity = CharacterIdentity.uniform(topology, 0.05)
        joints = forward_kinematics(topology, identity, Pose.rest(topology))
        left, right = arm_torso_angles(topology, joints)
        assert math.degrees(left) == pytest.approx(90.0)
        assert math.degrees(right) == pytest.approx(90.0)

    def test_canonical_box(self, topology: SkeletonTopology, identity: CharacterIdentity) -> None:
        """The posed union is centred and fills the margin on its longest side."""
        pose = Pose.random(topology, RngState(3, ("pose",)))
        skeleton = pose_skeleton(topology, identity, pose, margin=0.9)
        lo = (np.minimum(skeleton.P_s, skeleton.P_e) - skeleton.radii[:, None]).min(axis=0)
        hi = (np.maximum(skeleton.P_s, skeleton.P_e) + skeleton.radii[:, None]).max(axis=0)
        np.testing.assert_allclose((lo + hi) / 2.0, 0.0, atol=1e-5)
        assert float((hi - lo).max()) / 2.0 == pytest.approx(0.9, abs=1e-5)

    def test_random_pose_within_limits(self, topology: SkeletonTopology) -> None:
        for i in range(5):
            assert Pose.random(topology, RngState(1, ("pose", i))).within_limits(topology)

    def test_pose_beyond_limits_rejected(
        self, topology: SkeletonTopology, identity: CharacterIdentity
    ) -> None:
        angles = [0.0] * topology.n_bones
        angles[topology.bone_index("spine")] = math.radians(90.0)
        with pytest.raises(ValueError, match="joint limits"):
            pose_skeleton(topology, identity, Pose(tuple(angles), (0.0, 0.0)))

    def test_topology_validation(self) -> None:
        """A bone hanging off an unreached joint is rejected."""
        desk = SkeletonTopology.desk()
        with pytest.raises(ValueError, match="unreached"):
            SkeletonTopology(desk.joint_names, desk.bones[2:])


class TestSurfaceSampling:
    """Surface, junction and query samples."""

    def test_surface_points_on_zero_level_set(
        self, topology: SkeletonTopology, identity: CharacterIdentity, rest_pose: Pose
    ) -> None:
        skeleton = pose_skeleton(topology, identity, rest_pose)
        sample = sample_surface(skeleton, topology, 128, 16, 64, RngState(0, ("s",)))
        assert sample.surface_points.shape == (128, 2)
        assert np.all(np.abs(capsule_union_sdf(skeleton, sample.surface_points)) < 2e-4)
        assert sample.sharp_points.shape == (16, 2)
        np.testing.assert_allclose(
            sample.sdf_values, capsule_union_sdf(skeleton, sample.sdf_queries), atol=1e-6
        )

    def test_queries_cover_the_inside(self) -> None:
        """A thick capsule puts a large share of queries inside the shape."""
        topology = SkeletonTopology.single_capsule(length=0.5, radius=0.4)
        identity = CharacterIdentity.uniform(topology, 0.4)
        skeleton = pose_skeleton(topology, identity, Pose.rest(topology))
        sample = sample_surface(skeleton, topology, 256, 8, 2000, RngState(1, ("q",)))
        assert float((sample.sdf_values < 0.0).mean()) >= 0.4

    def test_missing_junctions_fall_back_to_surface(self) -> None:
        """Without junction joints sharp points come from the surface set."""
        topology = SkeletonTopology.single_capsule()
        identity = CharacterIdentity.uniform(topology, 0.2)
        skeleton = pose_skeleton(topology, identity, Pose.rest(topology))
        sample = sample_surface(skeleton, topology, 32, 4, 16, RngState(2))
        assert sample.sharp_fallback
        assert sample.sharp_points.shape == (4, 2)

    def test_sample_counts_validated(self, topology: SkeletonTopology) -> None:
        skeleton = Skeleton.from_segments([[0.0, 0.0]], [[0.5, 0.0]], [0.1])
        with pytest.raises(ValueError):
            sample_surface(skeleton, topology, 0, 4, 8, RngState(0))


class TestPairsAndRecords:
    def test_record_codec_preserves_pair(
        self, topology: SkeletonTopology, identity: CharacterIdentity
    ) -> None:
        """A decoded record reproduces every array of the pair."""
        cfg = _small_data()
        pair = build_pair(
            topology, identity,
            Pose.random(topology, RngState(0, ("a",))), Pose.apose(topology, 45.0),
            cfg, RngState(0, ("pair",)),
            index=3, char_id=1, pose_ids=(0, 7), is_apose=True, split="test",
        )
        decoded = decode_record(encode_record(pair))
        assert (decoded.index, decoded.char_id, decoded.pose_b_id) == (3, 1, 7)
        assert decoded.is_apose and decoded.split == "test"
        np.testing.assert_array_equal(decoded.condition_raster, pair.condition_raster)
        np.testing.assert_array_equal(decoded.target_skeleton.P_e, pair.target_skeleton.P_e)
        np.testing.assert_array_equal(decoded.target_shape.sdf_values, pair.target_shape.sdf_values)
        assert encode_record(decoded) == encode_record(pair)

    def test_pair_enumeration_counts(self) -> None:
        """Identity pairs add the diagonal: 2 characters x 3 x 3 poses."""
        with_identity = _small_data(n_chars=2, poses_per_char=3, allow_identity_pairs=True)
        without = _small_data(n_chars=2, poses_per_char=3)
        assert len(_enumerate_pairs(with_identity, 0)[0]) == 18
        assert len(_enumerate_pairs(without, 0)[0]) == 12

    def test_holdout_characters_form_the_test_split(self) -> None:
        specs, _ = _enumerate_pairs(_small_data(n_chars=3, holdout_chars=1), 0)
        assert {s.char_id for s in specs if s.split == "test"} == {2}

    def test_duplicate_apose_targets(self) -> None:
        """Two targets mapped to the same A-pose collapse to one pair."""
        cfg = _small_data(
            n_chars=1, holdout_chars=0, poses_per_char=3,
            apose_fraction=1.0, apose_angles_deg=(45.0,),
        )
        specs, dropped = _enumerate_pairs(cfg, 0)
        assert len(specs) == 3
        assert dropped == 3
        assert all(s.apose_angle == 45.0 for s in specs)

    def test_strict_duplicates_raise(self) -> None:
        cfg = _small_data(
            n_chars=1, holdout_chars=0, poses_per_char=3,
            apose_fraction=1.0, apose_angles_deg=(45.0,), strict_duplicates=True,
        )
        with pytest.raises(DuplicatePairError):
            _enumerate_pairs(cfg, 0)


class TestDatasets:
    """Dataset files on disk."""

    def test_manifest_counts(self, dataset: Dataset) -> None:
        counts = dataset.manifest["counts"]
        assert counts["records"] == len(dataset) == 6
        assert counts["train"] == len(dataset.split("train")) == 4
        assert counts["test"] == len(dataset.split("test")) == 2
        assert [p.index for p in dataset.pairs] == list(range(6))

    def test_save_is_byte_identical(self, dataset: Dataset, dataset_dir: Path, tmp_path: Path) -> None:
        """Re-encoding a loaded dataset reproduces its files."""
        save_dataset(dataset, tmp_path)
        for name in (DATASET_BLOB, DATASET_MANIFEST):
            assert (tmp_path / name).read_bytes() == (dataset_dir / name).read_bytes()

    def test_checksum_mismatch(self, dataset_dir: Path, tmp_path: Path) -> None:
        """A corrupted blob fails verification."""
        for name in (DATASET_BLOB, DATASET_MANIFEST):
            (tmp_path / name).write_bytes((dataset_dir / name).read_bytes())
        blob = bytearray((tmp_path / DATASET_BLOB).read_bytes())
        blob[-1] ^= 0x01
        (tmp_path / DATASET_BLOB).write_bytes(bytes(blob))
        with pytest.raises(DatasetError, match="checksum"):
            read_records(tmp_path)

    def test_missing_dataset(self, tmp_path: Path) -> None:
        with pytest.raises(DatasetError, match="missing"):
            load_dataset(tmp_path)

    @pytest.mark.slow
    def test_output_independent_of_workers(self, tmp_path: Path) -> None:
        """Parallel generation writes the same bytes as a single worker."""
        cfg = tiny_config()
        build_dataset(cfg.data, cfg.seed, tmp_path / "one", workers=1)
        build_dataset(cfg.data, cfg.seed, tmp_path / "two", workers=2)
        for name in (DATASET_BLOB, DATASET_MANIFEST):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    def test_seed_changes_output(self, dataset_dir: Path, tmp_path: Path) -> None:
        cfg = tiny_config(seed=8)
        build_dataset(cfg.data, cfg.seed, tmp_path)
        assert (tmp_path / DATASET_BLOB).read_bytes() != (dataset_dir / DATASET_BLOB).read_bytes()
