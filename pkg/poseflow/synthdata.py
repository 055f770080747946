# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""Procedural capsule characters and the cross-pose training dataset.

A character is a union of capsules, one per bone of a skeleton tree.
Posing runs forward kinematics from the pelvis and maps the result into
the canonical box [-1, 1]^D with a similarity transform. Ground truth is
analytic: the signed distance of the capsule union.

Datasets are written as ``manifest.json`` plus ``records.bin``. Each
record is a header of little-endian u32 words followed by little-endian
float32 arrays and a bit-packed condition raster.
"""

import hashlib
import json
import logging
import math
import os
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np

from poseflow.checkpoint import atomic_write_bytes, canonical_json
from poseflow.config import (
    AXIAL_LIMIT_DEG,
    CANONICAL_MARGIN,
    DATASET_BLOB,
    DATASET_FORMAT,
    DATASET_MANIFEST,
    FLAG_APOSE,
    FLAG_SHARP_FALLBACK,
    FLAG_TEST_SPLIT,
    JUNCTION_EPS,
    LIMB_LIMIT_DEG,
    NEAR_SURFACE_SIGMA,
    PROJECTION_DAMPING,
    PROJECTION_MAX_FAILURE_RATE,
    PROJECTION_MAX_ITERS,
    PROJECTION_MAX_ROUNDS,
    PROJECTION_TOLERANCE,
    RECORD_HEADER_WORDS,
    SCHEMA_VERSION,
    SHARP_MAX_ROUNDS,
    UNIFORM_QUERY_FRACTION,
)
from poseflow.errors import (
    DatasetError,
    DegenerateBoneError,
    DuplicatePairError,
    SamplingError,
)
from poseflow.nncore import RngState
from poseflow.settings import DataConfig

logger = logging.getLogger(__name__)

Split = Literal["train", "test"]


# -- skeleton topology ------------------------------------------------------


@dataclass(frozen=True)
class Bone:
    name: str
    parent_joint: int
    child_joint: int
    rest_direction: tuple[float, ...]
    length: float
    radius: float
    limit_deg: float


@dataclass(frozen=True)
class SkeletonTopology:
    """Bones of a skeleton tree rooted at joint 0.

    Bones are ordered so that every bone appears after the bone ending at
    its parent joint.
    """

    joint_names: tuple[str, ...]
    bones: tuple[Bone, ...]

    def __post_init__(self) -> None:
        reached = {0}
        for bone in self.bones:
            if bone.parent_joint not in reached:
                raise ValueError(f"bone {bone.name} starts at an unreached joint")
            if bone.child_joint in reached:
                raise ValueError(f"joint {bone.child_joint} has two parents")
            if not math.isclose(float(np.linalg.norm(bone.rest_direction)), 1.0, abs_tol=1e-9):
                raise ValueError(f"bone {bone.name} rest direction is not a unit vector")
            reached.add(bone.child_joint)
        if reached != set(range(len(self.joint_names))):
            raise ValueError("skeleton does not reach every joint")

    @property
    def n_bones(self) -> int:
        return len(self.bones)

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    @property
    def dim(self) -> int:
        return len(self.bones[0].rest_direction)

    def bone_index(self, name: str) -> int:
        for i, bone in enumerate(self.bones):
            if bone.name == name:
                return i
        raise KeyError(name)

    def parent_bone(self, index: int) -> int:
        """Index of the bone ending where bone ``index`` starts, or -1."""
        start = self.bones[index].parent_joint
        for i, bone in enumerate(self.bones):
            if bone.child_joint == start:
                return i
        return -1

    def junction_joints(self) -> list[int]:
        """Joints shared by two or more bones."""
        counts = np.zeros(self.n_joints, dtype=int)
        for bone in self.bones:
            counts[bone.parent_joint] += 1
            counts[bone.child_joint] += 1
        return [int(j) for j in np.flatnonzero(counts >= 2)]

    def incident_bones(self, joint: int) -> list[int]:
        return [
            i for i, b in enumerate(self.bones) if joint in (b.parent_joint, b.child_joint)
        ]

    @classmethod
    def desk(cls) -> "SkeletonTopology":
        """The 10-bone planar humanoid."""
        limb, axial = LIMB_LIMIT_DEG, AXIAL_LIMIT_DEG
        splay = (math.sin(math.radians(15.0)), -math.cos(math.radians(15.0)))
        left_leg = (-splay[0], splay[1])
        right_leg = (splay[0], splay[1])
        return cls(
            joint_names=(
                "pelvis", "chest", "head_top",
                "l_elbow", "l_hand", "r_elbow", "r_hand",
                "l_knee", "l_foot", "r_knee", "r_foot",
            ),
            bones=(
                Bone("spine", 0, 1, (0.0, 1.0), 0.35, 0.09, axial),
                Bone("head", 1, 2, (0.0, 1.0), 0.20, 0.10, axial),
                Bone("l_upper_arm", 1, 3, (-1.0, 0.0), 0.25, 0.05, limb),
                Bone("l_forearm", 3, 4, (-1.0, 0.0), 0.22, 0.045, limb),
                Bone("r_upper_arm", 1, 5, (1.0, 0.0), 0.25, 0.05, limb),
                Bone("r_forearm", 5, 6, (1.0, 0.0), 0.22, 0.045, limb),
                Bone("l_thigh", 0, 7, left_leg, 0.30, 0.065, limb),
                Bone("l_shin", 7, 8, left_leg, 0.28, 0.055, limb),
                Bone("r_thigh", 0, 9, right_leg, 0.30, 0.065, limb),
                Bone("r_shin", 9, 10, right_leg, 0.28, 0.055, limb),
            ),
        )

    @classmethod
    def single_capsule(cls, length: float = 0.5, radius: float = 0.2) -> "SkeletonTopology":
        return cls(
            joint_names=("start", "end"),
            bones=(Bone("body", 0, 1, (1.0, 0.0), length, radius, LIMB_LIMIT_DEG),),
        )


# -- identities and poses -----------------------------------------------------


@dataclass(frozen=True)
class CharacterIdentity:
    """Per-bone capsule radii (model units) and the values they derive from."""

    bone_radii: tuple[float, ...]
    torso_width: float
    head_radius: float
    limb_scale: float
    seed: int

    def __post_init__(self) -> None:
        if min(self.bone_radii) <= 0.0:
            raise ValueError("capsule radii must be positive")

    @classmethod
    def sample(cls, topology: SkeletonTopology, seed: int) -> "CharacterIdentity":
        rng = RngState(seed, ("identity",))
        scales = rng.uniform(topology.n_bones, 0.75, 1.3)
        torso = float(rng.uniform(1, 0.8, 1.4)[0])
        head = float(rng.uniform(1, 0.08, 0.12)[0])
        limb_scale = float(rng.uniform(1, 0.9, 1.1)[0])
        radii = [b.radius * float(s) for b, s in zip(topology.bones, scales)]
        for i, bone in enumerate(topology.bones):
            if bone.name == "spine":
                radii[i] = bone.radius * torso
            elif bone.name == "head":
                radii[i] = head
        return cls(tuple(radii), torso, head, limb_scale, int(seed))

    @classmethod
    def uniform(cls, topology: SkeletonTopology, radius: float) -> "CharacterIdentity":
        return cls((float(radius),) * topology.n_bones, 1.0, float(radius), 1.0, 0)


def identity_for(seed: int, char_id: int, topology: SkeletonTopology) -> CharacterIdentity:
    """The identity of character ``char_id`` in a dataset built with ``seed``."""
    identity_seed = RngState(seed, ("data", "identity", char_id)).child_seed()
    return CharacterIdentity.sample(topology, identity_seed)


@dataclass(frozen=True)
class Pose:
    """Per-bone rotations relative to the parent bone plus a root transform."""

    angles: tuple[float, ...]
    root_translation: tuple[float, ...]
    root_rotation: float = 0.0

    @classmethod
    def rest(cls, topology: SkeletonTopology) -> "Pose":
        return cls((0.0,) * topology.n_bones, (0.0,) * topology.dim)

    @classmethod
    def random(
        cls,
        topology: SkeletonTopology,
        rng: RngState,
        root_rotation_deg: float = 0.0,
    ) -> "Pose":
        limits = np.radians([b.limit_deg for b in topology.bones])
        angles = rng.uniform(topology.n_bones, -1.0, 1.0) * limits
        translation = rng.uniform(topology.dim, -0.25, 0.25)
        rotation = float(rng.uniform(1, -1.0, 1.0)[0]) * math.radians(root_rotation_deg)
        return cls(tuple(float(a) for a in angles), tuple(float(t) for t in translation), rotation)

    @classmethod
    def apose(cls, topology: SkeletonTopology, arm_angle_deg: float) -> "Pose":
        """Rest pose with both upper arms lowered to ``arm_angle_deg`` from the torso.

        The desk topology's arms rest horizontally, i.e. at 90 degrees.
        """
        lift = math.radians(90.0 - arm_angle_deg)
        angles = [0.0] * topology.n_bones
        angles[topology.bone_index("l_upper_arm")] = lift
        angles[topology.bone_index("r_upper_arm")] = -lift
        return cls(tuple(angles), (0.0,) * topology.dim)

    def within_limits(self, topology: SkeletonTopology) -> bool:
        return all(
            abs(a) <= math.radians(b.limit_deg) + 1e-12
            for a, b in zip(self.angles, topology.bones)
        )


# -- skeletons and signed distances ---------------------------------------------


@dataclass(frozen=True)
class Skeleton:
    """Posed bones in the canonical box.

    ``P_s``/``P_e`` are the bone start and end points, ``joints`` the joint
    positions and ``radii`` the capsule radii, all float32 in canonical
    units. ``scale``/``offset`` map world coordinates into the box.
    """

    P_s: np.ndarray
    P_e: np.ndarray
    joints: np.ndarray
    radii: np.ndarray
    scale: float = 1.0
    offset: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=np.float32))

    def __post_init__(self) -> None:
        if self.P_s.shape != self.P_e.shape or self.P_s.ndim != 2:
            raise ValueError(f"bone arrays disagree: {self.P_s.shape} vs {self.P_e.shape}")
        if self.radii.shape != (self.P_s.shape[0],):
            raise ValueError(f"expected {self.P_s.shape[0]} radii, got {self.radii.shape}")

    @property
    def n_bones(self) -> int:
        return int(self.P_s.shape[0])

    @property
    def dim(self) -> int:
        return int(self.P_s.shape[1])

    @classmethod
    def from_segments(
        cls,
        starts: Sequence[Sequence[float]],
        ends: Sequence[Sequence[float]],
        radii: Sequence[float],
        dim: int = 2,
    ) -> "Skeleton":
        """A bare skeleton from explicit segments (identity transform)."""
        P_s = np.asarray(starts, dtype=np.float32).reshape(len(radii), dim)
        P_e = np.asarray(ends, dtype=np.float32).reshape(len(radii), dim)
        joints = np.concatenate([P_s, P_e])
        return cls(
            P_s, P_e, joints, np.asarray(radii, dtype=np.float32), 1.0,
            np.zeros(P_s.shape[1], dtype=np.float32),
        )


def _rotate(vectors: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    out = np.array(vectors, dtype=np.float64)
    x, y = out[..., 0].copy(), out[..., 1].copy()
    out[..., 0] = c * x - s * y
    out[..., 1] = s * x + c * y
    return out


def forward_kinematics(
    topology: SkeletonTopology, identity: CharacterIdentity, pose: Pose
) -> np.ndarray:
    """World-space joint positions (float64, ``J x D``)."""
    joints = np.zeros((topology.n_joints, topology.dim))
    joints[0] = pose.root_translation
    global_angle = np.zeros(topology.n_bones)
    for i, bone in enumerate(topology.bones):
        parent = topology.parent_bone(i)
        inherited = global_angle[parent] if parent >= 0 else pose.root_rotation
        global_angle[i] = inherited + pose.angles[i]
        direction = _rotate(np.asarray(bone.rest_direction), global_angle[i])
        joints[bone.child_joint] = (
            joints[bone.parent_joint] + bone.length * identity.limb_scale * direction
        )
    return joints


def pose_skeleton(
    topology: SkeletonTopology,
    identity: CharacterIdentity,
    pose: Pose,
    margin: float = CANONICAL_MARGIN,
) -> Skeleton:
    """Pose the character and normalize it into the canonical box.

    The capsule union's bounding box is centred at the origin and its
    largest half-extent scaled to ``margin``.
    """
    if not pose.within_limits(topology):
        raise ValueError("pose angles exceed the joint limits")
    world = forward_kinematics(topology, identity, pose)
    radii = np.asarray(identity.bone_radii, dtype=np.float64)
    parents = np.array([b.parent_joint for b in topology.bones])
    children = np.array([b.child_joint for b in topology.bones])
    starts, ends = world[parents], world[children]
    lo = (np.minimum(starts, ends) - radii[:, None]).min(axis=0)
    hi = (np.maximum(starts, ends) + radii[:, None]).max(axis=0)
    half = float((hi - lo).max()) / 2.0
    if half <= 0.0:
        raise DegenerateBoneError("character has zero extent")
    scale = float(np.float32(margin / half))
    offset = (-(lo + hi) / 2.0 * scale).astype(np.float32)
    canonical = (world * scale + offset.astype(np.float64)).astype(np.float32)
    P_s, P_e = canonical[parents], canonical[children]
    lengths = np.linalg.norm(P_e - P_s, axis=1)
    if np.any(lengths <= 0.0):
        bad = topology.bones[int(np.argmin(lengths))].name
        raise DegenerateBoneError(f"bone {bad} has zero length after normalization")
    return Skeleton(P_s, P_e, canonical, (radii * scale).astype(np.float32), scale, offset)


def capsule_distances(
    P_s: np.ndarray, P_e: np.ndarray, radii: np.ndarray, points: np.ndarray
) -> np.ndarray:
    """Per-capsule signed distances, float64 ``(n_points, n_bones)``."""
    p = np.asarray(points, dtype=np.float64)[:, None, :]
    a = np.asarray(P_s, dtype=np.float64)[None]
    b = np.asarray(P_e, dtype=np.float64)[None]
    ba = b - a
    pa = p - a
    denom = np.maximum((ba * ba).sum(-1), np.finfo(np.float64).tiny)
    h = np.clip((pa * ba).sum(-1) / denom, 0.0, 1.0)
    closest = pa - h[..., None] * ba
    return np.sqrt((closest * closest).sum(-1)) - np.asarray(radii, dtype=np.float64)[None]


def capsule_union_sdf(skeleton: Skeleton, points: np.ndarray) -> np.ndarray:
    """Signed distance of the capsule union at ``points`` (negative inside)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if skeleton.n_bones == 0:
        return np.full(pts.shape[0], np.inf)
    return capsule_distances(skeleton.P_s, skeleton.P_e, skeleton.radii, pts).min(axis=1)


def arm_torso_angles(topology: SkeletonTopology, joints: np.ndarray) -> tuple[float, float]:
    """Angles (radians) between each upper arm and the downward torso direction."""
    spine = topology.bones[topology.bone_index("spine")]
    down = joints[spine.parent_joint] - joints[spine.child_joint]
    result = []
    for name in ("l_upper_arm", "r_upper_arm"):
        arm = topology.bones[topology.bone_index(name)]
        vec = joints[arm.child_joint] - joints[arm.parent_joint]
        cosine = float(np.dot(vec, down) / (np.linalg.norm(vec) * np.linalg.norm(down)))
        result.append(math.acos(max(-1.0, min(1.0, cosine))))
    return result[0], result[1]


# -- surface, sharp and query sampling --------------------------------------------


@dataclass(frozen=True)
class ShapeSample:
    surface_points: np.ndarray
    sharp_points: np.ndarray
    sdf_queries: np.ndarray
    sdf_values: np.ndarray
    sharp_fallback: bool = False


def _project(skeleton: Skeleton, points: np.ndarray, rng: RngState) -> tuple[np.ndarray, np.ndarray]:
    """Damped gradient steps onto the zero level set; returns points and a converged mask."""
    p = np.array(points, dtype=np.float64)
    a = skeleton.P_s.astype(np.float64)
    ba = skeleton.P_e.astype(np.float64) - a
    radii = skeleton.radii.astype(np.float64)
    done = np.zeros(len(p), dtype=bool)
    for _ in range(PROJECTION_MAX_ITERS):
        active = ~done
        if not active.any():
            break
        q = p[active]
        pa = q[:, None, :] - a[None]
        h = np.clip((pa * ba[None]).sum(-1) / (ba * ba).sum(-1)[None], 0.0, 1.0)
        offset = pa - h[..., None] * ba[None]
        dist = np.sqrt((offset * offset).sum(-1))
        nearest = np.argmin(dist - radii[None], axis=1)
        rows = np.arange(len(q))
        sdf = dist[rows, nearest] - radii[nearest]
        converged = np.abs(sdf) < PROJECTION_TOLERANCE
        direction = offset[rows, nearest]
        norm = dist[rows, nearest]
        on_axis = norm < 1e-12
        if on_axis.any():
            direction[on_axis] = rng.normal((int(on_axis.sum()), p.shape[1]))
            norm = np.where(on_axis, np.linalg.norm(direction, axis=1), norm)
        step = (PROJECTION_DAMPING * sdf / norm)[:, None] * direction
        q = np.where(converged[:, None], q, q - step)
        p[active] = q
        index = np.flatnonzero(active)
        done[index[converged]] = True
    final = capsule_union_sdf(skeleton, p)
    return p, np.abs(final) < PROJECTION_TOLERANCE


def _surface_seeds(skeleton: Skeleton, n: int, rng: RngState) -> np.ndarray:
    lengths = np.linalg.norm(skeleton.P_e - skeleton.P_s, axis=1).astype(np.float64)
    weights = lengths + math.pi * skeleton.radii.astype(np.float64)
    bones = rng.generator.choice(skeleton.n_bones, size=n, p=weights / weights.sum())
    u = rng.uniform(n)[:, None]
    axis = skeleton.P_s[bones] + u * (skeleton.P_e[bones] - skeleton.P_s[bones])
    direction = rng.normal((n, skeleton.dim))
    direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-12)
    reach = skeleton.radii[bones] * (1.0 + rng.normal(n, 0.1))
    return axis + direction * reach[:, None]


def project_to_surface(skeleton: Skeleton, n: int, rng: RngState) -> np.ndarray:
    """``n`` points on the union surface, float64."""
    seeds = _surface_seeds(skeleton, n, rng)
    points, ok = _project(skeleton, seeds, rng)
    failure_rate = 1.0 - float(ok.mean())
    if failure_rate > PROJECTION_MAX_FAILURE_RATE:
        raise SamplingError(
            f"surface projection failed for {failure_rate:.1%} of seeds",
            {"failure_rate": failure_rate, "seeds": float(n)},
        )
    for _ in range(PROJECTION_MAX_ROUNDS):
        if ok.all():
            break
        bad = np.flatnonzero(~ok)
        retry, retry_ok = _project(skeleton, _surface_seeds(skeleton, len(bad), rng), rng)
        points[bad] = retry
        ok[bad] = retry_ok
    if not ok.all():
        raise SamplingError(
            f"{int((~ok).sum())} surface seeds did not converge after re-seeding",
            {"failed": float((~ok).sum()), "seeds": float(n)},
        )
    return points


def _junction_points(
    skeleton: Skeleton,
    topology: SkeletonTopology,
    n_k: int,
    rng: RngState,
) -> np.ndarray:
    junctions = topology.junction_joints()
    if not junctions:
        return np.zeros((0, skeleton.dim))
    reach = np.array(
        [skeleton.radii[topology.incident_bones(j)].astype(np.float64).mean() for j in junctions]
    )
    found: list[np.ndarray] = []
    count = 0
    for _ in range(SHARP_MAX_ROUNDS):
        if count >= n_k:
            break
        m = 4 * n_k
        pick = rng.integers(0, len(junctions), m)
        direction = rng.normal((m, skeleton.dim))
        direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-12)
        centers = skeleton.joints[np.asarray(junctions)[pick]].astype(np.float64)
        seeds = centers + direction * (reach[pick] * rng.uniform(m, 0.5, 1.5))[:, None]
        points, ok = _project(skeleton, seeds, rng)
        per_bone = np.sort(
            capsule_distances(skeleton.P_s, skeleton.P_e, skeleton.radii, points), axis=1
        )
        sharp = ok & (per_bone[:, 1] - per_bone[:, 0] < JUNCTION_EPS)
        found.append(points[sharp])
        count += int(sharp.sum())
    return np.concatenate(found)[:n_k] if found else np.zeros((0, skeleton.dim))


def sample_surface(
    skeleton: Skeleton,
    topology: SkeletonTopology,
    n_s: int,
    n_k: int,
    n_q: int,
    rng: RngState,
) -> ShapeSample:
    """Surface, sharp and SDF query samples of one posed character."""
    if n_s < 1 or n_k < 1:
        raise ValueError("n_s and n_k must be at least 1")
    surface = project_to_surface(skeleton, n_s, rng.substream("surface"))
    sharp = _junction_points(skeleton, topology, n_k, rng.substream("sharp"))
    fallback = len(sharp) < n_k
    if fallback:
        logger.warning(
            "found %d of %d junction points; filling from the surface set", len(sharp), n_k
        )
        fill = rng.substream("sharp_fallback").choice(n_s, n_k - len(sharp))
        sharp = np.concatenate([sharp, surface[fill]])

    query_rng = rng.substream("queries")
    n_uniform = int(round(n_q * UNIFORM_QUERY_FRACTION))
    uniform = query_rng.uniform((n_uniform, skeleton.dim), -1.0, 1.0)
    anchors = surface[query_rng.choice(n_s, n_q - n_uniform)]
    near = np.clip(
        anchors + query_rng.normal(anchors.shape, NEAR_SURFACE_SIGMA), -1.0, 1.0
    )
    queries = np.concatenate([uniform, near]).astype(np.float32)
    values = capsule_union_sdf(skeleton, queries).astype(np.float32)
    return ShapeSample(
        surface.astype(np.float32),
        sharp.astype(np.float32),
        queries,
        values,
        fallback,
    )


# -- rasterization ------------------------------------------------------------


def pixel_centers(width: int, height: int) -> np.ndarray:
    """Pixel-centre coordinates ``(H, W, 2)``; row 0 is the top of the box."""
    xs = -1.0 + (np.arange(width) + 0.5) * (2.0 / width)
    ys = 1.0 - (np.arange(height) + 0.5) * (2.0 / height)
    grid_x, grid_y = np.meshgrid(xs, ys)
    return np.stack([grid_x, grid_y], axis=-1)


def occupancy_grid(
    sdf: Callable[[np.ndarray], np.ndarray], width: int, height: int
) -> np.ndarray:
    """1 where ``sdf`` at the pixel centre is <= 0, else 0."""
    if width < 8 or height < 8:
        raise ValueError("raster must be at least 8x8")
    centers = pixel_centers(width, height).reshape(-1, 2)
    inside = np.asarray(sdf(centers)) <= 0.0
    return inside.reshape(height, width).astype(np.uint8)


def rasterize(skeleton: Skeleton, width: int, height: int) -> np.ndarray:
    if skeleton.dim != 2:
        raise ValueError("rasterization is defined for 2D skeletons only")
    return occupancy_grid(lambda p: capsule_union_sdf(skeleton, p), width, height)


# -- training pairs -----------------------------------------------------------


@dataclass(frozen=True)
class TrainingPair:
    """Condition raster in pose A, target skeleton and shape in pose B."""

    index: int
    char_id: int
    pose_a_id: int
    pose_b_id: int
    is_apose: bool
    split: Split
    condition_raster: np.ndarray
    condition_skeleton: Skeleton
    target_skeleton: Skeleton
    target_shape: ShapeSample


def build_pair(
    topology: SkeletonTopology,
    identity: CharacterIdentity,
    pose_a: Pose,
    pose_b: Pose,
    cfg: DataConfig,
    rng: RngState,
    *,
    index: int = 0,
    char_id: int = 0,
    pose_ids: tuple[int, int] = (0, 1),
    is_apose: bool = False,
    split: Split = "train",
) -> TrainingPair:
    condition = pose_skeleton(topology, identity, pose_a, cfg.margin)
    target = pose_skeleton(topology, identity, pose_b, cfg.margin)
    raster = rasterize(condition, cfg.raster_size, cfg.raster_size)
    shape = sample_surface(target, topology, cfg.n_surface, cfg.n_sharp, cfg.n_queries, rng)
    return TrainingPair(
        index, char_id, pose_ids[0], pose_ids[1], is_apose, split,
        raster, condition, target, shape,
    )


# -- record codec -----------------------------------------------------------------


def _skeleton_arrays(s: Skeleton) -> list[np.ndarray]:
    return [s.P_s, s.P_e, s.joints, s.radii, np.array([s.scale]), s.offset]


def encode_record(pair: TrainingPair) -> bytes:
    target, shape = pair.target_skeleton, pair.target_shape
    flags = (
        (FLAG_APOSE if pair.is_apose else 0)
        | (FLAG_SHARP_FALLBACK if shape.sharp_fallback else 0)
        | (FLAG_TEST_SPLIT if pair.split == "test" else 0)
    )
    height, width = pair.condition_raster.shape
    header = np.array(
        [
            pair.index, pair.char_id, pair.pose_a_id, pair.pose_b_id, flags,
            target.n_bones, target.dim, target.joints.shape[0],
            len(shape.surface_points), len(shape.sharp_points), len(shape.sdf_queries),
            width, height,
        ],
        dtype="<u4",
    )
    floats = _skeleton_arrays(target) + [
        shape.surface_points, shape.sharp_points, shape.sdf_queries, shape.sdf_values,
    ] + _skeleton_arrays(pair.condition_skeleton)
    body = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in floats)
    bits = np.packbits(pair.condition_raster.reshape(-1).astype(np.uint8), bitorder="little").tobytes()
    bits += b"\x00" * (-len(bits) % 4)
    return header.tobytes() + body + bits


def decode_record(payload: bytes) -> TrainingPair:
    header = np.frombuffer(payload, dtype="<u4", count=RECORD_HEADER_WORDS)
    index, char_id, pose_a, pose_b, flags, n, d, j, n_s, n_k, n_q, width, height = (
        int(v) for v in header
    )
    cursor = RECORD_HEADER_WORDS * 4

    def take(*shape: int) -> np.ndarray:
        nonlocal cursor
        count = int(np.prod(shape))
        values = np.frombuffer(payload, dtype="<f4", count=count, offset=cursor)
        cursor += 4 * count
        return values.reshape(shape).astype(np.float32)

    def take_skeleton() -> Skeleton:
        P_s, P_e, joints, radii = take(n, d), take(n, d), take(j, d), take(n)
        scale, offset = float(take(1)[0]), take(d)
        return Skeleton(P_s, P_e, joints, radii, scale, offset)

    target = take_skeleton()
    shape = ShapeSample(
        take(n_s, d), take(n_k, d), take(n_q, d), take(n_q), bool(flags & FLAG_SHARP_FALLBACK)
    )
    condition = take_skeleton()
    n_bits = width * height
    packed = np.frombuffer(payload, dtype=np.uint8, count=(n_bits + 7) // 8, offset=cursor)
    raster = np.unpackbits(packed, count=n_bits, bitorder="little").reshape(height, width)
    return TrainingPair(
        index, char_id, pose_a, pose_b, bool(flags & FLAG_APOSE),
        "test" if flags & FLAG_TEST_SPLIT else "train",
        raster, condition, target, shape,
    )


# -- datasets ---------------------------------------------------------------------


@dataclass
class Dataset:
    manifest: dict[str, Any]
    pairs: list[TrainingPair]

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, index: int) -> TrainingPair:
        return self.pairs[index]

    def split(self, name: Split) -> list[TrainingPair]:
        return [p for p in self.pairs if p.split == name]

    @property
    def seed(self) -> int:
        return int(self.manifest["seed"])

    @property
    def config(self) -> DataConfig:
        return DataConfig.model_validate(self.manifest["config"])


@dataclass(frozen=True)
class _PairSpec:
    char_id: int
    pose_a: int
    pose_b: int
    apose_angle: float | None
    split: Split


def _enumerate_pairs(cfg: DataConfig, seed: int) -> tuple[list[_PairSpec], int]:
    specs: list[_PairSpec] = []
    seen: set[tuple[int, int, int]] = set()
    duplicates = 0
    first_test = cfg.n_chars - cfg.holdout_chars
    for c in range(cfg.n_chars):
        split: Split = "test" if c >= first_test else "train"
        for a in range(cfg.poses_per_char):
            for b in range(cfg.poses_per_char):
                if a == b and not cfg.allow_identity_pairs:
                    continue
                coin = RngState(seed, ("data", "apose", c, a, b))
                angle: float | None = None
                pose_b = b
                if coin.uniform(1)[0] < cfg.apose_fraction:
                    k = int(coin.integers(0, len(cfg.apose_angles_deg)))
                    angle = cfg.apose_angles_deg[k]
                    pose_b = cfg.poses_per_char + k
                key = (c, a, pose_b)
                if key in seen:
                    if cfg.strict_duplicates:
                        raise DuplicatePairError(f"duplicate pair (char={c}, A={a}, B={pose_b})")
                    duplicates += 1
                    continue
                seen.add(key)
                specs.append(_PairSpec(c, a, pose_b, angle, split))
    if duplicates:
        logger.warning("dropped %d duplicate pairs", duplicates)
    return specs, duplicates


def _pose_for(cfg: DataConfig, seed: int, topology: SkeletonTopology, char_id: int, pose_id: int) -> Pose:
    rng = RngState(seed, ("data", "pose", char_id, pose_id))
    return Pose.random(topology, rng, cfg.root_rotation_deg)


def _build_record(job: tuple[int, _PairSpec, dict[str, Any], int]) -> bytes:
    index, spec, cfg_dict, seed = job
    cfg = DataConfig.model_validate(cfg_dict)
    topology = SkeletonTopology.desk()
    identity = identity_for(seed, spec.char_id, topology)
    pose_a = _pose_for(cfg, seed, topology, spec.char_id, spec.pose_a)
    if spec.apose_angle is not None:
        pose_b = Pose.apose(topology, spec.apose_angle)
    else:
        pose_b = _pose_for(cfg, seed, topology, spec.char_id, spec.pose_b)
    rng = RngState(seed, ("data", "pair", spec.char_id, spec.pose_a, spec.pose_b))
    pair = build_pair(
        topology, identity, pose_a, pose_b, cfg, rng,
        index=index, char_id=spec.char_id, pose_ids=(spec.pose_a, spec.pose_b),
        is_apose=spec.apose_angle is not None, split=spec.split,
    )
    return encode_record(pair)


def write_dataset(
    directory: str | os.PathLike[str],
    records: Sequence[bytes],
    manifest: dict[str, Any],
) -> dict[str, Any]:
    """Write encoded records and a manifest; returns the manifest written."""
    out = Path(directory)
    payload = b"".join(records)
    offsets = np.cumsum([0] + [len(r) for r in records[:-1]]).tolist() if records else []
    document = dict(manifest)
    document.update(
        {
            "format": DATASET_FORMAT,
            "schema_version": SCHEMA_VERSION,
            "blob": DATASET_BLOB,
            "record_offsets": [int(o) for o in offsets],
            "record_lengths": [len(r) for r in records],
            "sha256": hashlib.sha256(payload).hexdigest(),
        }
    )
    atomic_write_bytes(out / DATASET_BLOB, payload)
    atomic_write_bytes(out / DATASET_MANIFEST, canonical_json(document))
    return document


def build_dataset(
    cfg: DataConfig, seed: int, directory: str | os.PathLike[str], workers: int | None = None
) -> dict[str, Any]:
    """Generate every pair for ``cfg`` and write the dataset; returns the manifest.

    Each pair draws from its own substream keyed by (character, pose A,
    pose B), so the output bytes do not depend on ``workers``.
    """
    if cfg.dim != 2 or cfg.n_bones != SkeletonTopology.desk().n_bones:
        raise ValueError("dataset generation supports the 10-bone 2D topology only")
    specs, duplicates = _enumerate_pairs(cfg, seed)
    cfg_dict = cfg.model_dump(mode="json")
    jobs = [(i, spec, cfg_dict, seed) for i, spec in enumerate(specs)]
    n_workers = cfg.workers if workers is None else workers
    logger.info("building %d pairs with %d worker(s)", len(jobs), n_workers)
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            records = list(pool.map(_build_record, jobs, chunksize=max(1, len(jobs) // (4 * n_workers))))
    else:
        records = [_build_record(job) for job in jobs]

    fallbacks = sum(
        1 for r in records
        if int(np.frombuffer(r, dtype="<u4", count=5)[4]) & FLAG_SHARP_FALLBACK
    )
    manifest = {
        "config": cfg_dict,
        "seed": int(seed),
        "counts": {
            "records": len(records),
            "train": sum(1 for s in specs if s.split == "train"),
            "test": sum(1 for s in specs if s.split == "test"),
            "characters": cfg.n_chars,
            "apose_pairs": sum(1 for s in specs if s.apose_angle is not None),
            "duplicates_dropped": duplicates,
            "sharp_fallbacks": fallbacks,
        },
        "apose_angles": {
            str(i): s.apose_angle for i, s in enumerate(specs) if s.apose_angle is not None
        },
    }
    return write_dataset(directory, records, manifest)


def read_records(directory: str | os.PathLike[str]) -> tuple[dict[str, Any], list[bytes]]:
    """Raw records and manifest, after checksum verification."""
    root = Path(directory)
    try:
        manifest = json.loads((root / DATASET_MANIFEST).read_text(encoding="utf-8"))
        payload = (root / manifest.get("blob", DATASET_BLOB)).read_bytes()
    except FileNotFoundError as exc:
        raise DatasetError(f"dataset file missing: {exc.filename}") from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"dataset manifest is not valid JSON: {exc}") from None
    if manifest.get("format") != DATASET_FORMAT:
        raise DatasetError(f"{root} is not a poseflow dataset")
    if hashlib.sha256(payload).hexdigest() != manifest.get("sha256"):
        raise DatasetError(f"checksum mismatch for {root / DATASET_BLOB}")
    records = [
        payload[o : o + n]
        for o, n in zip(manifest["record_offsets"], manifest["record_lengths"])
    ]
    return manifest, records


def load_dataset(directory: str | os.PathLike[str]) -> Dataset:
    manifest, records = read_records(directory)
    pairs = [decode_record(r) for r in records]
    logger.debug("loaded %d pairs from %s", len(pairs), directory)
    return Dataset(manifest, pairs)


def save_dataset(dataset: Dataset, directory: str | os.PathLike[str]) -> dict[str, Any]:
    """Re-encode a loaded dataset; the bytes match the files it was read from."""
    return write_dataset(directory, [encode_record(p) for p in dataset.pairs], dataset.manifest)


__all__ = [
    "Bone",
    "CharacterIdentity",
    "Dataset",
    "Pose",
    "ShapeSample",
    "Skeleton",
    "SkeletonTopology",
    "TrainingPair",
    "arm_torso_angles",
    "build_dataset",
    "build_pair",
    "capsule_distances",
    "capsule_union_sdf",
    "decode_record",
    "encode_record",
    "forward_kinematics",
    "identity_for",
    "load_dataset",
    "occupancy_grid",
    "pixel_centers",
    "pose_skeleton",
    "project_to_surface",
    "rasterize",
    "read_records",
    "sample_surface",
    "save_dataset",
    "write_dataset",
]
