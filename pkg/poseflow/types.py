# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""Type definitions for command results.

This module contains the TypedDict definitions returned by the
``logic_*`` functions and printed as JSON by the command line.
"""

from typing import Any, Literal, Optional

from typing_extensions import NotRequired, TypedDict

Status = Literal["ok", "error"]


class _ErrorResult(TypedDict):
    """Result of a command that failed with a handled error."""

    status: Literal["error"]
    error_type: str
    message: str
    paths: NotRequired[list[str]]


class _GenDataResult(TypedDict):
    """Result of dataset generation."""

    status: Status
    out: NotRequired[str]
    records: NotRequired[int]
    train: NotRequired[int]
    test: NotRequired[int]
    apose_pairs: NotRequired[int]
    duplicates_dropped: NotRequired[int]
    sharp_fallbacks: NotRequired[int]
    sha256: NotRequired[str]
    time_seconds: NotRequired[float]
    error_type: NotRequired[str]
    message: NotRequired[str]
    paths: NotRequired[list[str]]


class _TrainResult(TypedDict):
    """Result of a VAE or flow training run."""

    status: Status
    kind: NotRequired[Literal["vae", "flow"]]
    out: NotRequired[str]
    steps: NotRequired[int]
    parameters: NotRequired[int]
    loss_start: NotRequired[Optional[float]]
    loss_end: NotRequired[Optional[float]]
    sign_accuracy: NotRequired[Optional[float]]
    surface_recall: NotRequired[Optional[float]]
    time_seconds: NotRequired[float]
    error_type: NotRequired[str]
    message: NotRequired[str]
    paths: NotRequired[list[str]]


class _SampleEntry(TypedDict):
    """One generated shape."""

    index: int
    directory: str
    polylines: int
    collapsed: bool


class _SampleResult(TypedDict):
    """Result of sampling one or more inputs."""

    status: Status
    out: NotRequired[str]
    guidance: NotRequired[str]
    steps: NotRequired[int]
    scheme: NotRequired[str]
    samples: NotRequired[list[_SampleEntry]]
    wall_time_seconds: NotRequired[float]
    error_type: NotRequired[str]
    message: NotRequired[str]
    paths: NotRequired[list[str]]


class _PairReport(TypedDict):
    """Metrics of one evaluated pair."""

    index: int
    cd: Optional[float]
    fd: Optional[float]
    f1: float
    precision: float
    recall: float
    tau: float
    n_gt: int
    n_gen: int
    collapsed: bool
    cd_condition_pose: NotRequired[Optional[float]]
    follows_skeleton: NotRequired[Optional[bool]]


class _Aggregate(TypedDict):
    """Mean and median of each metric over evaluated pairs."""

    count: int
    evaluated: int
    collapsed: int
    mean: dict[str, Optional[float]]
    median: dict[str, Optional[float]]


class _EvalResult(TypedDict):
    """Result of evaluating generated shapes against ground truth."""

    status: Status
    out: NotRequired[str]
    tau: NotRequired[float]
    pairs: NotRequired[list[_PairReport]]
    aggregate: NotRequired[_Aggregate]
    follows_skeleton_rate: NotRequired[Optional[float]]
    error_type: NotRequired[str]
    message: NotRequired[str]
    paths: NotRequired[list[str]]


class _AblationResult(TypedDict):
    """Side-by-side aggregates of an ablation."""

    status: Status
    out: NotRequired[str]
    variants: NotRequired[dict[str, _Aggregate]]
    figure: NotRequired[Optional[str]]
    error_type: NotRequired[str]
    message: NotRequired[str]
    paths: NotRequired[list[str]]


class _AngleRow(TypedDict):
    """A-pose sweep metrics at one requested arm angle."""

    angle: float
    cd: Optional[float]
    fd: Optional[float]
    f1: Optional[float]
    cd_other_angles: Optional[float]
    nearest_angle_rate: Optional[float]
    collapsed: int


class _AposeSweepResult(TypedDict):
    """Result of generating held-out identities at several A-pose angles."""

    status: Status
    out: NotRequired[str]
    identities: NotRequired[list[int]]
    angles: NotRequired[list[_AngleRow]]
    error_type: NotRequired[str]
    message: NotRequired[str]
    paths: NotRequired[list[str]]


class _PlotResult(TypedDict):
    """Result of rendering figures."""

    status: Status
    files: NotRequired[list[str]]
    error_type: NotRequired[str]
    message: NotRequired[str]
    paths: NotRequired[list[str]]


class _InfoResult(TypedDict):
    """Package, platform and model-size report."""

    status: Status
    version: NotRequired[str]
    python_version: NotRequired[str]
    numpy_version: NotRequired[str]
    platform: NotRequired[str]
    memory_usage_mb: NotRequired[float]
    preset: NotRequired[str]
    parameters: NotRequired[dict[str, int]]
    config: NotRequired[dict[str, Any]]
    error_type: NotRequired[str]
    message: NotRequired[str]
    paths: NotRequired[list[str]]


# Public type aliases for cleaner imports
ErrorResult = _ErrorResult
GenDataResult = _GenDataResult
TrainResult = _TrainResult
SampleEntry = _SampleEntry
SampleResult = _SampleResult
PairReport = _PairReport
Aggregate = _Aggregate
EvalResult = _EvalResult
AblationResult = _AblationResult
AngleRow = _AngleRow
AposeSweepResult = _AposeSweepResult
PlotResult = _PlotResult
InfoResult = _InfoResult

__all__ = [
    "Status",
    "_ErrorResult",
    "_GenDataResult",
    "_TrainResult",
    "_SampleEntry",
    "_SampleResult",
    "_PairReport",
    "_Aggregate",
    "_EvalResult",
    "_AblationResult",
    "_AngleRow",
    "_AposeSweepResult",
    "_PlotResult",
    "_InfoResult",
    # Public aliases
    "ErrorResult",
    "GenDataResult",
    "TrainResult",
    "SampleEntry",
    "SampleResult",
    "PairReport",
    "Aggregate",
    "EvalResult",
    "AblationResult",
    "AngleRow",
    "AposeSweepResult",
    "PlotResult",
    "InfoResult",
]
