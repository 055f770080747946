# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""Exception types raised by poseflow library code.

Every exception derives from a built-in so callers that already catch
``ValueError``, ``RuntimeError`` or ``OSError`` keep working. The CLI
reports the class name as ``error_type`` in its structured output.
"""

from typing import Sequence


class ShapeMismatchError(ValueError):
    """Two operands of an operation have incompatible shapes."""

    def __init__(
        self,
        op: str,
        left: Sequence[int],
        right: Sequence[int],
        detail: str = "",
    ) -> None:
        self.op = op
        self.left = tuple(int(n) for n in left)
        self.right = tuple(int(n) for n in right)
        message = f"{op}: incompatible shapes {self.left} and {self.right}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class NonFiniteError(RuntimeError):
    """A NaN or infinity appeared in a loss, parameter or activation.

    Exactly one of ``parameter``, ``block`` or ``step`` is usually set,
    pointing at where the value was first seen.
    """

    def __init__(
        self,
        message: str,
        *,
        parameter: str | None = None,
        block: int | None = None,
        step: int | None = None,
    ) -> None:
        self.parameter = parameter
        self.block = block
        self.step = step
        super().__init__(message)


class SamplingError(RuntimeError):
    """Surface projection failed for too many seeds."""

    def __init__(self, message: str, diagnostics: dict[str, float] | None = None):
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)


class DegenerateBoneError(ValueError):
    """A bone collapsed to zero length."""


class DuplicatePairError(ValueError):
    """The same (character, pose A, pose B) pair was generated twice."""


class ConfigError(ValueError):
    """Configuration failed schema validation.

    ``paths`` holds JSON pointers (``/flow/width``) of the offending fields.
    """

    def __init__(self, message: str, paths: Sequence[str] = ()) -> None:
        self.paths = list(paths)
        super().__init__(message)


class CheckpointError(ValueError):
    """A checkpoint is missing, corrupt or does not match the model."""


class DatasetError(OSError):
    """A dataset directory is missing files or fails its checksum."""


__all__ = [
    "CheckpointError",
    "ConfigError",
    "DatasetError",
    "DegenerateBoneError",
    "DuplicatePairError",
    "NonFiniteError",
    "SamplingError",
    "ShapeMismatchError",
]
