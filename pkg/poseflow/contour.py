# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""Marching squares for the zero level set of a sampled 2D field.

``values[i, j]`` is the field at ``(xs[j], ys[i])`` with ``ys`` increasing,
so row 0 is the bottom of the box. A lattice point is inside when its value
is negative. Segments are oriented with the inside on their left, which
makes outer boundaries counter-clockwise (positive signed area). Ambiguous
saddle cells are resolved by the value at the cell centre.
"""

import logging
from collections.abc import Sequence

import numpy as np

from poseflow.errors import ShapeMismatchError

logger = logging.getLogger(__name__)

EdgeKey = tuple[str, int, int]

# corner offsets (di, dj) in counter-clockwise order from the bottom-left
_CORNERS = ((0, 0), (0, 1), (1, 1), (1, 0))


def _edge_key(k: int, i: int, j: int) -> EdgeKey:
    if k == 0:
        return ("h", i, j)
    if k == 1:
        return ("v", i, j + 1)
    if k == 2:
        return ("h", i + 1, j)
    return ("v", i, j)


def _edge_point(key: EdgeKey, values: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    kind, i, j = key
    if kind == "h":
        fa, fb = values[i, j], values[i, j + 1]
        s = fa / (fa - fb)
        return np.array([xs[j] + s * (xs[j + 1] - xs[j]), ys[i]])
    fa, fb = values[i, j], values[i + 1, j]
    s = fa / (fa - fb)
    return np.array([xs[j], ys[i] + s * (ys[i + 1] - ys[i])])


def _cell_segments(corner_values: Sequence[float]) -> list[tuple[int, int]]:
    """(exit edge, entry edge) pairs of one cell."""
    inside = [v < 0.0 for v in corner_values]
    exits = [k for k in range(4) if inside[k] and not inside[(k + 1) % 4]]
    entries = [k for k in range(4) if not inside[k] and inside[(k + 1) % 4]]
    if len(exits) == 1:
        return [(exits[0], entries[0])]
    if len(exits) == 2:
        centre_inside = float(np.mean(corner_values)) < 0.0
        step = 1 if centre_inside else -1
        return [(k, (k + step) % 4) for k in exits]
    return []


def marching_squares(
    values: np.ndarray, xs: np.ndarray, ys: np.ndarray
) -> list[np.ndarray]:
    """Zero-isocontour polylines of ``values``, largest enclosed area first.

    Closed loops repeat their first vertex at the end. A contour that runs
    into the lattice boundary comes back as an open polyline.
    """
    values = np.asarray(values, dtype=np.float64)
    xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
    if values.ndim != 2 or values.shape != (len(ys), len(xs)):
        raise ShapeMismatchError("marching_squares", values.shape, (len(ys), len(xs)))
    rows, cols = values.shape

    segments: dict[EdgeKey, EdgeKey] = {}
    for i in range(rows - 1):
        for j in range(cols - 1):
            corners = [values[i + di, j + dj] for di, dj in _CORNERS]
            for exit_edge, entry_edge in _cell_segments(corners):
                segments[_edge_key(exit_edge, i, j)] = _edge_key(entry_edge, i, j)

    points: dict[EdgeKey, np.ndarray] = {}

    def point(key: EdgeKey) -> np.ndarray:
        if key not in points:
            points[key] = _edge_point(key, values, xs, ys)
        return points[key]

    polylines: list[np.ndarray] = []
    used: set[EdgeKey] = set()
    targets = set(segments.values())
    # open chains first: they start where no segment ends
    starts = [k for k in segments if k not in targets]
    starts += [k for k in segments if k in targets]
    for start in starts:
        if start in used:
            continue
        chain = [start]
        key = start
        while key in segments and key not in used:
            used.add(key)
            key = segments[key]
            chain.append(key)
            if key == start:
                break
        polylines.append(np.stack([point(k) for k in chain]))

    areas = [abs(polyline_area(p)) for p in polylines]
    order = sorted(range(len(polylines)), key=lambda n: -areas[n])
    logger.debug("marching squares: %d segments, %d polylines", len(segments), len(polylines))
    return [polylines[n] for n in order]


def polyline_area(polyline: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise loops."""
    p = np.asarray(polyline, dtype=np.float64)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def is_closed(polyline: np.ndarray) -> bool:
    p = np.asarray(polyline)
    return len(p) > 2 and bool(np.array_equal(p[0], p[-1]))


__all__ = ["is_closed", "marching_squares", "polyline_area"]
