"""Tests for marching squares."""

import numpy as np
import pytest

from poseflow.contour import is_closed, marching_squares, polyline_area
from poseflow.errors import ShapeMismatchError

pytestmark = pytest.mark.unit


def _field(fn, n: int = 41):  # type: ignore[no-untyped-def]
    coords = np.linspace(-1.0, 1.0, n)
    gx, gy = np.meshgrid(coords, coords)
    return fn(gx, gy), coords


class TestMarchingSquares:
    def test_square_hole_is_clockwise(self) -> None:
        """An outside region enclosed by inside has negative signed area."""
        values, coords = _field(lambda x, y: 0.5 - np.maximum(np.abs(x), np.abs(y)))
        polylines = marching_squares(values, coords, coords)
        assert len(polylines) == 1
        assert polyline_area(polylines[0]) < 0.0

    def test_two_disks_sorted_by_area(self) -> None:
        """Separate components come back largest first."""

        def fn(x: np.ndarray, y: np.ndarray) -> np.ndarray:
            big = np.hypot(x + 0.4, y) - 0.4
            small = np.hypot(x - 0.6, y) - 0.2
            return np.minimum(big, small)

        values, coords = _field(fn, 81)
        polylines = marching_squares(values, coords, coords)
        assert len(polylines) == 2
        areas = [polyline_area(p) for p in polylines]
        assert areas[0] > areas[1] > 0.0
        assert all(is_closed(p) for p in polylines)

    def test_boundary_contour_is_open(self) -> None:
        """A shape cut by the lattice edge gives an open polyline."""
        values, coords = _field(lambda x, y: x - 0.2)
        polylines = marching_squares(values, coords, coords)
        assert len(polylines) == 1
        line = polylines[0]
        assert not is_closed(line)
        np.testing.assert_allclose(line[:, 0], 0.2, atol=1e-12)

    def test_inside_on_the_left(self) -> None:
        """Walking the open contour keeps negative values on the left."""
        values, coords = _field(lambda x, y: x - 0.2)
        line = marching_squares(values, coords, coords)[0]
        # inside is x < 0.2, which is on the left when walking towards +y
        assert line[-1, 1] > line[0, 1]

    def test_saddle_cell(self) -> None:
        """Diagonal inside corners join or separate by the centre value."""
        xs = ys = np.array([0.0, 1.0])
        corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])

        def cut_corners(values: np.ndarray) -> set[tuple[float, float]]:
            polylines = marching_squares(values, xs, ys)
            assert len(polylines) == 2 and all(len(p) == 2 for p in polylines)
            mids = [p.mean(axis=0) for p in polylines]
            return {tuple(corners[np.argmin(np.linalg.norm(corners - m, axis=1))]) for m in mids}

        # centre inside: the two outside corners are cut off
        assert cut_corners(np.array([[-1.0, 0.5], [0.5, -1.0]])) == {(1.0, 0.0), (0.0, 1.0)}
        # centre outside: the two inside corners are isolated
        assert cut_corners(np.array([[-0.2, 1.0], [1.0, -0.2]])) == {(0.0, 0.0), (1.0, 1.0)}

    def test_uniform_field_has_no_contour(self) -> None:
        coords = np.linspace(-1, 1, 5)
        assert marching_squares(np.ones((5, 5)), coords, coords) == []
        assert marching_squares(-np.ones((5, 5)), coords, coords) == []

    def test_shape_checked(self) -> None:
        with pytest.raises(ShapeMismatchError):
            marching_squares(np.zeros((4, 5)), np.zeros(4), np.zeros(4))


class TestPolylineHelpers:
    def test_unit_square_area(self) -> None:
        square = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], dtype=float)
        assert polyline_area(square) == pytest.approx(1.0)
        assert polyline_area(square[::-1]) == pytest.approx(-1.0)

    def test_degenerate_area(self) -> None:
        assert polyline_area(np.zeros((2, 2))) == 0.0

    def test_is_closed(self) -> None:
        assert is_closed(np.array([[0, 0], [1, 0], [0, 1], [0, 0]]))
        assert not is_closed(np.array([[0, 0], [1, 0], [0, 1]]))
