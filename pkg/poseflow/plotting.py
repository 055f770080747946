# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""SVG figures: skeleton and contour overlays, ablation panels, loss curves.

Figures are built on :class:`matplotlib.figure.Figure` with the Agg canvas
and never touch pyplot state. Output is reproducible: the SVG hash salt is
fixed and no date is written into the metadata.
"""

import io
import logging
import os
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")

from matplotlib.axes import Axes  # noqa: E402
from matplotlib.backends.backend_agg import FigureCanvasAgg  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from poseflow.checkpoint import atomic_write_bytes  # noqa: E402

logger = logging.getLogger(__name__)

_SVG_RC = {"svg.hashsalt": "poseflow", "svg.fonttype": "none"}


def _new_figure(width: float, height: float) -> Figure:
    fig = Figure(figsize=(width, height))
    FigureCanvasAgg(fig)
    return fig


def figure_svg(fig: Figure) -> bytes:
    buffer = io.BytesIO()
    with matplotlib.rc_context(_SVG_RC):
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()


def save_svg(fig: Figure, path: str | os.PathLike[str]) -> Path:
    out = Path(path)
    atomic_write_bytes(out, figure_svg(fig))
    logger.debug("wrote %s", out)
    return out


def _draw_overlay(
    ax: Axes,
    P_s: Any,
    P_e: Any,
    polylines: Sequence[Any],
    title: str | None = None,
) -> None:
    for start, end in zip(P_s, P_e):
        ax.plot([start[0], end[0]], [start[1], end[1]], color="tab:red", linewidth=2.0)
    for line in polylines:
        if len(line):
            ax.plot([p[0] for p in line], [p[1] for p in line], color="tab:blue", linewidth=1.0)
    ax.set_xlim(-1.0, 1.0)
    ax.set_ylim(-1.0, 1.0)
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title, fontsize=8)


def render_overlay(
    P_s: Any, P_e: Any, polylines: Sequence[Any], title: str | None = None
) -> Figure:
    """Skeleton bones as segments with contour polylines in the canonical box."""
    fig = _new_figure(4.0, 4.0)
    _draw_overlay(fig.add_subplot(1, 1, 1), P_s, P_e, polylines, title)
    return fig


def render_panels(
    rows: Sequence[Sequence[Mapping[str, Any]]],
    row_labels: Sequence[str] | None = None,
) -> Figure:
    """Grid of overlays; each cell maps ``P_s``, ``P_e``, ``polylines``, ``title``."""
    n_rows = len(rows)
    n_cols = max((len(r) for r in rows), default=1)
    fig = _new_figure(2.2 * n_cols, 2.2 * max(n_rows, 1))
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            ax = fig.add_subplot(n_rows, n_cols, i * n_cols + j + 1)
            _draw_overlay(ax, cell["P_s"], cell["P_e"], cell["polylines"], cell.get("title"))
            if j == 0 and row_labels:
                ax.set_ylabel(row_labels[i], fontsize=8)
    fig.tight_layout()
    return fig


def render_loss_curve(series: Mapping[str, Sequence[tuple[int, float]]]) -> Figure:
    """One line per named series of ``(step, loss)`` points, log-scaled loss."""
    fig = _new_figure(5.0, 3.2)
    ax = fig.add_subplot(1, 1, 1)
    for name in sorted(series):
        points = series[name]
        if not points:
            continue
        ax.plot([s for s, _ in points], [v for _, v in points], label=name, linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    if any(v > 0 for pts in series.values() for _, v in pts):
        ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    if series:
        ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    return fig


__all__ = ["figure_svg", "render_loss_curve", "render_overlay", "render_panels", "save_svg"]
