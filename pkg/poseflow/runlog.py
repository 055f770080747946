# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""JSON-lines training metrics.

Training loops record one line per ``log_every`` steps through a
structlog logger bound to the run's ``metrics.jsonl``. Process memory
comes from psutil.
"""

import json
import os
from pathlib import Path
from types import TracebackType
from typing import Any, TextIO

import psutil
import structlog


def resident_memory_mb() -> float:
    return psutil.Process(os.getpid()).memory_info().rss / (1024 * 1024)


class MetricsLog:
    """Append-only JSON-lines metrics file."""

    def __init__(self, path: str | os.PathLike[str]) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle: TextIO = self.path.open("a", encoding="utf-8")
        self._log = structlog.wrap_logger(
            structlog.PrintLogger(self._handle),
            processors=[
                structlog.processors.TimeStamper(fmt="iso", utc=True),
                structlog.processors.JSONRenderer(sort_keys=True),
            ],
        )

    def record(self, event: str, **fields: Any) -> None:
        self._log.info(event, memory_mb=round(resident_memory_mb(), 1), **fields)
        self._handle.flush()

    def close(self) -> None:
        if not self._handle.closed:
            self._handle.close()

    def __enter__(self) -> "MetricsLog":
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        self.close()


def read_metrics(path: str | os.PathLike[str], event: str | None = None) -> list[dict[str, Any]]:
    """Parse a metrics file, optionally keeping one event type."""
    rows = []
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if event is None or row.get("event") == event:
                rows.append(row)
    return rows


__all__ = ["MetricsLog", "read_metrics", "resident_memory_mb"]
