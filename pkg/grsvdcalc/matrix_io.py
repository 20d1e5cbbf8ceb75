"""Plain-text matrix exchange: a ``rows cols`` header followed by row-major entries."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .linalg import as_matrix

logger = logging.getLogger(__name__)


def write_matrix(path: Path | str, a) -> Path:
    """Write ``a`` with 17 significant digits so values round-trip exactly."""
    a = as_matrix(a, "a")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, a, fmt="%.17g", header=f"{a.shape[0]} {a.shape[1]}", comments="")
    logger.info("Wrote %dx%d matrix to %s", a.shape[0], a.shape[1], path)
    return path


def read_matrix(path: Path | str) -> np.ndarray:
    """
    Read a matrix written by :func:`write_matrix` (or by hand).

    Entries may be spread over lines arbitrarily; only the count has to match the header.

    Raises:
        OSError: the file cannot be read.
        ParameterError: the header or the entry count is malformed.
    """
    path = Path(path)
    tokens = path.read_text().split()
    if len(tokens) < 2:
        raise ParameterError(f"{path}: missing 'rows cols' header")
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
    except ValueError as exc:
        raise ParameterError(f"{path}: header must be two integers") from exc
    if rows < 0 or cols < 0:
        raise ParameterError(f"{path}: negative dimensions {rows}x{cols}")

    try:
        values = np.array(tokens[2:], dtype=float)
    except ValueError as exc:
        raise ParameterError(f"{path}: non-numeric entry") from exc
    if values.size != rows * cols:
        raise ParameterError(
            f"{path}: header announces {rows * cols} entries, found {values.size}"
        )
    return values.reshape(rows, cols)
