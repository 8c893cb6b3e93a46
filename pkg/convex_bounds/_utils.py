from __future__ import annotations

from collections.abc import Iterator
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

# Upper bound on the number of cells of one (grid point x disturbance)
# evaluation block.
_BLOCK_CELLS = 1 << 21


def _truncate_value(value: Any) -> str:
    """Render *value* for an error message, clipping long sequences and reprs.

    Arrays are shown as lists.  Sequences keep their first 50 items and
    report how many were dropped; any other repr keeps its first 500
    characters and reports the full length.  The result is always a string.

    Args:
        value: Value to show in the message.

    Returns:
        A possibly clipped representation.
    """
    if value is None:
        return "None"

    if isinstance(value, np.ndarray):
        value = value.tolist()

    if isinstance(value, (list, tuple)):
        if len(value) > 50:
            rendered = repr(
                list(value[:50]) if isinstance(value, tuple) else value[:50]
            )
            remaining = len(value) - 50
            return f"{rendered}\n... ({remaining} more items not shown)"
        return repr(value)

    rendered = repr(value)
    if len(rendered) <= 500:
        return rendered

    total_len = len(rendered)
    return (
        f"{rendered[:500]}\n"
        f"... (value truncated, showing first 500 of {total_len} chars)"
    )


def _format_failure(headline: str, expected: Any, actual: Any) -> str:
    """Produce a structured error message with Expected:/Actual: sections.

    The function emits a single-line header followed by optional sections
    showing what was expected and what was actually observed.  Each value
    is formatted via :func:`_truncate_value`.

    Args:
        headline: One-line description of the failure.
        expected: What the operation required, or ``None``.
        actual: What was actually supplied or observed, or ``None``.

    Returns:
        A multi-line string suitable as the ``args`` for ``Exception()``.
    """
    lines: list[str] = [headline[:1].upper() + headline[1:]]

    if expected is None and actual is None:
        return lines[0]

    lines.append("")
    sections: list[str] = []

    if expected is not None:
        sections.append(f"Expected:\n  {_truncate_value(expected)}")

    if actual is not None:
        if sections:
            sections.append("")
        sections.append(f"Actual:\n  {_truncate_value(actual)}")

    lines.extend(sections)
    return "\n".join(lines)


def _as_vector(values: ArrayLike) -> NDArray[np.float64]:
    """Coerce *values* to a one-dimensional float64 array."""
    return np.atleast_1d(np.asarray(values, dtype=np.float64))


def _require_finite(values: NDArray[np.float64], where: str, at: Any = None) -> None:
    """Raise :class:`NonFiniteValueError` when *values* holds NaN or inf.

    Args:
        values: Array to check.
        where: Description of the evaluation site for the message.
        at: Inputs to report; defaults to the offending entries of *values*.
    """
    # Lazy import to break circular dependency with exceptions.py
    from convex_bounds.exceptions import NonFiniteValueError  # noqa: PLC0415

    mask = ~np.isfinite(values)
    if not mask.any():
        return
    if at is None:
        reported = values[mask]
    else:
        reported = np.broadcast_to(np.asarray(at, dtype=np.float64), values.shape)[mask]
    raise NonFiniteValueError(where, reported)


def _row_blocks(rows: int, cols: int) -> Iterator[slice]:
    """Yield row slices so that each block holds at most ``_BLOCK_CELLS`` cells."""
    step = max(1, _BLOCK_CELLS // max(cols, 1))
    for start in range(0, rows, step):
        yield slice(start, min(start + step, rows))
