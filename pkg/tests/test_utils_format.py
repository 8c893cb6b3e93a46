"""Tests for _format_failure and the array helpers in _utils."""

from __future__ import annotations

import numpy as np
import pytest

from convex_bounds._utils import (
    _BLOCK_CELLS,
    _as_vector,
    _format_failure,
    _require_finite,
    _row_blocks,
)
from convex_bounds.exceptions import NonFiniteValueError


class TestFormatFailure:
    """Tests for _format_failure message formatting."""

    def test_both_none_single_line(self) -> None:
        """Without expected and actual only the headline is emitted."""
        result = _format_failure("grid is empty", None, None)
        assert result == "Grid is empty"

    def test_only_actual_present(self) -> None:
        result = _format_failure("invalid n: must be even", None, 3)
        assert "Actual:\n  3" in result
        assert "Expected:" not in result

    def test_both_present_shows_both_sections(self) -> None:
        """Both sections appear separated by a blank line."""
        result = _format_failure("knots differ", [30.0, 40.0], [30.0, 45.0])
        expected_idx = result.index("Expected:")
        actual_idx = result.index("Actual:")
        assert expected_idx < actual_idx
        assert "\n\nActual:" in result

    def test_large_actual_truncated(self) -> None:
        result = _format_failure("bad weights", None, list(range(100)))
        assert "... (50 more items not shown)" in result

    def test_headline_capitalised(self) -> None:
        assert _format_failure("non-finite value", None, None).startswith("Non-finite")


class TestArrayHelpers:
    """Tests for vector coercion, finiteness checks and row blocking."""

    def test_scalar_becomes_vector(self) -> None:
        out = _as_vector(3)
        assert out.shape == (1,)
        assert out.dtype == np.float64

    def test_require_finite_passes_finite(self) -> None:
        _require_finite(np.array([1.0, 2.0]), "test")

    def test_require_finite_reports_inputs(self) -> None:
        with pytest.raises(NonFiniteValueError) as exc_info:
            _require_finite(np.array([1.0, np.inf, 3.0]), "kernel", np.array([30.0, 40.0, 50.0]))
        assert exc_info.value.where == "kernel"
        assert list(exc_info.value.at) == [40.0]

    def test_row_blocks_cover_all_rows(self) -> None:
        rows, cols = 4001, 20000
        blocks = list(_row_blocks(rows, cols))
        assert blocks[0].start == 0
        assert blocks[-1].stop == rows
        assert all(a.stop == b.start for a, b in zip(blocks, blocks[1:], strict=False))
        assert all((b.stop - b.start) * cols <= _BLOCK_CELLS for b in blocks)

    def test_row_blocks_single_block_when_small(self) -> None:
        assert list(_row_blocks(301, 1000)) == [slice(0, 301)]
