"""Tests for run_all."""

from __future__ import annotations

import threading
import time

import pytest

from convex_bounds.exceptions import (
    AggregateComputationError,
    ComputationError,
    InvalidParameterError,
    NonFiniteValueError,
)
from convex_bounds.parallel import run_all, split_workers


def _fail_numerically(where: str) -> float:
    raise NonFiniteValueError(where, [1.0])


class TestRunAllSuccess:
    """Tests for run_all when every task succeeds."""

    def test_returns_all_results_in_order(self) -> None:
        def slow(value: int, delay: float) -> int:
            time.sleep(delay)
            return value

        results = run_all([(slow, 1, 0.05), (slow, 2, 0.0), (slow, 3, 0.02)])
        assert results == [1, 2, 3]

    def test_runs_in_parallel_not_sequentially(self) -> None:
        """All tasks must be in flight at the same time to pass the barrier."""
        barrier = threading.Barrier(3, timeout=5)

        def wait_for_peers(idx: int) -> int:
            barrier.wait()
            return idx

        assert run_all([(wait_for_peers, i) for i in range(3)]) == [0, 1, 2]

    def test_single_worker_runs_inline(self) -> None:
        caller = threading.get_ident()
        results = run_all([threading.get_ident, threading.get_ident], max_workers=1)
        assert results == [caller, caller]

    def test_empty_list_returns_empty_list(self) -> None:
        assert run_all([]) == []


class TestRunAllFailure:
    """Tests for run_all when tasks raise."""

    @pytest.mark.parametrize("workers", [1, 4])
    def test_raises_aggregate_error_when_one_fails(self, workers: int) -> None:
        with pytest.raises(AggregateComputationError) as exc_info:
            run_all(
                [lambda: 1.0, (_fail_numerically, "kernel"), lambda: 3.0],
                max_workers=workers,
            )
        err = exc_info.value
        assert err.results == [1.0, None, 3.0]
        assert len(err.errors) == 1
        assert isinstance(err.errors[0], NonFiniteValueError)

    def test_aggregate_error_is_catchable_as_computation_error(self) -> None:
        with pytest.raises(ComputationError):
            run_all([(_fail_numerically, "a"), (_fail_numerically, "b")])

    def test_aggregate_error_message_is_descriptive(self) -> None:
        with pytest.raises(AggregateComputationError) as exc_info:
            run_all([(_fail_numerically, "a"), (_fail_numerically, "b")])
        assert "2 of 2 computations failed" in str(exc_info.value)

    @pytest.mark.parametrize("workers", [1, 2])
    def test_other_errors_propagate(self, workers: int) -> None:
        def bad() -> None:
            raise InvalidParameterError("n", 0, "must be positive")

        with pytest.raises(InvalidParameterError):
            run_all([lambda: 1, bad], max_workers=workers)


class TestRunAllTupleForm:
    """Tests for (callable, *args) tuple tasks."""

    def test_positional_args(self) -> None:
        assert run_all([(pow, 2, 10), (divmod, 7, 2)]) == [1024, (3, 1)]

    def test_trailing_dict_is_kwargs(self) -> None:
        def scaled(x: float, *, factor: float = 1.0) -> float:
            return x * factor

        assert run_all([(scaled, 2.0, {"factor": 3.0}), (scaled, 2.0)]) == [6.0, 2.0]

    def test_tuple_mixed_with_plain_callable(self) -> None:
        assert run_all([lambda: "plain", (str.upper, "tuple")]) == ["plain", "TUPLE"]


class TestSplitWorkers:
    """Sharing one thread cap between nested fan-outs."""

    @pytest.mark.parametrize(
        ("cap", "outer_tasks", "expected"),
        [(1, 2, (1, 1)), (2, 2, (2, 1)), (3, 2, (2, 1)), (8, 2, (2, 4)), (4, 10, (4, 1))],
    )
    def test_product_stays_within_cap(
        self, cap: int, outer_tasks: int, expected: tuple[int, int]
    ) -> None:
        outer, inner = split_workers(cap, outer_tasks)
        assert (outer, inner) == expected
        assert outer * inner <= cap

    def test_no_cap_stays_uncapped(self) -> None:
        assert split_workers(None, 2) == (None, None)
