from __future__ import annotations

from collections.abc import Callable, Sequence
from concurrent.futures import Future, ThreadPoolExecutor
from typing import Any, TypeAlias, TypeVar, cast, overload

from convex_bounds.exceptions import AggregateComputationError, ComputationError

T = TypeVar("T")

TaskItem: TypeAlias = Callable[[], T] | tuple[Callable[..., T], *tuple[Any, ...]]


def _call(task: TaskItem[T]) -> T:
    if isinstance(task, tuple):
        fn = cast(Callable[..., T], task[0])
        rest = task[1:]
        if rest and isinstance(rest[-1], dict):
            return fn(*rest[:-1], **rest[-1])
        return fn(*rest)
    return task()


def _submit_task(executor: ThreadPoolExecutor, task: TaskItem[T]) -> Future[T]:
    return executor.submit(_call, task)


def split_workers(max_workers: int | None, outer_tasks: int) -> tuple[int | None, int | None]:
    """Share a thread cap between a fan-out and the fan-outs its tasks start.

    Returns ``(outer, inner)`` with ``outer * inner <= max_workers``; a cap of
    ``None`` stays uncapped on both levels.

    Example::

        split_workers(8, 2)  # (2, 4)
        split_workers(2, 2)  # (2, 1)
    """
    if max_workers is None:
        return None, None
    outer = max(1, min(max_workers, outer_tasks))
    return outer, max(1, max_workers // outer)


@overload
def run_all(
    tasks: Sequence[Callable[[], T]],
    *,
    max_workers: int | None = None,
) -> list[T]: ...


@overload
def run_all(
    tasks: Sequence[TaskItem[T]],
    *,
    max_workers: int | None = None,
) -> list[T]: ...


def run_all(
    tasks: Sequence[TaskItem[T]],
    *,
    max_workers: int | None = None,
) -> list[T]:
    """Run independent computations and return all results in input order.

    Each task is a zero-argument callable or a ``(callable, *args)`` tuple
    whose last element may be a dict of keyword arguments.  With
    ``max_workers=1`` the tasks run inline on the calling thread; otherwise
    they are submitted to a thread pool and the call blocks until every task
    has returned or raised.  numpy releases the GIL inside its vectorised
    kernels, so threads overlap the heavy evaluation work.

    Args:
        tasks: The computations to run.
        max_workers: Maximum number of threads. Defaults to the number of
            tasks.

    Returns:
        A list of results in the same order as *tasks*.

    Raises:
        AggregateComputationError: If one or more tasks raised
            :class:`ComputationError`. Contains the individual errors and a
            ``results`` list with ``None`` for failed entries.

    Example::

        from convex_bounds.parallel import run_all

        lower, upper = run_all(
            [
                (backward_induction, model, grid, local, "tangent"),
                (backward_induction, model, grid, extreme, "interp"),
            ],
            max_workers=2,
        )
    """
    if not tasks:
        return []

    workers = max_workers if max_workers is not None else len(tasks)
    results: list[T | None] = [None] * len(tasks)
    errors: list[ComputationError] = []

    if workers <= 1:
        for idx, task in enumerate(tasks):
            try:
                results[idx] = _call(task)
            except ComputationError as exc:
                errors.append(exc)
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = [_submit_task(executor, task) for task in tasks]

        for idx, future in enumerate(futures):
            exc = future.exception()
            if exc is None:
                results[idx] = future.result()
            elif isinstance(exc, ComputationError):
                errors.append(exc)
            else:
                # Anything else is a programming or input error.
                raise exc

    if errors:
        raise AggregateComputationError(errors=errors, results=list(results))

    return results  # type: ignore[return-value]
