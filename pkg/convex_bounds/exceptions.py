from __future__ import annotations

from typing import Any

from convex_bounds._utils import _format_failure


class ConvexBoundsError(Exception):
    """Base class for every error raised by convex_bounds.

    Callers can catch either the specific exception or this common base.
    """


class InvalidParameterError(ConvexBoundsError, ValueError):
    """Raised when an input violates a documented precondition.

    Inherits :class:`ValueError` so generic validation handlers still catch it.

    Attributes:
        name: Name of the offending parameter (e.g. ``"n"``, ``"grid"``).
        value: The rejected value.
        reason: Short description of the violated condition.
    """

    def __init__(self, name: str, value: Any, reason: str) -> None:
        self.name = name
        self.value = value
        self.reason = reason
        super().__init__(
            _format_failure(f"invalid {name}: {reason}", None, value)
        )


class RefinementError(InvalidParameterError):
    """Raised when a convergence sweep is asked for a non-nested ladder.

    Attributes:
        axis: ``"n"`` or ``"m"``.
        coarse: The coarser ladder value.
        fine: The next ladder value that does not refine *coarse*.
    """

    def __init__(self, axis: str, coarse: int, fine: int) -> None:
        self.axis = axis
        self.coarse = coarse
        self.fine = fine
        super().__init__(
            f"{axis} ladder",
            [coarse, fine],
            f"{fine} does not refine {coarse}",
        )


class KnotMismatchError(ConvexBoundsError, ValueError):
    """Raised when knot-interpolated operands do not share one knot set.

    Attributes:
        expected: Knots of the first operand.
        actual: Knots of the mismatching operand.
    """

    def __init__(self, expected: Any, actual: Any) -> None:
        self.expected = expected
        self.actual = actual
        super().__init__(
            _format_failure("operands must share the same knots", expected, actual)
        )


class SchemeMismatchError(ConvexBoundsError, TypeError):
    """Raised when a representation does not match the projection scheme.

    Attributes:
        scheme: The requested projection scheme.
        found: Type name of the offending representation.
    """

    def __init__(self, scheme: str, found: str) -> None:
        self.scheme = scheme
        self.found = found
        super().__init__(
            f"Scheme {scheme!r} cannot operate on a {found} representation"
        )


class ComputationError(ConvexBoundsError):
    """Base class for numerical failures during a computation."""


class NonFiniteValueError(ComputationError):
    """Raised when a function produces or receives non-finite values.

    Usually signals that a state left the representable domain.

    Attributes:
        where: Description of the evaluation site.
        at: The inputs whose values were not finite.
    """

    def __init__(self, where: str, at: Any) -> None:
        self.where = where
        self.at = at
        super().__init__(_format_failure(f"non-finite value in {where}", None, at))


class InductionStepError(ComputationError):
    """Raised when a backward-induction step fails.

    Wraps the original exception via :attr:`__cause__`.

    Attributes:
        step: Time index *t* of the failing Bellman step.
        scheme: The projection scheme of the induction.
    """

    def __init__(self, step: int, scheme: str, original_exc: Exception) -> None:
        self.step = step
        self.scheme = scheme
        super().__init__(
            f"Backward induction ({scheme}) failed at step t={step}: "
            f"{type(original_exc).__name__}: {original_exc}"
        )
        self.__cause__ = original_exc


class AggregateComputationError(ComputationError):
    """Raised when one or more parallel computations fail.

    Attributes:
        errors: The :class:`ComputationError` instances that occurred.
        results: Ordered list matching the submitted tasks. Each entry is the
            successful return value or ``None`` if that task failed.
    """

    def __init__(
        self,
        errors: list[ComputationError],
        results: list[object],
    ) -> None:
        self.errors = errors
        self.results = results
        failed = len(errors)
        total = len(results)
        summary = f"{failed} of {total} computations failed"
        details = "\n".join(f"  - {e}" for e in errors)
        super().__init__(f"{summary}\n{details}")


class ConfigError(ConvexBoundsError):
    """Raised when a run configuration cannot be parsed or validated.

    Attributes:
        key: Dotted key of the offending entry (e.g. ``"put.vol"``), or
            ``None`` when the file itself is unreadable.
        reason: What is wrong with it.
        source: Path of the configuration file, if known.
    """

    def __init__(self, key: str | None, reason: str, source: str | None = None) -> None:
        self.key = key
        self.reason = reason
        self.source = source
        where = f" in {source}" if source else ""
        subject = f"key {key!r}" if key else "configuration"
        super().__init__(f"Invalid {subject}{where}: {reason}")
