"""Convex piecewise-linear functions of one variable and the grid projections.

Two representations are provided:

* :class:`MaxAffine`: the maximum of affine pieces, produced by the tangent
  projection and always below the projected convex function.
* :class:`InterpConvex`: chord interpolation between knots with an affine
  extension to the left of the first knot and a constant extension to the
  right of the last one, produced by the interpolation projection and above
  the projected function when that function is convex and non-increasing.

Anything with ``value``, ``value_and_slope`` and ``left_ray`` methods (see
:class:`ConvexFunction`) can be projected.  Slopes are right derivatives
unless ``left=True`` is requested.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import Protocol, runtime_checkable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from convex_bounds._utils import _as_vector, _require_finite
from convex_bounds.exceptions import (
    InvalidParameterError,
    KnotMismatchError,
    SchemeMismatchError,
)

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]

# Relative tolerance for "the left extension passes through the first knot".
_LEFT_CONSISTENCY_TOL = 1e-9


@runtime_checkable
class ConvexFunction(Protocol):
    """A convex function of one real variable with subgradient access."""

    def value(self, z: ArrayLike) -> Array: ...

    def value_and_slope(
        self, z: ArrayLike, *, left: bool = False
    ) -> tuple[Array, Array]: ...

    def left_ray(self) -> tuple[float, float]:
        """Return ``(slope, intercept)`` of the affine behaviour as z → −∞."""
        ...


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing grid ``g(1) < … < g(m)`` with ``m >= 2``."""

    points: Array

    def __post_init__(self) -> None:
        pts = _as_vector(self.points).copy()
        if pts.ndim != 1 or pts.size < 2:
            raise InvalidParameterError("grid", pts, "needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise InvalidParameterError("grid", pts, "points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise InvalidParameterError(
                "grid", pts, "points must be strictly increasing"
            )
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, lo: float, hi: float, m: int) -> Grid:
        """Build *m* equally spaced points from *lo* to *hi* inclusive."""
        if int(m) != m or m < 2:
            raise InvalidParameterError("m", m, "needs at least 2 grid points")
        if not np.isfinite(lo):
            raise InvalidParameterError("lo", lo, "must be finite")
        if not np.isfinite(hi):
            raise InvalidParameterError("hi", hi, "must be finite")
        if not lo < hi:
            raise InvalidParameterError("hi", (lo, hi), "must exceed lo")
        return cls(np.linspace(lo, hi, int(m)))

    @property
    def m(self) -> int:
        return int(self.points.size)

    @property
    def lo(self) -> float:
        return float(self.points[0])

    @property
    def hi(self) -> float:
        return float(self.points[-1])

    @property
    def ident(self) -> str:
        """Short identifier recorded in run metadata."""
        return f"[{self.lo:g},{self.hi:g}]x{self.m}"

    def contains(self, other: Grid, *, rtol: float = 1e-12) -> bool:
        """Return ``True`` when every point of *other* is also a point of this grid."""
        idx = np.clip(np.searchsorted(self.points, other.points), 1, self.m - 1)
        nearest = np.minimum(
            np.abs(self.points[idx] - other.points),
            np.abs(self.points[idx - 1] - other.points),
        )
        scale = np.maximum(1.0, np.abs(other.points))
        return bool(np.all(nearest <= rtol * scale))

    def same_points(self, other: Grid) -> bool:
        return self is other or (
            self.m == other.m and bool(np.array_equal(self.points, other.points))
        )


def refine_grid(grid: Grid, factor: int = 2) -> Grid:
    """Insert ``factor - 1`` equally spaced points into every grid interval.

    Every point of *grid* is kept exactly, so the result nests *grid*.
    """
    if int(factor) != factor or factor < 1:
        raise InvalidParameterError("factor", factor, "must be a positive integer")
    pts = grid.points
    frac = np.arange(int(factor)) / factor
    inner = pts[:-1, None] + np.diff(pts)[:, None] * frac[None, :]
    return Grid(np.append(inner.ravel(), pts[-1]))


def _grid_points(grid: Grid | ArrayLike) -> Array:
    if isinstance(grid, Grid):
        return grid.points
    pts = _as_vector(grid)
    if pts.size < 1:
        raise InvalidParameterError("grid", pts, "needs at least 1 point")
    if np.any(np.diff(pts) <= 0):
        raise InvalidParameterError("grid", pts, "points must be strictly increasing")
    return pts


def _upper_envelope(slopes: Array, intercepts: Array) -> tuple[Array, Array]:
    """Drop pieces that never attain the maximum.

    Sorts by slope, keeps the highest intercept per slope and sweeps the
    remaining lines, discarding any line overtaken by its successor no later
    than it overtakes its predecessor.
    """
    order = np.lexsort((intercepts, slopes))
    a = slopes[order]
    b = intercepts[order]
    last_of_slope = np.append(a[1:] != a[:-1], True)
    a = a[last_of_slope]
    b = b[last_of_slope]

    keep: list[int] = []
    for i in range(a.size):
        while len(keep) >= 2:
            j, k = keep[-1], keep[-2]
            # x(k, i) <= x(k, j): line j is never strictly on top
            if (b[k] - b[i]) * (a[j] - a[k]) <= (b[k] - b[j]) * (a[i] - a[k]):
                keep.pop()
            else:
                break
        keep.append(i)
    return a[keep], b[keep]


@dataclass(frozen=True, eq=False)
class MaxAffine:
    """Convex function ``z ↦ max_i (slopes[i]·z + intercepts[i])``."""

    slopes: Array
    intercepts: Array

    def __post_init__(self) -> None:
        a = _as_vector(self.slopes).copy()
        b = _as_vector(self.intercepts).copy()
        if a.shape != b.shape:
            raise InvalidParameterError(
                "pieces", (a.size, b.size), "slopes and intercepts differ in length"
            )
        if a.size == 0:
            raise InvalidParameterError("pieces", [], "at least one piece is required")
        _require_finite(np.concatenate([a, b]), "MaxAffine pieces")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "slopes", a)
        object.__setattr__(self, "intercepts", b)

    @classmethod
    def from_pieces(cls, pieces: Iterable[tuple[float, float]]) -> MaxAffine:
        pairs = list(pieces)
        return cls([p[0] for p in pairs], [p[1] for p in pairs])

    @classmethod
    def zero(cls) -> MaxAffine:
        return cls([0.0], [0.0])

    @property
    def pieces(self) -> list[tuple[float, float]]:
        return [
            (float(s), float(c))
            for s, c in zip(self.slopes, self.intercepts, strict=True)
        ]

    def __len__(self) -> int:
        return int(self.slopes.size)

    @cached_property
    def _envelope(self) -> tuple[Array, Array, Array]:
        a, b = _upper_envelope(self.slopes, self.intercepts)
        breakpoints = (b[:-1] - b[1:]) / (a[1:] - a[:-1])
        return a, b, breakpoints

    def prune(self) -> MaxAffine:
        """Return the same function with every dominated piece removed."""
        a, b, _ = self._envelope
        if np.array_equal(a, self.slopes) and np.array_equal(b, self.intercepts):
            return self
        return MaxAffine(a, b)

    @property
    def breakpoints(self) -> Array:
        """Abscissae where the active piece changes, increasing."""
        return self._envelope[2]

    @property
    def is_zero(self) -> bool:
        a, b, _ = self._envelope
        return a.size == 1 and a[0] == 0.0 and b[0] == 0.0

    def _active(self, z: Array, *, left: bool) -> Array:
        return np.searchsorted(self._envelope[2], z, side="left" if left else "right")

    def value(self, z: ArrayLike) -> Array:
        return self.value_and_slope(z)[0]

    def value_and_slope(
        self, z: ArrayLike, *, left: bool = False
    ) -> tuple[Array, Array]:
        a, b, _ = self._envelope
        zz = np.asarray(z, dtype=np.float64)
        idx = self._active(zz, left=left)
        slope = a[idx]
        return slope * zz + b[idx], slope

    def left_ray(self) -> tuple[float, float]:
        a, b, _ = self._envelope
        return float(a[0]), float(b[0])

    def to_rows(self) -> list[tuple[float, float]]:
        """One ``(slope, intercept)`` row per piece of the pruned envelope."""
        a, b, _ = self._envelope
        return [(float(s), float(c)) for s, c in zip(a, b, strict=True)]


@dataclass(frozen=True, eq=False)
class InterpConvex:
    """Knot interpolation with affine left and constant right extensions.

    ``value(z)`` is ``left_slope·z + left_intercept`` for ``z <= g(1)``, the
    chord through the neighbouring knots for ``g(1) < z <= g(m)`` and
    ``values[-1]`` for ``z > g(m)``.
    """

    knots: Grid
    values: Array
    left_slope: float
    left_intercept: float

    def __post_init__(self) -> None:
        vals = _as_vector(self.values).copy()
        if vals.size != self.knots.m:
            raise InvalidParameterError(
                "values", vals.size, f"expected {self.knots.m} knot values"
            )
        _require_finite(vals, "InterpConvex knot values", self.knots.points)
        ls = float(self.left_slope)
        li = float(self.left_intercept)
        at_first = ls * self.knots.lo + li
        if abs(at_first - vals[0]) > _LEFT_CONSISTENCY_TOL * max(1.0, abs(vals[0])):
            raise InvalidParameterError(
                "left extension",
                (ls, li),
                f"passes through {at_first!r} at the first knot, not {vals[0]!r}",
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "left_slope", ls)
        object.__setattr__(self, "left_intercept", li)

    @classmethod
    def zero(cls, knots: Grid) -> InterpConvex:
        return cls(knots, np.zeros(knots.m), 0.0, 0.0)

    @cached_property
    def chord_slopes(self) -> Array:
        """Slopes ``d_i`` of the chords between consecutive knots."""
        return np.diff(self.values) / np.diff(self.knots.points)

    @cached_property
    def _slope_table(self) -> Array:
        return np.concatenate([[self.left_slope], self.chord_slopes, [0.0]])

    @property
    def is_zero(self) -> bool:
        return (
            self.left_slope == 0.0
            and self.left_intercept == 0.0
            and not np.any(self.values)
        )

    def convexity_violation(self) -> float:
        """Largest decrease between consecutive slopes; ``0.0`` when convex.

        Covers the left extension, every chord and the flat right extension.
        """
        drops = -np.diff(self._slope_table)
        return float(max(0.0, drops.max(initial=0.0)))

    def value(self, z: ArrayLike) -> Array:
        zz = np.asarray(z, dtype=np.float64)
        pts = self.knots.points
        inner = np.interp(zz, pts, self.values)
        return np.where(zz <= pts[0], self.left_slope * zz + self.left_intercept, inner)

    def value_and_slope(
        self, z: ArrayLike, *, left: bool = False
    ) -> tuple[Array, Array]:
        zz = np.asarray(z, dtype=np.float64)
        idx = np.searchsorted(self.knots.points, zz, side="left" if left else "right")
        return self.value(zz), self._slope_table[idx]

    def left_ray(self) -> tuple[float, float]:
        return self.left_slope, self.left_intercept

    def to_rows(self) -> list[tuple[float, float]]:
        """One ``(knot, value)`` row per knot."""
        return [
            (float(g), float(v))
            for g, v in zip(self.knots.points, self.values, strict=True)
        ]


@dataclass(frozen=True, eq=False)
class FunctionSum:
    """Pointwise sum of convex functions, itself a :class:`ConvexFunction`."""

    terms: tuple[ConvexFunction, ...]

    def value(self, z: ArrayLike) -> Array:
        zz = np.asarray(z, dtype=np.float64)
        return sum((f.value(zz) for f in self.terms), np.zeros_like(zz))

    def value_and_slope(
        self, z: ArrayLike, *, left: bool = False
    ) -> tuple[Array, Array]:
        zz = np.asarray(z, dtype=np.float64)
        total = np.zeros_like(zz)
        slope = np.zeros_like(zz)
        for f in self.terms:
            v, s = f.value_and_slope(zz, left=left)
            total = total + v
            slope = slope + s
        return total, slope

    def left_ray(self) -> tuple[float, float]:
        rays = [f.left_ray() for f in self.terms]
        return sum(r[0] for r in rays), sum(r[1] for r in rays)


Representation = MaxAffine | InterpConvex


def tangent_project(h: ConvexFunction, grid: Grid | ArrayLike) -> MaxAffine:
    """Maximum of the tangents of *h* at the grid points.

    Tangent slopes are right derivatives.  The result lies below *h*
    everywhere and touches it at every grid point.

    Raises:
        InvalidParameterError: *grid* has no points or is not increasing.
        NonFiniteValueError: *h* is not finite at a grid point.
    """
    pts = _grid_points(grid)
    values, slopes = h.value_and_slope(pts)
    _require_finite(values, "tangent projection", pts)
    _require_finite(slopes, "tangent projection slopes", pts)
    return MaxAffine(slopes, values - slopes * pts).prune()


def interp_project(
    h: ConvexFunction,
    grid: Grid | ArrayLike,
    left_slope: float | None = None,
    left_intercept: float | None = None,
) -> InterpConvex:
    """Chord interpolation of *h* on *grid* with explicit extensions.

    When no left extension is given, the slope of ``h.left_ray()`` is used
    and the line is shifted to pass through ``h(g(1))``.  For convex *h* the
    shifted line stays above *h* to the left of ``g(1)``.

    Raises:
        InvalidParameterError: The grid is not increasing, only one of the
            extension parameters is given, or the given extension does not
            pass through ``h(g(1))``.
        NonFiniteValueError: *h* is not finite at a knot.
    """
    knots = grid if isinstance(grid, Grid) else Grid(_as_vector(grid))
    pts = knots.points
    values = np.asarray(h.value(pts), dtype=np.float64)
    _require_finite(values, "interpolation projection", pts)

    if left_slope is None and left_intercept is None:
        slope = h.left_ray()[0]
        return InterpConvex(knots, values, slope, values[0] - slope * pts[0])
    if left_slope is None or left_intercept is None:
        raise InvalidParameterError(
            "left extension",
            (left_slope, left_intercept),
            "give both slope and intercept or neither",
        )
    return InterpConvex(knots, values, left_slope, left_intercept)


def _check_same_knots(fs: Sequence[InterpConvex]) -> Grid:
    knots = fs[0].knots
    for f in fs[1:]:
        if not knots.same_points(f.knots):
            raise KnotMismatchError(knots.points, f.knots.points)
    return knots


def _require_kind(fs: Sequence[object]) -> type:
    kinds = {type(f) for f in fs}
    if len(kinds) != 1 or not kinds <= {MaxAffine, InterpConvex}:
        names = ", ".join(sorted(k.__name__ for k in kinds))
        raise SchemeMismatchError("same-kind", names)
    return kinds.pop()


def add(a: Representation, b: Representation) -> Representation:
    """Pointwise sum of two representations of the same kind.

    For :class:`MaxAffine` the sum is exact: on every interval between the
    union of both breakpoint sets the active pieces are added.

    Raises:
        SchemeMismatchError: The operands are of different kinds.
        KnotMismatchError: Interpolation operands on different knots.
    """
    kind = _require_kind([a, b])
    if kind is InterpConvex:
        assert isinstance(a, InterpConvex) and isinstance(b, InterpConvex)
        knots = _check_same_knots([a, b])
        return InterpConvex(
            knots,
            a.values + b.values,
            a.left_slope + b.left_slope,
            a.left_intercept + b.left_intercept,
        )

    assert isinstance(a, MaxAffine) and isinstance(b, MaxAffine)
    bps = np.union1d(a.breakpoints, b.breakpoints)
    if bps.size == 0:
        sample_z = np.zeros(1)
    else:
        sample_z = np.concatenate(
            [[bps[0] - 1.0], 0.5 * (bps[:-1] + bps[1:]), [bps[-1] + 1.0]]
        )
    _, sa = a.value_and_slope(sample_z)
    va = a.value(sample_z)
    vb, sb = b.value_and_slope(sample_z)
    slopes = sa + sb
    return MaxAffine(slopes, va + vb - slopes * sample_z).prune()


def pointwise_max(fs: Sequence[Representation]) -> Representation:
    """Pointwise maximum of same-kind representations.

    :class:`MaxAffine` inputs are merged piece-wise and pruned.
    :class:`InterpConvex` inputs take knot-wise maxima.  Their left
    extension passes through the largest first-knot value (first operand on
    ties) with the smallest left slope among the inputs, which equals the
    exact maximum when the winner at ``g(1)`` also descends steepest and
    stays above every input's extension otherwise.

    Raises:
        InvalidParameterError: *fs* is empty.
        SchemeMismatchError: Mixed representation kinds.
        KnotMismatchError: Interpolation inputs on different knots.
    """
    if not fs:
        raise InvalidParameterError("fs", [], "at least one function is required")
    kind = _require_kind(fs)
    if len(fs) == 1:
        return fs[0]

    if kind is MaxAffine:
        pieces = [f for f in fs if isinstance(f, MaxAffine)]
        return MaxAffine(
            np.concatenate([f.slopes for f in pieces]),
            np.concatenate([f.intercepts for f in pieces]),
        ).prune()

    interps = [f for f in fs if isinstance(f, InterpConvex)]
    knots = _check_same_knots(interps)
    values = np.max(np.stack([f.values for f in interps]), axis=0)
    firsts = np.array([f.values[0] for f in interps])
    slopes = np.array([f.left_slope for f in interps])
    winner = int(np.argmax(firsts))
    slope = float(slopes.min())
    if slopes[winner] > slope:
        logger.debug(
            "Left extensions cross below the first knot %.6g; using slope %.6g",
            knots.lo,
            slope,
        )
    return InterpConvex(knots, values, slope, values[0] - slope * knots.lo)


def evaluate(f: ConvexFunction, z: ArrayLike) -> float | Array:
    """Evaluate *f* at *z*; scalars in, scalars out.

    Raises:
        NonFiniteValueError: *z* holds NaN or inf.
    """
    zz = np.asarray(z, dtype=np.float64)
    _require_finite(np.atleast_1d(zz), "evaluation input")
    out = np.asarray(f.value(zz), dtype=np.float64)
    if zz.ndim == 0:
        return float(out)
    return out
