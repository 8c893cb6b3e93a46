"""Weighted point-mass approximations of a one-step lognormal disturbance.

The disturbance is the gross return ``W = exp(mu + s·N)`` of a geometric
Brownian motion over one time step, ``N`` standard normal.  All closed forms
are written in terms of standardized normal levels so that quantiles at
probability 0 and 1 map to ``∓inf`` without taking logarithms of zero.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from enum import StrEnum
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import ndtr, ndtri

from convex_bounds._utils import _as_vector
from convex_bounds.exceptions import InvalidParameterError

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]

_WEIGHT_SUM_TOL = 1e-12
# Relative agreement between a support's declared mass and its endpoints.
_MASS_RTOL = 1e-6


class SamplingKind(StrEnum):
    MONTE_CARLO = "monte_carlo"
    LOCAL_AVERAGE = "local_average"
    EXTREME_POINT = "extreme_point"


def _normal_mass(a: ArrayLike, b: ArrayLike) -> Array:
    """``Φ(b) − Φ(a)`` evaluated on the tail that keeps full precision."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    upper = ndtr(-a) - ndtr(-b)
    lower = ndtr(b) - ndtr(a)
    return np.where(a > 0, upper, lower)


def _positive_count(name: str, n: int) -> int:
    if int(n) != n or n < 1:
        raise InvalidParameterError(name, n, "must be a positive integer")
    return int(n)


@dataclass(frozen=True)
class LognormalSpec:
    """One-step gross return of a GBM with drift *rate* and volatility *vol*.

    Attributes:
        rate: Annual drift κ.
        vol: Annual volatility, ``> 0``.
        dt: Step length Δ in years, ``> 0``.
    """

    rate: float
    vol: float
    dt: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.rate):
            raise InvalidParameterError("rate", self.rate, "must be finite")
        if not (np.isfinite(self.vol) and self.vol > 0):
            raise InvalidParameterError("vol", self.vol, "must be > 0")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise InvalidParameterError("dt", self.dt, "must be > 0")

    @property
    def mu(self) -> float:
        """Mean of ``log W``: ``(κ − vol²/2)·Δ``."""
        return (self.rate - 0.5 * self.vol**2) * self.dt

    @property
    def s(self) -> float:
        """Standard deviation of ``log W``: ``vol·√Δ``."""
        return self.vol * float(np.sqrt(self.dt))

    def mean(self) -> float:
        return float(np.exp(self.mu + 0.5 * self.s**2))

    def from_level(self, x: ArrayLike) -> Array:
        """Map standard normal levels to returns."""
        return np.exp(self.mu + self.s * np.asarray(x, dtype=np.float64))

    def level(self, w: ArrayLike) -> Array:
        """Standardized level ``(log w − mu)/s``; ``-inf`` at ``w = 0``."""
        ww = np.asarray(w, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return (np.log(ww) - self.mu) / self.s

    def quantile(self, p: ArrayLike) -> Array:
        return self.from_level(ndtri(np.asarray(p, dtype=np.float64)))

    def cdf(self, w: ArrayLike) -> Array:
        return ndtr(self.level(w))

    def pdf(self, w: ArrayLike) -> Array:
        ww = np.asarray(w, dtype=np.float64)
        x = self.level(ww)
        return np.exp(-0.5 * x**2) / (ww * self.s * np.sqrt(2.0 * np.pi))

    def partial_expectation(self, a: ArrayLike, b: ArrayLike) -> Array:
        """``E[W·1(a < W <= b)]`` in closed form."""
        return self.mean() * _normal_mass(self.level(a) - self.s, self.level(b) - self.s)


@dataclass(frozen=True)
class TruncatedSupport:
    """Compact support ``[lo, hi]`` keeping *mass* of the disturbance.

    The renormalized measure multiplies the density by ``alpha = 1/mass``.
    """

    lo: float
    hi: float
    mass: float

    def __post_init__(self) -> None:
        if not (0.0 < self.mass <= 1.0):
            raise InvalidParameterError("mass", self.mass, "must lie in (0, 1]")
        if not self.lo < self.hi:
            raise InvalidParameterError(
                "support", (self.lo, self.hi), "lo must be < hi"
            )

    @property
    def alpha(self) -> float:
        return 1.0 / self.mass

    @property
    def tail(self) -> float:
        """Probability cut from each side."""
        return 0.5 * (1.0 - self.mass)


def truncate(spec: LognormalSpec, mass: float) -> TruncatedSupport:
    """Return the interval keeping *mass* of the distribution, symmetric in probability.

    Raises:
        InvalidParameterError: *mass* is not in ``(0, 1)``.

    Example::

        truncate(LognormalSpec(0.06, 0.2, 1 / 50), 0.999999999)
        # TruncatedSupport(lo=0.84198..., hi=1.18957..., mass=0.999999999)
    """
    if not (0.0 < mass < 1.0):
        raise InvalidParameterError("mass", mass, "must lie strictly between 0 and 1")
    tail = 0.5 * (1.0 - mass)
    x_tail = float(ndtri(tail))
    lo = float(spec.from_level(x_tail))
    hi = float(spec.from_level(-x_tail))
    return TruncatedSupport(lo=lo, hi=hi, mass=mass)


def _support_levels(spec: LognormalSpec, support: TruncatedSupport, n: int) -> tuple[Array, float]:
    """Normal levels of the equal-mass breakpoints of ``[support.lo, support.hi]``.

    Returns the ``n + 1`` levels and the probability the support holds.

    Raises:
        InvalidParameterError: *support.mass* disagrees with the probability
            between the endpoints.
    """
    a = float(spec.level(support.lo)) if support.lo > 0 else -np.inf
    b = float(spec.level(support.hi))
    below = float(ndtr(a))
    above = float(ndtr(-b))
    kept = 1.0 - below - above
    cut = below + above
    if kept <= 0.0 or abs(cut - (1.0 - support.mass)) > _MASS_RTOL * max(cut, 1.0 - support.mass):
        raise InvalidParameterError(
            "support",
            (support.lo, support.hi, support.mass),
            f"endpoints hold probability {kept!r}, not the declared mass",
        )
    u = np.arange(n + 1) / n
    lower = ndtri(below + u * kept)
    upper = -ndtri(above + (1.0 - u) * kept)
    levels = np.where(u <= 0.5, lower, upper)
    levels[0] = a
    levels[-1] = b
    return levels, kept


@dataclass(frozen=True, eq=False)
class DisturbanceSampling:
    """Points ``W(k)`` with probabilities ``ρ(k)``.

    Attributes:
        points: Positive finite disturbance values.
        weights: Non-negative probabilities summing to one.
        kind: How the sampling was constructed.
        n: Sample count, or partition size for extreme-point samplings
            (which carry ``n + 1`` points).
        seed: Seed of a Monte Carlo sampling, ``None`` otherwise.
        action: Action the sampling belongs to; ``None`` when shared by
            every action.
    """

    points: Array
    weights: Array
    kind: SamplingKind
    n: int
    seed: int | None = None
    action: str | None = None

    def __post_init__(self) -> None:
        pts = _as_vector(self.points).copy()
        wts = _as_vector(self.weights).copy()
        if pts.shape != wts.shape or pts.size == 0:
            raise InvalidParameterError(
                "sampling", (pts.size, wts.size), "needs matching non-empty points and weights"
            )
        if not np.all(np.isfinite(pts)) or np.any(pts <= 0):
            raise InvalidParameterError("points", pts, "must be finite and > 0")
        if np.any(wts < 0):
            raise InvalidParameterError("weights", wts, "must be >= 0")
        total = float(wts.sum())
        if abs(total - 1.0) > _WEIGHT_SUM_TOL:
            raise InvalidParameterError("weights", total, "must sum to 1")
        pts.setflags(write=False)
        wts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)
        object.__setattr__(self, "kind", SamplingKind(self.kind))

    @property
    def ident(self) -> str:
        """Short identifier recorded in run metadata."""
        tag = f"{self.kind}:n={self.n}"
        if self.seed is not None:
            tag += f":seed={self.seed}"
        if self.action is not None:
            tag += f":action={self.action}"
        return tag

    def mean(self) -> float:
        return float(np.dot(self.weights, self.points))

    def expectation(self, g: Callable[[Array], ArrayLike]) -> float:
        """``Σ ρ(k)·g(W(k))`` for a vectorised *g*."""
        return float(np.dot(self.weights, np.asarray(g(self.points), dtype=np.float64)))

    @cached_property
    def size(self) -> int:
        return int(self.points.size)

    def to_rows(self) -> list[tuple[int, float, float]]:
        """``(k, W(k), ρ(k))`` rows, ``k`` starting at 1."""
        return [
            (k, float(w), float(r))
            for k, (w, r) in enumerate(zip(self.points, self.weights, strict=True), start=1)
        ]


def monte_carlo_antithetic(
    spec: LognormalSpec,
    n: int,
    seed: int | np.random.SeedSequence,
    *,
    action: str | None = None,
) -> DisturbanceSampling:
    """Draw ``n/2`` normals and pair each with its negation.

    Raises:
        InvalidParameterError: *n* is odd or smaller than 2.
    """
    if int(n) != n or n < 2 or n % 2:
        raise InvalidParameterError("n", n, "must be an even integer >= 2")
    n = int(n)
    rng = np.random.default_rng(seed)
    normals = rng.standard_normal(n // 2)
    points = spec.from_level(np.concatenate([normals, -normals]))
    recorded = seed.entropy if isinstance(seed, np.random.SeedSequence) else int(seed)
    return DisturbanceSampling(
        points=points,
        weights=np.full(n, 1.0 / n),
        kind=SamplingKind.MONTE_CARLO,
        n=n,
        seed=recorded if isinstance(recorded, int) else None,
        action=action,
    )


def monte_carlo_schedule(
    spec: LognormalSpec,
    n: int,
    seed: int,
    steps: int,
    *,
    action: str | None = None,
) -> list[DisturbanceSampling]:
    """Independent antithetic samplings for *steps* time steps from one seed."""
    steps = _positive_count("steps", steps)
    children = np.random.SeedSequence(seed).spawn(steps)
    samplings = [
        monte_carlo_antithetic(spec, n, child, action=action) for child in children
    ]
    logger.debug("Drew %d Monte Carlo samplings of size %d (seed %d)", steps, n, seed)
    return samplings


def local_average_sampling(
    spec: LognormalSpec,
    n: int,
    *,
    support: TruncatedSupport | None = None,
    action: str | None = None,
) -> DisturbanceSampling:
    """Conditional means over an equiprobable partition.

    Cell ``k`` spans the quantiles ``(k−1)/n`` and ``k/n``; its point is
    ``E[W | W in cell]`` and its weight ``1/n``.  Breakpoints for ``n`` are a
    subset of those for any multiple of ``n``.  With *support* the partition
    and the conditional means refer to the distribution restricted to
    ``[support.lo, support.hi]``.

    Raises:
        InvalidParameterError: *n* is not a positive integer, or the mass of
            *support* disagrees with its endpoints.
    """
    n = _positive_count("n", n)
    if support is None:
        levels = ndtri(np.arange(n + 1) / n)
        scale = 1.0
    else:
        levels, kept = _support_levels(spec, support, n)
        scale = 1.0 / kept
    cell_partial = scale * spec.mean() * _normal_mass(levels[:-1] - spec.s, levels[1:] - spec.s)
    return DisturbanceSampling(
        points=n * cell_partial,
        weights=np.full(n, 1.0 / n),
        kind=SamplingKind.LOCAL_AVERAGE,
        n=n,
        action=action,
    )


def extreme_point_sampling(
    spec: LognormalSpec,
    support: TruncatedSupport,
    n: int,
    *,
    action: str | None = None,
) -> DisturbanceSampling:
    """Push each cell's mass to its two endpoints, preserving the cell mean.

    The distribution restricted to ``[support.lo, support.hi]`` is split into
    *n* cells of mass ``1/n`` with endpoints ``e(1) < … < e(n+1)``, the outer
    two being the support itself.  Cell ``j`` with partial expectation
    ``Λ_j`` sends ``(e(j+1)/n − Λ_j)/(e(j+1) − e(j))`` to its left endpoint
    and the rest of its ``1/n`` to its right endpoint.  Interior endpoints
    collect from both neighbouring cells.

    Raises:
        InvalidParameterError: *n* is not a positive integer, the support
            is not compact, or its mass disagrees with its endpoints.
    """
    n = _positive_count("n", n)
    if not np.isfinite(support.hi) or support.lo <= 0:
        raise InvalidParameterError(
            "support", (support.lo, support.hi), "must be a compact subset of (0, inf)"
        )
    levels, kept = _support_levels(spec, support, n)
    edges = spec.from_level(levels)
    edges[0] = support.lo
    edges[-1] = support.hi
    partial = spec.mean() * _normal_mass(levels[:-1] - spec.s, levels[1:] - spec.s) / kept
    width = np.diff(edges)
    left = (edges[1:] / n - partial) / width
    right = (partial - edges[:-1] / n) / width

    weights = np.zeros(n + 1)
    weights[:-1] += left
    weights[1:] += right
    if np.any(weights < 0):
        worst = float(weights.min())
        logger.warning(
            "Clipping negative extreme-point weights (min %.3e) for n=%d", worst, n
        )
        weights = np.clip(weights, 0.0, None)
    weights = weights / weights.sum()
    return DisturbanceSampling(
        points=edges,
        weights=weights,
        kind=SamplingKind.EXTREME_POINT,
        n=n,
        action=action,
    )
