"""Bermudan put on a geometric Brownian motion as a two-mode convex MDP.

The unexercised mode collects the discounted intrinsic value when the
holder exercises and moves to the absorbing exercised mode, whose value is
zero.  Discounting is embedded in the rewards.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum

import numpy as np

from convex_bounds.exceptions import InvalidParameterError, RefinementError
from convex_bounds.mdp_core import (
    MdpModel,
    MultiplicativeTransition,
    Scheme,
    ValueTable,
    backward_induction,
)
from convex_bounds.parallel import run_all, split_workers
from convex_bounds.pwl import ConvexFunction, Grid, MaxAffine
from convex_bounds.sampling import (
    LognormalSpec,
    extreme_point_sampling,
    local_average_sampling,
    monte_carlo_schedule,
    truncate,
)

logger = logging.getLogger(__name__)

UNEXERCISED = "unexercised"
EXERCISED = "exercised"
HOLD = "dont_exercise"
EXERCISE = "exercise"

DEFAULT_MASS = 0.999999999
TABLE_SPOTS: tuple[float, ...] = (32.0, 34.0, 36.0, 38.0, 40.0, 42.0, 44.0, 46.0)


class SweepAxis(StrEnum):
    N = "n"
    M = "m"


@dataclass(frozen=True)
class PutSpec:
    """Bermudan put contract and market.

    Attributes:
        strike: K.
        rate: Annual interest rate κ, also the drift of the asset.
        vol: Annual volatility.
        expiry: Years to expiry.
        exercise_dates: Number of evenly spaced exercise dates including
            t = 0 and expiry; the horizon is ``exercise_dates - 1`` steps.
        spots: Initial asset prices to report.
    """

    strike: float = 40.0
    rate: float = 0.06
    vol: float = 0.2
    expiry: float = 1.0
    exercise_dates: int = 51
    spots: tuple[float, ...] = TABLE_SPOTS

    def __post_init__(self) -> None:
        for name in ("strike", "vol", "expiry"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidParameterError(name, value, "must be > 0")
        if not math.isfinite(self.rate):
            raise InvalidParameterError("rate", self.rate, "must be finite")
        if int(self.exercise_dates) != self.exercise_dates or self.exercise_dates < 2:
            raise InvalidParameterError(
                "exercise_dates", self.exercise_dates, "must be an integer >= 2"
            )
        spots = tuple(float(z) for z in self.spots)
        if any(not (math.isfinite(z) and z > 0) for z in spots):
            raise InvalidParameterError("spots", spots, "must be finite and > 0")
        object.__setattr__(self, "spots", spots)
        object.__setattr__(self, "exercise_dates", int(self.exercise_dates))

    @property
    def horizon(self) -> int:
        return self.exercise_dates - 1

    @property
    def dt(self) -> float:
        return self.expiry / self.horizon

    def discount(self, t: int) -> float:
        """``e^{-κ·t·Δ}``."""
        return math.exp(-self.rate * t * self.dt)

    def lognormal(self) -> LognormalSpec:
        return LognormalSpec(rate=self.rate, vol=self.vol, dt=self.dt)


@dataclass(frozen=True)
class BracketRow:
    """Lower and upper bound on the put value at one initial price."""

    spot: float
    lower: float
    upper: float

    @property
    def gap(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class SweepPoint:
    value: int
    estimate: float


def _discounted_intrinsic(spec: PutSpec, t: int) -> MaxAffine:
    d = spec.discount(t)
    return MaxAffine.from_pieces([(-d, d * spec.strike), (0.0, 0.0)])


def build_put_mdp(spec: PutSpec) -> MdpModel:
    """Two modes, two actions, deterministic mode moves and ``f(w, z) = w·z``.

    Example::

        model = build_put_mdp(PutSpec())
        model.reward_at(0, "unexercised", 36.0, "exercise")  # 4.0
    """
    horizon = spec.horizon
    intrinsic = tuple(_discounted_intrinsic(spec, t) for t in range(horizon + 1))
    zero = MaxAffine.zero()

    # [t, action, mode, next mode] with modes (unexercised, exercised)
    alpha = np.zeros((horizon, 2, 2, 2))
    alpha[:, 0, 0, 0] = 1.0
    alpha[:, 1, 0, 1] = 1.0
    alpha[:, :, 1, 1] = 1.0

    def reward(t: int, mode: str, action: str) -> ConvexFunction:
        if mode == UNEXERCISED and action == EXERCISE:
            return intrinsic[t]
        return zero

    def scrap(mode: str) -> ConvexFunction:
        return intrinsic[horizon] if mode == UNEXERCISED else zero

    return MdpModel(
        horizon=horizon,
        modes=(UNEXERCISED, EXERCISED),
        actions=(HOLD, EXERCISE),
        mode_transition=alpha,
        reward=reward,
        scrap=scrap,
        state_transition=MultiplicativeTransition(),
        zero_modes=frozenset({EXERCISED}),
        terminal_action=EXERCISE,
    )


def solve_bounds(
    spec: PutSpec,
    grid: Grid,
    n: int,
    mass: float = DEFAULT_MASS,
    *,
    single_projection: bool = False,
    max_workers: int | None = None,
) -> tuple[ValueTable, ValueTable]:
    """Run the lower and upper inductions side by side.

    The lower run uses the tangent scheme with local averages of the full
    lognormal; the upper run the interpolation scheme with extreme points of
    the distribution truncated to *mass*.  *max_workers* caps the threads of
    both runs together.
    """
    model = build_put_mdp(spec)
    lognormal = spec.lognormal()
    lower_sampling = local_average_sampling(lognormal, n)
    upper_sampling = extreme_point_sampling(lognormal, truncate(lognormal, mass), n)
    outer, inner = split_workers(max_workers, 2)
    options = {"single_projection": single_projection, "max_workers": inner}
    lower, upper = run_all(
        [
            (backward_induction, model, grid, lower_sampling, Scheme.TANGENT, options),
            (backward_induction, model, grid, upper_sampling, Scheme.INTERP, options),
        ],
        max_workers=outer,
    )
    return lower, upper


def bracket_rows(
    spots: Sequence[float], lower: ValueTable, upper: ValueTable
) -> list[BracketRow]:
    return [
        BracketRow(
            spot=float(z),
            lower=float(lower.value(0, UNEXERCISED, z)),
            upper=float(upper.value(0, UNEXERCISED, z)),
        )
        for z in spots
    ]


def price_bracket(
    spec: PutSpec,
    grid: Grid,
    n: int,
    mass: float = DEFAULT_MASS,
    *,
    single_projection: bool = False,
    max_workers: int | None = None,
) -> list[BracketRow]:
    """Lower/upper value of the put at every spot of *spec*.

    Example::

        rows = price_bracket(PutSpec(), Grid.uniform(30, 60, 301), 1000)
        rows[2]  # BracketRow(spot=36.0, lower≈4.47689, upper≈4.48038)
    """
    lower, upper = solve_bounds(
        spec,
        grid,
        n,
        mass,
        single_projection=single_projection,
        max_workers=max_workers,
    )
    return bracket_rows(spec.spots, lower, upper)


def monte_carlo_estimate(
    spec: PutSpec,
    grid: Grid,
    n: int,
    seed: int,
    *,
    max_workers: int | None = None,
) -> ValueTable:
    """Tangent-scheme induction with fresh antithetic samplings per step.

    The result estimates the value but is not a bound.
    """
    model = build_put_mdp(spec)
    schedule = monte_carlo_schedule(spec.lognormal(), n, seed, spec.horizon)
    return backward_induction(model, grid, schedule, Scheme.TANGENT, max_workers=max_workers)


def _lattice_steps(spec: PutSpec, steps: int) -> int:
    per_date = math.ceil(steps / spec.horizon)
    return per_date * spec.horizon


def binomial_oracle(spec: PutSpec, steps: int = 5000) -> dict[float, float]:
    """Bermudan put value per spot on a recombining binomial lattice.

    The lattice is centred on the log-drift ``(κ − vol²/2)`` so the up
    probability stays in ``(0, 1)`` for any volatility.  The step count is
    rounded up to a multiple of the horizon; exercise is checked only on the
    layers of the exercise dates.
    """
    total = _lattice_steps(spec, steps)
    per_date = total // spec.horizon
    h = spec.expiry / total
    drift = (spec.rate - 0.5 * spec.vol**2) * h
    jump = spec.vol * math.sqrt(h)
    log_u = drift + jump
    log_d = drift - jump
    p = (math.exp(spec.rate * h) - math.exp(log_d)) / (math.exp(log_u) - math.exp(log_d))
    disc = math.exp(-spec.rate * h)

    spots = np.asarray(spec.spots, dtype=np.float64)

    def prices(layer: int) -> np.ndarray:
        ups = np.arange(layer + 1)
        return spots[:, None] * np.exp(layer * log_d + ups * (log_u - log_d))[None, :]

    values = np.maximum(spec.strike - prices(total), 0.0)
    for layer in range(total - 1, -1, -1):
        values = disc * (p * values[:, 1:] + (1.0 - p) * values[:, :-1])
        if layer % per_date == 0:
            values = np.maximum(values, spec.strike - prices(layer))
    logger.debug("Binomial oracle on %d steps (%d per exercise date)", total, per_date)
    return {float(z): float(v) for z, v in zip(spots, values[:, 0], strict=True)}


def _check_ladder(axis: SweepAxis, values: Sequence[int], nested: bool) -> None:
    if not values:
        raise InvalidParameterError(f"{axis} ladder", [], "needs at least one value")
    least = 1 if axis is SweepAxis.N else 2
    if min(values) < least:
        raise InvalidParameterError(
            f"{axis} ladder", list(values), f"every value must be >= {least}"
        )
    for coarse, fine in zip(values, values[1:], strict=False):
        if fine <= coarse:
            raise InvalidParameterError(
                f"{axis} ladder", list(values), "values must be strictly increasing"
            )
        if not nested:
            continue
        if axis is SweepAxis.N and fine % coarse:
            raise RefinementError(str(axis), coarse, fine)
        if axis is SweepAxis.M and (fine - 1) % (coarse - 1):
            raise RefinementError(str(axis), coarse, fine)


def _sweep_estimate(
    spec: PutSpec,
    grid: Grid,
    n: int,
    bound: Scheme,
    mass: float,
    spot: float,
) -> float:
    model = build_put_mdp(spec)
    lognormal = spec.lognormal()
    if bound is Scheme.TANGENT:
        sampling = local_average_sampling(lognormal, n)
    else:
        sampling = extreme_point_sampling(lognormal, truncate(lognormal, mass), n)
    table = backward_induction(model, grid, sampling, bound, max_workers=1)
    return float(table.value(0, UNEXERCISED, spot))


def convergence_sweep(
    spec: PutSpec,
    axis: SweepAxis | str,
    values: Sequence[int],
    bound: str = "lower",
    *,
    spot: float = 36.0,
    n: int = 1000,
    m: int = 301,
    lo: float = 30.0,
    hi: float = 60.0,
    mass: float = DEFAULT_MASS,
    nested: bool = True,
    max_workers: int | None = None,
) -> list[SweepPoint]:
    """Bound at *spot* as the sampling size or the grid size grows.

    Along ``axis="n"`` the grid is fixed at *m* points on ``[lo, hi]``;
    along ``axis="m"`` the sampling size is fixed at *n*.  With *nested*
    every value must refine its predecessor (n divides the next n; the
    intervals of each grid split those of the previous one), which makes the
    lower series nondecreasing and the upper series nonincreasing.

    Raises:
        RefinementError: A value does not refine its predecessor.
        InvalidParameterError: A value is below 1 (``n``) or 2 (``m``),
            values are not strictly increasing, or *bound* is not
            ``"lower"``/``"upper"``.
    """
    axis = SweepAxis(axis)
    if bound not in ("lower", "upper"):
        raise InvalidParameterError("bound", bound, "must be 'lower' or 'upper'")
    scheme = Scheme.TANGENT if bound == "lower" else Scheme.INTERP
    ladder = [int(v) for v in values]
    _check_ladder(axis, ladder, nested)

    tasks = []
    for value in ladder:
        if axis is SweepAxis.N:
            tasks.append((_sweep_estimate, spec, Grid.uniform(lo, hi, m), value, scheme, mass, spot))
        else:
            tasks.append((_sweep_estimate, spec, Grid.uniform(lo, hi, value), n, scheme, mass, spot))
    estimates = run_all(tasks, max_workers=max_workers)
    return [SweepPoint(v, e) for v, e in zip(ladder, estimates, strict=True)]
