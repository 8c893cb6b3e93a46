"""Tests for the Bermudan put model, its bounds and the lattice oracle."""

from __future__ import annotations

import math
import threading
from typing import Any

import numpy as np
import pytest

from convex_bounds import parallel
from convex_bounds.bermudan import (
    EXERCISE,
    EXERCISED,
    HOLD,
    UNEXERCISED,
    BracketRow,
    PutSpec,
    _lattice_steps,
    binomial_oracle,
    bracket_rows,
    build_put_mdp,
    convergence_sweep,
    monte_carlo_estimate,
    price_bracket,
    solve_bounds,
)
from convex_bounds.exceptions import InvalidParameterError, RefinementError
from convex_bounds.mdp_core import BoundKind, Scheme, ValueTable, backward_induction
from convex_bounds.pwl import Grid, evaluate
from convex_bounds.sampling import extreme_point_sampling, local_average_sampling, truncate

# (spot, lower, upper) for the 1-year put on [30, 60] x 301 with n = 1000
ONE_YEAR = [
    (32.0, 8.00000, 8.00000),
    (34.0, 6.05155, 6.05318),
    (36.0, 4.47689, 4.48038),
    (38.0, 3.24898, 3.25347),
    (40.0, 2.31287, 2.31766),
    (42.0, 1.61582, 1.62047),
    (44.0, 1.10874, 1.11311),
    (46.0, 0.74795, 0.75217),
]

# the 2-year put, 101 dates, on [30, 70] x 401 with n = 1000
TWO_YEAR = [
    (32.0, 8.00000, 8.00000),
    (34.0, 6.22898, 6.23254),
    (36.0, 4.83885, 4.84435),
    (38.0, 3.74319, 3.74964),
    (40.0, 2.88294, 2.88965),
    (42.0, 2.21077, 2.21735),
    (44.0, 1.68826, 1.69456),
    (46.0, 1.28419, 1.29023),
]

# dense 1-year run on [30, 70] x 4001 with n = 20000
DENSE = [
    (36.0, 4.47780, 4.47785),
    (40.0, 2.31405, 2.31413),
    (44.0, 1.10985, 1.10993),
]


class TestPutSpec:
    """Contract parameters and derived quantities."""

    def test_defaults(self, one_year_spec: PutSpec) -> None:
        assert one_year_spec.horizon == 50
        assert one_year_spec.dt == pytest.approx(0.02)
        assert one_year_spec.discount(50) == pytest.approx(math.exp(-0.06))

    @pytest.mark.parametrize(
        "kwargs",
        [{"strike": 0.0}, {"vol": -0.2}, {"expiry": math.inf}, {"exercise_dates": 1}, {"spots": (36.0, -1.0)}],
    )
    def test_rejects_invalid_fields(self, kwargs: dict[str, object]) -> None:
        with pytest.raises(InvalidParameterError):
            PutSpec(**kwargs)  # type: ignore[arg-type]


class TestPutModel:
    """Rewards, scrap and mode moves of the two-mode model."""

    def test_exercise_reward_undiscounted_at_start(self, one_year_spec: PutSpec) -> None:
        model = build_put_mdp(one_year_spec)
        assert model.reward_at(0, UNEXERCISED, 36.0, EXERCISE) == 4.0
        assert model.reward_at(0, UNEXERCISED, 36.0, HOLD) == 0.0

    def test_exercised_mode_earns_nothing(self, one_year_spec: PutSpec) -> None:
        model = build_put_mdp(one_year_spec)
        for action in model.actions:
            assert model.reward_at(10, EXERCISED, 20.0, action) == 0.0

    def test_scrap_is_discounted_intrinsic(self, one_year_spec: PutSpec) -> None:
        model = build_put_mdp(one_year_spec)
        assert evaluate(model.scrap(UNEXERCISED), 34.0) == pytest.approx(math.exp(-0.06) * 6.0, rel=1e-14)
        assert evaluate(model.scrap(EXERCISED), 34.0) == 0.0

    def test_exercise_moves_to_absorbing_mode(self, one_year_spec: PutSpec) -> None:
        model = build_put_mdp(one_year_spec)
        np.testing.assert_array_equal(model.transition_row(3, EXERCISE, UNEXERCISED), [0.0, 1.0])
        np.testing.assert_array_equal(model.transition_row(3, HOLD, UNEXERCISED), [1.0, 0.0])
        np.testing.assert_array_equal(model.transition_row(3, HOLD, EXERCISED), [0.0, 1.0])


class TestOneYearTable:
    """The 1-year put bracket on [30, 60] x 301 with n = 1000."""

    @pytest.mark.parametrize(("spot", "lower", "upper"), ONE_YEAR)
    def test_matches_reference(
        self,
        one_year_bounds: tuple[ValueTable, ValueTable],
        spot: float,
        lower: float,
        upper: float,
    ) -> None:
        low, up = one_year_bounds
        assert low.value(0, UNEXERCISED, spot) == pytest.approx(lower, abs=2e-3)
        assert up.value(0, UNEXERCISED, spot) == pytest.approx(upper, abs=2e-3)

    def test_kinds(self, one_year_bounds: tuple[ValueTable, ValueTable]) -> None:
        low, up = one_year_bounds
        assert low.bound_kind is BoundKind.LOWER
        assert up.bound_kind is BoundKind.UPPER

    def test_deep_in_the_money_is_intrinsic(self, one_year_bounds: tuple[ValueTable, ValueTable]) -> None:
        low, up = one_year_bounds
        assert low.value(0, UNEXERCISED, 32.0) == pytest.approx(8.0, abs=1e-6)
        assert up.value(0, UNEXERCISED, 32.0) == pytest.approx(8.0, abs=1e-6)

    def test_gaps_are_positive(self, one_year_bounds: tuple[ValueTable, ValueTable], one_year_spec: PutSpec) -> None:
        rows = bracket_rows(one_year_spec.spots, *one_year_bounds)
        assert all(isinstance(r, BracketRow) for r in rows)
        assert abs(rows[0].gap) <= 1e-6
        assert all(r.gap > 0 for r in rows[1:])

    def test_lower_below_upper_everywhere(self, one_year_bounds: tuple[ValueTable, ValueTable]) -> None:
        low, up = one_year_bounds
        for t in range(low.horizon + 1):
            pts = low.grids[t].points
            assert np.all(low.value(t, UNEXERCISED, pts) <= up.value(t, UNEXERCISED, pts) + 1e-9)

    def test_intrinsic_floor(self, one_year_bounds: tuple[ValueTable, ValueTable]) -> None:
        low, _ = one_year_bounds
        pts = low.grids[0].points
        assert np.all(low.value(0, UNEXERCISED, pts) >= np.maximum(40.0 - pts, 0.0) - 1e-9)

    def test_discounted_intrinsic_left_of_boundary(
        self, one_year_bounds: tuple[ValueTable, ValueTable], one_year_spec: PutSpec
    ) -> None:
        low, _ = one_year_bounds
        z = np.array([30.0, 31.0, 32.0])
        for t in (0, 10, 25, 49):
            expected = one_year_spec.discount(t) * (40.0 - z)
            np.testing.assert_allclose(low.value(t, UNEXERCISED, z), expected, atol=1e-9)

    def test_lower_is_convex_and_decreasing(self, one_year_bounds: tuple[ValueTable, ValueTable]) -> None:
        low, _ = one_year_bounds
        values = low.value(0, UNEXERCISED, low.grids[0].points)
        assert np.all(np.diff(values) <= 1e-9)
        assert np.all(np.diff(values, 2) >= -1e-9)

    def test_exercised_mode_is_zero(self, one_year_bounds: tuple[ValueTable, ValueTable]) -> None:
        for table in one_year_bounds:
            for t in (0, 25, 49):
                assert table.function(t, EXERCISED).is_zero


class TestTwoYearTable:
    """The 2-year put on [30, 70] x 401 with 101 exercise dates."""

    @pytest.mark.parametrize(("spot", "lower", "upper"), TWO_YEAR)
    def test_matches_reference(
        self,
        two_year_bounds: tuple[ValueTable, ValueTable],
        spot: float,
        lower: float,
        upper: float,
    ) -> None:
        low, up = two_year_bounds
        assert low.value(0, UNEXERCISED, spot) == pytest.approx(lower, abs=2e-3)
        assert up.value(0, UNEXERCISED, spot) == pytest.approx(upper, abs=2e-3)


class TestBinomialOracle:
    """Independent lattice values against the bracket."""

    def test_brackets_one_year(self, one_year_spec: PutSpec, one_year_bounds: tuple[ValueTable, ValueTable]) -> None:
        low, up = one_year_bounds
        for spot, value in binomial_oracle(one_year_spec).items():
            assert low.value(0, UNEXERCISED, spot) - 1e-3 <= value <= up.value(0, UNEXERCISED, spot) + 1e-3

    def test_brackets_two_year(self, two_year_spec: PutSpec, two_year_bounds: tuple[ValueTable, ValueTable]) -> None:
        low, up = two_year_bounds
        for spot, value in binomial_oracle(two_year_spec).items():
            assert low.value(0, UNEXERCISED, spot) - 1e-3 <= value <= up.value(0, UNEXERCISED, spot) + 1e-3

    def test_vanishing_volatility(self) -> None:
        spec = PutSpec(vol=1e-6, spots=(36.0, 39.0, 42.0))
        oracle = binomial_oracle(spec)
        for spot in spec.spots:
            expected = max(
                spec.discount(t) * max(40.0 - spot * math.exp(spec.rate * t * spec.dt), 0.0)
                for t in range(spec.horizon + 1)
            )
            assert oracle[spot] == pytest.approx(expected, abs=1e-6)

    def test_far_out_of_the_money(self) -> None:
        assert binomial_oracle(PutSpec(spots=(200.0,)))[200.0] < 1e-4

    def test_steps_round_up_to_exercise_dates(self) -> None:
        assert _lattice_steps(PutSpec(), 5000) == 5000
        assert _lattice_steps(PutSpec(exercise_dates=4), 5000) == 5001


class TestRefinement:
    """Nested samplings and grids move each bound towards the value."""

    def test_lower_nondecreasing_in_n(self, one_year_spec: PutSpec, table_grid: Grid) -> None:
        model = build_put_mdp(one_year_spec)
        lognormal = one_year_spec.lognormal()
        tables = [
            backward_induction(model, table_grid, local_average_sampling(lognormal, n), Scheme.TANGENT)
            for n in (250, 500, 1000)
        ]
        values = [t.value(0, UNEXERCISED, table_grid.points) for t in tables]
        for coarse, fine in zip(values, values[1:], strict=False):
            assert np.all(fine >= coarse - 1e-10)

    def test_upper_nonincreasing_in_n(self, one_year_spec: PutSpec, table_grid: Grid) -> None:
        model = build_put_mdp(one_year_spec)
        lognormal = one_year_spec.lognormal()
        support = truncate(lognormal, 0.999999999)
        tables = [
            backward_induction(model, table_grid, extreme_point_sampling(lognormal, support, n), Scheme.INTERP)
            for n in (250, 500, 1000)
        ]
        values = [t.value(0, UNEXERCISED, table_grid.points) for t in tables]
        for coarse, fine in zip(values, values[1:], strict=False):
            assert np.all(fine <= coarse + 1e-10)

    @pytest.mark.parametrize(("bound", "sign"), [("lower", 1.0), ("upper", -1.0)])
    def test_monotone_in_m(self, one_year_spec: PutSpec, bound: str, sign: float) -> None:
        points = convergence_sweep(one_year_spec, "m", [76, 151, 301], bound, n=500, max_workers=1)
        assert [p.value for p in points] == [76, 151, 301]
        estimates = np.array([p.estimate for p in points])
        assert np.all(sign * np.diff(estimates) >= -1e-10)

    @pytest.mark.parametrize(("scheme", "sign"), [(Scheme.TANGENT, 1.0), (Scheme.INTERP, -1.0)])
    def test_monotone_in_m_at_every_shared_point(
        self, one_year_spec: PutSpec, scheme: Scheme, sign: float
    ) -> None:
        model = build_put_mdp(one_year_spec)
        lognormal = one_year_spec.lognormal()
        if scheme is Scheme.TANGENT:
            sampling = local_average_sampling(lognormal, 500)
        else:
            sampling = extreme_point_sampling(lognormal, truncate(lognormal, 0.999999999), 500)
        grids = [Grid.uniform(30.0, 60.0, m) for m in (76, 151, 301)]
        tables = [backward_induction(model, g, sampling, scheme) for g in grids]
        shared = grids[0].points
        for t in (0, one_year_spec.horizon // 2, one_year_spec.horizon - 1):
            values = [table.value(t, UNEXERCISED, shared) for table in tables]
            for coarse, fine in zip(values, values[1:], strict=False):
                assert np.all(sign * (fine - coarse) >= -1e-10)

    @pytest.mark.parametrize(("axis", "values"), [("n", [0, 10]), ("n", [-5, 10]), ("m", [1, 3])])
    def test_sweep_rejects_degenerate_sizes(self, axis: str, values: list[int]) -> None:
        with pytest.raises(InvalidParameterError, match=">="):
            convergence_sweep(PutSpec(exercise_dates=3), axis, values)

    @pytest.mark.parametrize("nested", [True, False])
    def test_sweep_rejects_degenerate_sizes_without_nesting(self, nested: bool) -> None:
        with pytest.raises(InvalidParameterError):
            convergence_sweep(PutSpec(exercise_dates=3), "m", [1, 3], nested=nested)

    def test_sweep_rejects_non_nested_n(self, one_year_spec: PutSpec) -> None:
        with pytest.raises(RefinementError, match="does not refine"):
            convergence_sweep(one_year_spec, "n", [1000, 1500])

    def test_sweep_rejects_non_nested_m(self, one_year_spec: PutSpec) -> None:
        with pytest.raises(RefinementError):
            convergence_sweep(one_year_spec, "m", [76, 100])

    def test_sweep_allows_any_ladder_without_nesting(self) -> None:
        spec = PutSpec(exercise_dates=6)
        points = convergence_sweep(spec, "n", [10, 15], nested=False, m=31)
        assert [p.value for p in points] == [10, 15]

    @pytest.mark.parametrize(("values", "bound"), [([1000, 500], "lower"), ([], "lower"), ([10, 20], "middle")])
    def test_sweep_rejects_bad_requests(self, one_year_spec: PutSpec, values: list[int], bound: str) -> None:
        with pytest.raises(InvalidParameterError):
            convergence_sweep(one_year_spec, "n", values, bound)


def test_wider_grid_tightens_high_volatility_bounds() -> None:
    spec = PutSpec(vol=0.4)
    narrow = price_bracket(spec, Grid.uniform(30.0, 60.0, 301), 1000)
    wide = price_bracket(spec, Grid.uniform(20.0, 80.0, 301), 1000)
    for a, b in zip(narrow, wide, strict=True):
        assert b.gap < a.gap


def test_solve_bounds_respects_thread_cap(monkeypatch: pytest.MonkeyPatch) -> None:
    lock = threading.Lock()
    active: dict[int, int] = {}
    peak = [0]
    original = parallel._call

    def tracked(task: Any) -> Any:
        ident = threading.get_ident()
        with lock:
            active[ident] = active.get(ident, 0) + 1
            peak[0] = max(peak[0], len(active))
        try:
            return original(task)
        finally:
            with lock:
                active[ident] -= 1
                if not active[ident]:
                    del active[ident]

    monkeypatch.setattr(parallel, "_call", tracked)
    lower, upper = solve_bounds(PutSpec(exercise_dates=6), Grid.uniform(30.0, 60.0, 31), 20, max_workers=2)
    assert 1 <= peak[0] <= 2
    assert lower.value(0, UNEXERCISED, 36.0) <= upper.value(0, UNEXERCISED, 36.0)


def test_price_bracket_rows_follow_spots() -> None:
    spec = PutSpec(exercise_dates=6, spots=(34.0, 38.0))
    rows = price_bracket(spec, Grid.uniform(30.0, 60.0, 61), 100)
    assert [r.spot for r in rows] == [34.0, 38.0]
    assert all(r.lower <= r.upper for r in rows)


def test_monte_carlo_lands_near_the_bracket(
    one_year_spec: PutSpec, table_grid: Grid, one_year_bounds: tuple[ValueTable, ValueTable]
) -> None:
    low, up = one_year_bounds
    lower = float(low.value(0, UNEXERCISED, 36.0))
    upper = float(up.value(0, UNEXERCISED, 36.0))
    for seed in (1, 2, 3):
        table = monte_carlo_estimate(one_year_spec, table_grid, 1000, seed)
        assert lower - 0.05 <= table.value(0, UNEXERCISED, 36.0) <= upper + 0.05
        assert table.metadata["sampling"].startswith("per-step[50]:monte_carlo")


@pytest.mark.slow
@pytest.mark.parametrize(("spot", "lower", "upper"), DENSE)
def test_dense_run(spot: float, lower: float, upper: float, dense_bounds: tuple[ValueTable, ValueTable]) -> None:
    low, up = dense_bounds
    assert low.value(0, UNEXERCISED, spot) == pytest.approx(lower, abs=5e-4)
    assert up.value(0, UNEXERCISED, spot) == pytest.approx(upper, abs=5e-4)


@pytest.fixture(scope="module")
def dense_bounds() -> tuple[ValueTable, ValueTable]:
    return solve_bounds(PutSpec(), Grid.uniform(30.0, 70.0, 4001), 20_000)


@pytest.mark.slow
def test_monte_carlo_consistency_over_seeds(one_year_spec: PutSpec, table_grid: Grid) -> None:
    low, up = solve_bounds(one_year_spec, table_grid, 10_000)
    lower = float(low.value(0, UNEXERCISED, 36.0))
    upper = float(up.value(0, UNEXERCISED, 36.0))
    hits = sum(
        lower - 0.05 <= monte_carlo_estimate(one_year_spec, table_grid, 10_000, seed).value(0, UNEXERCISED, 36.0) <= upper + 0.05
        for seed in range(100)
    )
    assert hits >= 95
