from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import pytest
from numpy.typing import ArrayLike, NDArray

from convex_bounds.bermudan import PutSpec, solve_bounds
from convex_bounds.mdp_core import ValueTable
from convex_bounds.pwl import Grid, MaxAffine


@dataclass(frozen=True)
class SoftHingeSum:
    """Convex piecewise-quadratic test function.

    ``c + Σ w_j·φ_j(k_j − z) + Σ u_j·φ_j(z − l_j)`` where ``φ`` is zero on
    the negative axis, quadratic up to ``δ`` and affine beyond.  Without the
    increasing terms the function is non-increasing.  It is affine for
    ``z`` far to the left.
    """

    kinks: NDArray[np.float64]
    widths: NDArray[np.float64]
    weights: NDArray[np.float64]
    rising_kinks: NDArray[np.float64]
    rising_widths: NDArray[np.float64]
    rising_weights: NDArray[np.float64]
    constant: float

    @staticmethod
    def _phi(x: NDArray[np.float64], delta: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        inside = np.clip(x, 0.0, delta)
        value = np.where(x > delta, x - 0.5 * delta, 0.5 * inside**2 / delta)
        return value, inside / delta

    def value_and_slope(
        self, z: ArrayLike, *, left: bool = False
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        zz = np.asarray(z, dtype=np.float64)[..., None]
        v1, d1 = self._phi(self.kinks - zz, self.widths)
        v2, d2 = self._phi(zz - self.rising_kinks, self.rising_widths)
        value = self.constant + v1 @ self.weights + v2 @ self.rising_weights
        slope = -(d1 @ self.weights) + d2 @ self.rising_weights
        return value, slope

    def value(self, z: ArrayLike) -> NDArray[np.float64]:
        return self.value_and_slope(z)[0]

    def left_ray(self) -> tuple[float, float]:
        slope = -float(self.weights.sum())
        intercept = self.constant + float(self.weights @ (self.kinks - 0.5 * self.widths))
        return slope, intercept


def make_soft_hinge(seed: int, *, rising: bool = False, lo: float = 30.0, hi: float = 60.0) -> SoftHingeSum:
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 5))
    r = int(rng.integers(1, 3)) if rising else 0
    return SoftHingeSum(
        kinks=rng.uniform(lo, hi, k),
        widths=rng.uniform(0.5, 10.0, k),
        weights=rng.uniform(0.1, 2.0, k),
        rising_kinks=rng.uniform(lo, hi, r),
        rising_widths=rng.uniform(0.5, 10.0, r),
        rising_weights=rng.uniform(0.05, 1.0, r),
        constant=float(rng.uniform(0.0, 1.0)),
    )


def make_max_affine(seed: int, pieces: int = 5) -> MaxAffine:
    rng = np.random.default_rng(seed)
    return MaxAffine(rng.normal(size=pieces), rng.normal(size=pieces))


def brute_force_max(f: MaxAffine, z: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.max(f.slopes[:, None] * z[None, :] + f.intercepts[:, None], axis=0)


@pytest.fixture()
def soft_hinge() -> Callable[..., SoftHingeSum]:
    """Factory of random convex piecewise-quadratic functions."""
    return make_soft_hinge


@pytest.fixture()
def random_max_affine() -> Callable[..., MaxAffine]:
    return make_max_affine


@pytest.fixture()
def dense_max() -> Callable[[MaxAffine, NDArray[np.float64]], NDArray[np.float64]]:
    """Pointwise oracle over every piece, pruned or not."""
    return brute_force_max


@pytest.fixture()
def sample_z() -> NDArray[np.float64]:
    return np.random.default_rng(2024).uniform(-20.0, 20.0, 10_000)


@pytest.fixture(scope="session")
def one_year_spec() -> PutSpec:
    return PutSpec()


@pytest.fixture(scope="session")
def two_year_spec() -> PutSpec:
    return PutSpec(expiry=2.0, exercise_dates=101)


@pytest.fixture(scope="session")
def table_grid() -> Grid:
    return Grid.uniform(30.0, 60.0, 301)


@pytest.fixture(scope="session")
def one_year_bounds(one_year_spec: PutSpec, table_grid: Grid) -> tuple[ValueTable, ValueTable]:
    """Lower and upper tables of the 1-year put, n = 1000 on [30, 60] x 301."""
    return solve_bounds(one_year_spec, table_grid, 1000)


@pytest.fixture(scope="session")
def two_year_bounds(two_year_spec: PutSpec) -> tuple[ValueTable, ValueTable]:
    """Lower and upper tables of the 2-year put, n = 1000 on [30, 70] x 401."""
    return solve_bounds(two_year_spec, Grid.uniform(30.0, 70.0, 401), 1000)
