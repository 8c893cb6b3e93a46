"""Modified Bellman recursion for MDPs with convex value functions.

The model has a finite set of modes driven by a controlled Markov chain and
one continuous state evolving through a transition affine in the state.
Expectations over the disturbance are replaced by finite weighted sums
(:mod:`convex_bounds.sampling`) and every function is projected onto a grid
(:mod:`convex_bounds.pwl`).  The tangent scheme produces lower bounds, the
interpolation scheme upper bounds.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any, Protocol, TypeAlias

import numpy as np
from numpy.typing import ArrayLike, NDArray

from convex_bounds._utils import _require_finite, _row_blocks
from convex_bounds.exceptions import (
    ConvexBoundsError,
    InductionStepError,
    InvalidParameterError,
    SchemeMismatchError,
)
from convex_bounds.parallel import run_all
from convex_bounds.pwl import (
    ConvexFunction,
    FunctionSum,
    Grid,
    InterpConvex,
    MaxAffine,
    Representation,
    add,
    evaluate,
    interp_project,
    pointwise_max,
    tangent_project,
)
from convex_bounds.sampling import DisturbanceSampling

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]

_PROBABILITY_TOL = 1e-12
_CONVEXITY_TOL = 1e-9


class Scheme(StrEnum):
    TANGENT = "tangent"
    INTERP = "interp"


class BoundKind(StrEnum):
    LOWER = "lower"
    UPPER = "upper"


SCHEME_BOUND: dict[Scheme, BoundKind] = {
    Scheme.TANGENT: BoundKind.LOWER,
    Scheme.INTERP: BoundKind.UPPER,
}

_REPRESENTATION: dict[Scheme, type] = {
    Scheme.TANGENT: MaxAffine,
    Scheme.INTERP: InterpConvex,
}


class StateTransition(Protocol):
    """Continuous-state dynamics ``z' = f(t, w, z)``, affine in *z*.

    ``coefficients`` returns ``(scale, shift)`` per disturbance with
    ``f(t, w, z) = scale·z + shift`` and ``scale > 0``; convexity of the
    value functions is preserved through such maps.
    """

    def __call__(self, t: int, w: ArrayLike, z: ArrayLike) -> Array: ...

    def coefficients(self, t: int, w: Array) -> tuple[Array, Array]: ...


@dataclass(frozen=True)
class MultiplicativeTransition:
    """``f(t, w, z) = w·z``: the asset price times a gross return."""

    def __call__(self, t: int, w: ArrayLike, z: ArrayLike) -> Array:
        return np.asarray(w, dtype=np.float64) * np.asarray(z, dtype=np.float64)

    def coefficients(self, t: int, w: Array) -> tuple[Array, Array]:
        return np.asarray(w, dtype=np.float64), np.zeros_like(w, dtype=np.float64)


RewardFn: TypeAlias = Callable[[int, str, str], ConvexFunction]
ScrapFn: TypeAlias = Callable[[str], ConvexFunction]
SamplingSource: TypeAlias = (
    DisturbanceSampling
    | Sequence[DisturbanceSampling]
    | Callable[[int, str], DisturbanceSampling]
)
GridSource: TypeAlias = Grid | Sequence[Grid]


@dataclass(frozen=True, eq=False)
class MdpModel:
    """Finite-horizon MDP with modes, actions and one continuous state.

    Attributes:
        horizon: Number of decision steps ``T``; decisions at ``t = 0..T-1``.
        modes: Mode labels.
        actions: Action labels in tie-break order (earlier wins).
        mode_transition: Probabilities indexed ``[t, a, p, p']``.
        reward: ``(t, mode, action) -> z ↦ r_t(mode, z, action)``.
        scrap: ``mode -> z ↦ r_T(mode, z)``.
        state_transition: Dynamics of the continuous state.
        zero_modes: Absorbing modes whose value is identically zero.
        terminal_action: Action credited with the scrap in the ``t = T``
            policy row.
    """

    horizon: int
    modes: tuple[str, ...]
    actions: tuple[str, ...]
    mode_transition: Array
    reward: RewardFn
    scrap: ScrapFn
    state_transition: StateTransition
    zero_modes: frozenset[str] = field(default_factory=frozenset)
    terminal_action: str | None = None

    def __post_init__(self) -> None:
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise InvalidParameterError("horizon", self.horizon, "must be >= 1")
        for name, labels in (("modes", self.modes), ("actions", self.actions)):
            if not labels or len(set(labels)) != len(labels):
                raise InvalidParameterError(name, labels, "labels must be non-empty and unique")
        alpha = np.asarray(self.mode_transition, dtype=np.float64)
        shape = (self.horizon, len(self.actions), len(self.modes), len(self.modes))
        if alpha.shape != shape:
            raise InvalidParameterError(
                "mode_transition", alpha.shape, f"expected shape {shape}"
            )
        if np.any(alpha < 0) or not np.all(np.isfinite(alpha)):
            raise InvalidParameterError("mode_transition", alpha, "entries must be >= 0")
        row_sums = alpha.sum(axis=-1)
        if np.any(np.abs(row_sums - 1.0) > _PROBABILITY_TOL):
            raise InvalidParameterError(
                "mode_transition", row_sums, "rows must sum to 1"
            )
        if not set(self.zero_modes) <= set(self.modes):
            raise InvalidParameterError("zero_modes", sorted(self.zero_modes), "unknown mode")
        if self.terminal_action is not None and self.terminal_action not in self.actions:
            raise InvalidParameterError("terminal_action", self.terminal_action, "unknown action")
        alpha.setflags(write=False)
        object.__setattr__(self, "mode_transition", alpha)
        object.__setattr__(self, "zero_modes", frozenset(self.zero_modes))

    def mode_index(self, mode: str) -> int:
        return self.modes.index(mode)

    def action_index(self, action: str) -> int:
        return self.actions.index(action)

    def transition_row(self, t: int, action: str, mode: str) -> Array:
        """``α(t, action, mode, ·)`` over next modes."""
        return self.mode_transition[t, self.action_index(action), self.mode_index(mode)]

    def reward_at(self, t: int, mode: str, z: ArrayLike, action: str) -> float | Array:
        return evaluate(self.reward(t, mode, action), z)

    def check_convexity(
        self, lo: float, hi: float, *, samples: int = 64, seed: int = 0
    ) -> list[str]:
        """Midpoint-convexity spot check of rewards and scrap on ``[lo, hi]``.

        Returns a description of every ``(t, mode, action)`` that fails;
        failures are also logged as warnings.
        """
        rng = np.random.default_rng(seed)
        z1 = rng.uniform(lo, hi, samples)
        z2 = rng.uniform(lo, hi, samples)
        mid = 0.5 * (z1 + z2)

        def _fails(f: ConvexFunction) -> bool:
            lhs = f.value(mid)
            rhs = 0.5 * (f.value(z1) + f.value(z2))
            slack = _CONVEXITY_TOL * np.maximum(1.0, np.abs(rhs))
            return bool(np.any(lhs > rhs + slack))

        failures: list[str] = []
        for t in range(self.horizon):
            for mode in self.modes:
                for action in self.actions:
                    if _fails(self.reward(t, mode, action)):
                        failures.append(f"reward(t={t}, mode={mode}, action={action})")
        for mode in self.modes:
            if _fails(self.scrap(mode)):
                failures.append(f"scrap(mode={mode})")
        for failure in failures:
            logger.warning("Convexity spot check failed for %s", failure)
        return failures


@dataclass(frozen=True, eq=False)
class ExpectedValue:
    """``z ↦ Σ_p' prob(p')·Σ_k ρ(k)·v(p', scale_k·z + shift_k)``.

    The modified transition operator applied to one (mode, action) pair; a
    :class:`~convex_bounds.pwl.ConvexFunction`.
    """

    components: tuple[tuple[float, ConvexFunction], ...]
    weights: Array
    scale: Array
    shift: Array

    def _evaluate(self, z: ArrayLike, *, left: bool, with_slope: bool) -> tuple[Array, Array]:
        zz = np.asarray(z, dtype=np.float64)
        flat = zz.ravel()
        values = np.zeros(flat.size)
        slopes = np.zeros(flat.size)
        for block in _row_blocks(flat.size, self.weights.size):
            states = flat[block, None] * self.scale[None, :] + self.shift[None, :]
            for prob, f in self.components:
                if with_slope:
                    v, s = f.value_and_slope(states, left=left)
                    slopes[block] += prob * ((s * self.scale[None, :]) @ self.weights)
                else:
                    v = f.value(states)
                values[block] += prob * (v @ self.weights)
        _require_finite(values, "modified kernel", flat)
        return values.reshape(zz.shape), slopes.reshape(zz.shape)

    def value(self, z: ArrayLike) -> Array:
        return self._evaluate(z, left=False, with_slope=False)[0]

    def value_and_slope(self, z: ArrayLike, *, left: bool = False) -> tuple[Array, Array]:
        return self._evaluate(z, left=left, with_slope=True)

    def left_ray(self) -> tuple[float, float]:
        mean_scale = float(self.weights @ self.scale)
        mean_shift = float(self.weights @ self.shift)
        slope = 0.0
        intercept = 0.0
        for prob, f in self.components:
            a, b = f.left_ray()
            slope += prob * a * mean_scale
            intercept += prob * (a * mean_shift + b)
        return slope, intercept


def _is_zero(f: object) -> bool:
    return bool(getattr(f, "is_zero", False))


def resolve_sampling(samplings: SamplingSource, t: int, action: str) -> DisturbanceSampling:
    """Pick the sampling for the transition from *t* to ``t + 1`` under *action*."""
    if isinstance(samplings, DisturbanceSampling):
        return samplings
    if callable(samplings):
        return samplings(t, action)
    return samplings[t]


def _grids_per_step(grid: GridSource, horizon: int) -> list[Grid]:
    if isinstance(grid, Grid):
        return [grid] * (horizon + 1)
    grids = list(grid)
    if len(grids) != horizon + 1:
        raise InvalidParameterError(
            "grid", len(grids), f"expected one grid or {horizon + 1} per-step grids"
        )
    return grids


def kernel_function(
    v_next: Mapping[str, ConvexFunction],
    model: MdpModel,
    sampling: DisturbanceSampling,
    t: int,
    action: str,
    mode: str,
) -> ExpectedValue:
    """Build the modified transition operator for one (mode, action) pair.

    Next modes that are unreachable or carry the zero function are skipped.

    Raises:
        InvalidParameterError: The state transition is not increasing in z.
    """
    scale, shift = model.state_transition.coefficients(t, sampling.points)
    if np.any(scale <= 0):
        raise InvalidParameterError("state_transition", scale, "scale must be > 0")
    row = model.transition_row(t, action, mode)
    components = tuple(
        (float(prob), v_next[nxt])
        for prob, nxt in zip(row, model.modes, strict=True)
        if prob > 0 and not _is_zero(v_next[nxt])
    )
    return ExpectedValue(components, sampling.weights, scale, shift)


def modified_kernel(
    v_next: Mapping[str, ConvexFunction],
    model: MdpModel,
    sampling: DisturbanceSampling,
    t: int,
    action: str,
    grid: Grid,
) -> dict[str, list[tuple[float, float]]]:
    """Evaluate the modified transition operator at every grid point per mode.

    Returns:
        ``{mode: [(z, K v(mode, z)), ...]}`` in grid order.

    Raises:
        NonFiniteValueError: A sampled state leaves the representable domain.
    """
    out: dict[str, list[tuple[float, float]]] = {}
    for mode in model.modes:
        kernel = kernel_function(v_next, model, sampling, t, action, mode)
        values = kernel.value(grid.points)
        out[mode] = [
            (float(z), float(v)) for z, v in zip(grid.points, values, strict=True)
        ]
    return out


def _projector(scheme: Scheme) -> Callable[[ConvexFunction, Grid], Representation]:
    return tangent_project if scheme is Scheme.TANGENT else interp_project


def _zero(scheme: Scheme, grid: Grid) -> Representation:
    return MaxAffine.zero() if scheme is Scheme.TANGENT else InterpConvex.zero(grid)


def _action_value(
    v_next: Mapping[str, Representation],
    model: MdpModel,
    samplings: SamplingSource,
    grid: Grid,
    scheme: Scheme,
    t: int,
    mode: str,
    action: str,
    single_projection: bool,
) -> Representation:
    project = _projector(scheme)
    reward = model.reward(t, mode, action)
    kernel = kernel_function(
        v_next, model, resolve_sampling(samplings, t, action), t, action, mode
    )
    if single_projection:
        return project(FunctionSum((reward, kernel)), grid)
    return add(project(reward, grid), project(kernel, grid))


def bellman_step(
    v_next: Mapping[str, Representation],
    model: MdpModel,
    samplings: SamplingSource,
    grid: Grid,
    scheme: Scheme | str,
    t: int,
    *,
    single_projection: bool = False,
    max_workers: int | None = None,
) -> dict[str, Representation]:
    """Apply the modified Bellman operator at step *t*.

    For every non-zero mode and every action the reward and the modified
    kernel are projected separately (or their sum once, with
    *single_projection*), added, and the action-wise pointwise maximum is
    taken in action order.  The (mode, action) pairs run through
    :func:`~convex_bounds.parallel.run_all`.

    Raises:
        SchemeMismatchError: *v_next* holds a representation of the other scheme.
        NonFiniteValueError: A kernel evaluation is not finite.
    """
    scheme = Scheme(scheme)
    expected = _REPRESENTATION[scheme]
    for mode in model.modes:
        found = v_next[mode]
        if not isinstance(found, expected):
            raise SchemeMismatchError(scheme, type(found).__name__)

    live = [mode for mode in model.modes if mode not in model.zero_modes]
    pairs = [(mode, action) for mode in live for action in model.actions]
    values = run_all(
        [
            (
                _action_value,
                v_next,
                model,
                samplings,
                grid,
                scheme,
                t,
                mode,
                action,
                single_projection,
            )
            for mode, action in pairs
        ],
        max_workers=max_workers,
    )
    by_pair = dict(zip(pairs, values, strict=True))

    result: dict[str, Representation] = {}
    for mode in model.modes:
        if mode in model.zero_modes:
            result[mode] = _zero(scheme, grid)
        else:
            result[mode] = pointwise_max([by_pair[mode, a] for a in model.actions])
    return result


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Bounding value functions produced by :func:`backward_induction`.

    Attributes:
        entries: ``entries[t][mode]`` for ``t = 0..T-1``.
        terminal: Projected scrap that seeded the recursion.
        scrap: Exact scrap functions, the value at ``t = T``.
        scheme: Projection scheme of the run.
        bound_kind: ``lower`` for the tangent scheme, ``upper`` for interp.
        grids: Grid of every step ``0..T``.
        metadata: Run description (grid, sampling, n, m, timings, diagnostics).
    """

    entries: tuple[Mapping[str, Representation], ...]
    terminal: Mapping[str, Representation]
    scrap: Mapping[str, ConvexFunction]
    scheme: Scheme
    bound_kind: BoundKind
    grids: tuple[Grid, ...]
    metadata: Mapping[str, Any]

    @property
    def horizon(self) -> int:
        return len(self.entries)

    def function(self, t: int, mode: str) -> Representation:
        """Representation at step *t*; the projected scrap at ``t = T``."""
        if t == self.horizon:
            return self.terminal[mode]
        return self.entries[t][mode]

    def value(self, t: int, mode: str, z: ArrayLike) -> float | Array:
        if t == self.horizon:
            return evaluate(self.scrap[mode], z)
        return evaluate(self.entries[t][mode], z)

    def next_functions(self, t: int) -> Mapping[str, Representation]:
        return self.terminal if t + 1 == self.horizon else self.entries[t + 1]

    def to_rows(self) -> list[tuple[int, str, float, float]]:
        """``(t, mode, z, value)`` at every grid point of every step."""
        rows: list[tuple[int, str, float, float]] = []
        for t in range(self.horizon + 1):
            pts = self.grids[t].points
            for mode in self.scrap:
                values = np.asarray(self.value(t, mode, pts))
                rows.extend(
                    (t, mode, float(z), float(v)) for z, v in zip(pts, values, strict=True)
                )
        return rows


def _sampling_ident(samplings: SamplingSource, actions: Sequence[str]) -> tuple[str, int]:
    first = resolve_sampling(samplings, 0, actions[0])
    if isinstance(samplings, DisturbanceSampling):
        return first.ident, first.n
    if callable(samplings):
        return f"per-action:{first.ident}", first.n
    return f"per-step[{len(samplings)}]:{first.ident}", first.n


def backward_induction(
    model: MdpModel,
    grid: GridSource,
    samplings: SamplingSource,
    scheme: Scheme | str,
    *,
    single_projection: bool = False,
    max_workers: int | None = None,
) -> ValueTable:
    """Run the modified Bellman recursion from the projected scrap down to t = 0.

    Args:
        model: The decision problem.
        grid: One grid for every step, or ``T + 1`` per-step grids.
        samplings: One sampling for every step, one per transition
            ``t -> t+1``, or a callable ``(t, action) -> sampling``.
        scheme: ``"tangent"`` (lower bound) or ``"interp"`` (upper bound).
        single_projection: Project ``r + K v`` once instead of separately.
        max_workers: Thread cap for the per-step (mode, action) fan-out.

    Returns:
        The complete :class:`ValueTable`.  ``metadata["convexity_warnings"]``
        lists rewards that fail the spot check on the grid range and
        interpolated value functions that lost convexity.

    Raises:
        InductionStepError: A step failed; ``step`` holds its index and the
            original error is chained.
    """
    scheme = Scheme(scheme)
    grids = _grids_per_step(grid, model.horizon)
    project = _projector(scheme)
    wall_start = time.perf_counter()
    cpu_start = time.process_time()

    scrap = {mode: model.scrap(mode) for mode in model.modes}
    terminal: dict[str, Representation] = {
        mode: _zero(scheme, grids[-1]) if mode in model.zero_modes else project(scrap[mode], grids[-1])
        for mode in model.modes
    }

    warnings = model.check_convexity(
        min(g.lo for g in grids), max(g.hi for g in grids)
    )
    entries: list[Mapping[str, Representation]] = [terminal] * model.horizon
    current: Mapping[str, Representation] = terminal
    for t in range(model.horizon - 1, -1, -1):
        try:
            current = bellman_step(
                current,
                model,
                samplings,
                grids[t],
                scheme,
                t,
                single_projection=single_projection,
                max_workers=max_workers,
            )
        except ConvexBoundsError as exc:
            raise InductionStepError(t, scheme, exc) from exc
        entries[t] = current
        for mode, f in current.items():
            if isinstance(f, InterpConvex):
                drop = f.convexity_violation()
                if drop > _CONVEXITY_TOL:
                    note = f"t={t} mode={mode} slope drop {drop:.3e}"
                    logger.warning("Interpolated value function is not convex: %s", note)
                    warnings.append(note)
        logger.debug("Bellman step t=%d (%s) done", t, scheme)

    wall = time.perf_counter() - wall_start
    cpu = time.process_time() - cpu_start
    sampling_id, n = _sampling_ident(samplings, model.actions)
    metadata = {
        "scheme": str(scheme),
        "bound_kind": str(SCHEME_BOUND[scheme]),
        "grid": grids[0].ident,
        "m": grids[0].m,
        "sampling": sampling_id,
        "n": n,
        "horizon": model.horizon,
        "single_projection": single_projection,
        "wall_seconds": wall,
        "cpu_seconds": cpu,
        "convexity_warnings": warnings,
    }
    logger.info(
        "Backward induction (%s, m=%d, n=%d) finished in %.3fs wall / %.3fs cpu",
        scheme,
        grids[0].m,
        n,
        wall,
        cpu,
    )
    return ValueTable(
        entries=tuple(entries),
        terminal=terminal,
        scrap=scrap,
        scheme=scheme,
        bound_kind=SCHEME_BOUND[scheme],
        grids=tuple(grids),
        metadata=metadata,
    )


@dataclass(frozen=True)
class PolicyInterval:
    """Action chosen on ``[lo, hi]``."""

    lo: float
    hi: float
    action: str


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Greedy decision rule per ``(t, mode)`` as intervals over the grid range."""

    rules: Mapping[tuple[int, str], tuple[PolicyInterval, ...]]
    horizon: int
    actions: tuple[str, ...]

    def intervals(self, t: int, mode: str) -> tuple[PolicyInterval, ...]:
        return self.rules[t, mode]

    def action_at(self, t: int, mode: str, z: float) -> str:
        rule = self.rules[t, mode]
        for interval in rule:
            if z <= interval.hi:
                return interval.action
        return rule[-1].action

    def boundary(self, mode: str, action: str) -> Array:
        """Largest z per ``t = 0..T`` at which *action* is chosen; NaN if never."""
        out = np.full(self.horizon + 1, np.nan)
        for t in range(self.horizon + 1):
            his = [iv.hi for iv in self.rules[t, mode] if iv.action == action]
            if his:
                out[t] = max(his)
        return out

    def to_rows(self, mode: str, action: str) -> list[tuple[int, float]]:
        """``(t, boundary z)`` rows."""
        return [(t, float(z)) for t, z in enumerate(self.boundary(mode, action))]


def _switch_point(
    first: Callable[[float], float],
    second: Callable[[float], float],
    lo: float,
    hi: float,
    first_wins_ties: bool,
) -> float:
    """Bisect the point in ``[lo, hi]`` where *second* overtakes *first*."""
    for _ in range(200):
        if hi - lo <= 1e-13 * max(1.0, abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        diff = first(mid) - second(mid)
        if diff > 0 or (first_wins_ties and diff == 0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _rule_from_values(
    grid: Grid,
    q: list[Callable[[ArrayLike], Array]],
    actions: Sequence[str],
) -> tuple[PolicyInterval, ...]:
    pts = grid.points
    table = np.stack([np.asarray(f(pts), dtype=np.float64) for f in q])
    best = np.argmax(table, axis=0)  # first action wins ties

    intervals: list[PolicyInterval] = []
    lo = float(pts[0])
    for i in range(pts.size - 1):
        cur, nxt = int(best[i]), int(best[i + 1])
        if cur == nxt:
            continue
        z = _switch_point(
            lambda x, a=cur: float(q[a](x)),
            lambda x, b=nxt: float(q[b](x)),
            float(pts[i]),
            float(pts[i + 1]),
            first_wins_ties=cur < nxt,
        )
        intervals.append(PolicyInterval(lo, z, actions[cur]))
        lo = z
    intervals.append(PolicyInterval(lo, float(pts[-1]), actions[int(best[-1])]))
    return tuple(intervals)


def extract_policy(
    vt: ValueTable,
    model: MdpModel,
    samplings: SamplingSource,
    grid: GridSource | None = None,
) -> PolicyTable:
    """Greedy policy ``argmax_a r_t(p, z, a) + K^a v_{t+1}(p, z)`` over each grid.

    Ties go to the earlier action.  Switch points between grid points are
    located by bisection of the action-value difference.  The ``t = T`` row
    credits the scrap to ``model.terminal_action`` and zero to the others.
    """
    grids = vt.grids if grid is None else tuple(_grids_per_step(grid, model.horizon))
    rules: dict[tuple[int, str], tuple[PolicyInterval, ...]] = {}

    for t in range(model.horizon):
        v_next = vt.next_functions(t)
        for mode in model.modes:
            q: list[Callable[[ArrayLike], Array]] = []
            for action in model.actions:
                reward = model.reward(t, mode, action)
                kernel = kernel_function(
                    v_next, model, resolve_sampling(samplings, t, action), t, action, mode
                )
                q.append(lambda z, r=reward, k=kernel: r.value(z) + k.value(z))
            rules[t, mode] = _rule_from_values(grids[t], q, model.actions)

    terminal_action = model.terminal_action or model.actions[0]
    for mode in model.modes:
        scrap = vt.scrap[mode]
        q = [
            (lambda z, f=scrap: f.value(z))
            if action == terminal_action
            else (lambda z: np.zeros_like(np.asarray(z, dtype=np.float64)))
            for action in model.actions
        ]
        rules[model.horizon, mode] = _rule_from_values(grids[-1], q, model.actions)

    return PolicyTable(rules=rules, horizon=model.horizon, actions=tuple(model.actions))
