"""Run configuration read from a TOML file.

Example file::

    [put]
    strike = 40.0
    rate = 0.06
    vol = 0.2
    expiry = 1.0
    exercise_dates = 51
    spots = [32, 34, 36, 38, 40, 42, 44, 46]

    [grid]
    lo = 30.0
    hi = 60.0
    m = 301

    [sampling]
    n = 1000
    mass = 0.999999999

Sections ``sweep``, ``output`` and ``engine`` are optional.  Unknown keys and
sections are rejected, as are missing required keys.
"""

from __future__ import annotations

import tomllib
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any

from convex_bounds.bermudan import DEFAULT_MASS, TABLE_SPOTS, PutSpec
from convex_bounds.exceptions import ConfigError, InvalidParameterError
from convex_bounds.pwl import Grid
from convex_bounds.sampling import SamplingKind

_MISSING = object()


class Experiment(StrEnum):
    TABLE = "table"
    SWEEP_N = "sweep-n"
    SWEEP_M = "sweep-m"
    BOUNDARY = "boundary"
    DUMP = "dump"


@dataclass(frozen=True)
class SamplingConfig:
    """Disturbance sampling settings.

    ``kind`` selects the scheme of the ``boundary`` and ``dump`` experiments:
    local averages drive the lower (tangent) induction, extreme points the
    upper (interpolation) one and Monte Carlo a tangent estimate.  The
    ``table`` experiment always runs both bounds.
    """

    n: int
    kind: SamplingKind = SamplingKind.LOCAL_AVERAGE
    seed: int = 0
    mass: float = DEFAULT_MASS


@dataclass(frozen=True)
class SweepConfig:
    values: tuple[int, ...]
    bound: str = "lower"
    nested: bool = True
    spot: float = 36.0


@dataclass(frozen=True)
class RunConfig:
    experiment: Experiment
    put: PutSpec
    grid: Grid
    sampling: SamplingConfig
    sweep: SweepConfig | None = None
    output_dir: Path = Path("out")
    threads: int | None = None
    single_projection: bool = False
    source: str | None = None
    raw: Mapping[str, Any] = field(default_factory=dict)


class _Section:
    """Typed reader over one TOML table that tracks consumed keys."""

    def __init__(self, name: str, data: Any, source: str | None) -> None:
        if not isinstance(data, dict):
            raise ConfigError(name, "must be a table", source)
        self._name = name
        self._data = data
        self._source = source
        self._seen: set[str] = set()

    def _key(self, key: str) -> str:
        return f"{self._name}.{key}"

    def get(self, key: str, kind: type, default: Any = _MISSING) -> Any:
        self._seen.add(key)
        if key not in self._data:
            if default is _MISSING:
                raise ConfigError(self._key(key), "missing required key", self._source)
            return default
        value = self._data[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, bool) and kind is not bool:
            raise ConfigError(self._key(key), f"expected {kind.__name__}", self._source)
        if not isinstance(value, kind):
            raise ConfigError(
                self._key(key),
                f"expected {kind.__name__}, got {type(value).__name__}",
                self._source,
            )
        return value

    def get_list(self, key: str, kind: type, default: Any = _MISSING) -> Any:
        raw = self.get(key, list, default)
        if raw is default:
            return default
        out = []
        for item in raw:
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ConfigError(self._key(key), "entries must be numbers", self._source)
            if kind is int and not isinstance(item, int):
                raise ConfigError(self._key(key), "entries must be integers", self._source)
            out.append(kind(item))
        return tuple(out)

    def finish(self) -> None:
        unknown = sorted(set(self._data) - self._seen)
        if unknown:
            raise ConfigError(self._key(unknown[0]), "unknown key", self._source)


def parse_config(
    data: Mapping[str, Any],
    experiment: Experiment | str,
    *,
    source: str | None = None,
) -> RunConfig:
    """Validate a parsed TOML document into a :class:`RunConfig`.

    Raises:
        ConfigError: A key is unknown, missing, mistyped or out of range.
    """
    experiment = Experiment(experiment)
    known = {"experiment", "put", "grid", "sampling", "sweep", "output", "engine"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(unknown[0], "unknown section", source)
    if "experiment" in data:
        named = data["experiment"]
        if named not in {e.value for e in Experiment}:
            raise ConfigError("experiment", f"unknown experiment {named!r}", source)
        if named != experiment:
            raise ConfigError(
                "experiment", f"file is for {named!r}, not {experiment.value!r}", source
            )

    put = _Section("put", data.get("put", {}), source)
    strike = put.get("strike", float)
    rate = put.get("rate", float)
    vol = put.get("vol", float)
    expiry = put.get("expiry", float)
    dates = put.get("exercise_dates", int)
    spots = put.get_list("spots", float, TABLE_SPOTS)
    put.finish()
    try:
        spec = PutSpec(strike, rate, vol, expiry, dates, spots)
    except InvalidParameterError as exc:
        raise ConfigError(f"put.{exc.name}", exc.reason, source) from exc

    grid_section = _Section("grid", data.get("grid", {}), source)
    lo = grid_section.get("lo", float)
    hi = grid_section.get("hi", float)
    m = grid_section.get("m", int)
    grid_section.finish()
    try:
        grid = Grid.uniform(lo, hi, m)
    except InvalidParameterError as exc:
        key = f"grid.{exc.name}" if exc.name in ("lo", "hi", "m") else "grid.hi"
        raise ConfigError(key, exc.reason, source) from exc

    sampling_section = _Section("sampling", data.get("sampling", {}), source)
    n = sampling_section.get("n", int)
    kind_name = sampling_section.get("kind", str, SamplingKind.LOCAL_AVERAGE.value)
    seed = sampling_section.get("seed", int, 0)
    mass = sampling_section.get("mass", float, DEFAULT_MASS)
    sampling_section.finish()
    try:
        kind = SamplingKind(kind_name)
    except ValueError as exc:
        raise ConfigError("sampling.kind", f"unknown sampling kind {kind_name!r}", source) from exc
    if n < 1:
        raise ConfigError("sampling.n", "must be >= 1", source)
    if not 0.0 < mass < 1.0:
        raise ConfigError("sampling.mass", "must lie strictly between 0 and 1", source)
    if kind is SamplingKind.MONTE_CARLO and n % 2:
        raise ConfigError("sampling.n", "Monte Carlo sampling needs an even count", source)
    sampling = SamplingConfig(n=n, kind=kind, seed=seed, mass=mass)

    sweep: SweepConfig | None = None
    if "sweep" in data or experiment in (Experiment.SWEEP_N, Experiment.SWEEP_M):
        sweep_section = _Section("sweep", data.get("sweep", {}), source)
        sweep = SweepConfig(
            values=sweep_section.get_list("values", int),
            bound=sweep_section.get("bound", str, "lower"),
            nested=sweep_section.get("nested", bool, True),
            spot=sweep_section.get("spot", float, 36.0),
        )
        sweep_section.finish()
        if sweep.bound not in ("lower", "upper"):
            raise ConfigError("sweep.bound", "must be 'lower' or 'upper'", source)
        if not sweep.values:
            raise ConfigError("sweep.values", "needs at least one value", source)
        least = 2 if experiment is Experiment.SWEEP_M else 1
        if min(sweep.values) < least:
            raise ConfigError("sweep.values", f"every value must be >= {least}", source)

    output = _Section("output", data.get("output", {}), source)
    directory = Path(output.get("directory", str, "out"))
    output.finish()

    engine = _Section("engine", data.get("engine", {}), source)
    threads = engine.get("threads", int, None)
    single_projection = engine.get("single_projection", bool, False)
    engine.finish()
    if threads is not None and threads < 1:
        raise ConfigError("engine.threads", "must be >= 1", source)

    return RunConfig(
        experiment=experiment,
        put=spec,
        grid=grid,
        sampling=sampling,
        sweep=sweep,
        output_dir=directory,
        threads=threads,
        single_projection=single_projection,
        source=source,
        raw=dict(data),
    )


def load_config(path: str | Path, experiment: Experiment | str) -> RunConfig:
    """Read and validate the TOML file at *path*.

    Raises:
        ConfigError: The file is not valid TOML or fails validation.
        OSError: The file cannot be read.
    """
    source = str(path)
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(None, f"not valid TOML ({exc})", source) from exc
    return parse_config(data, experiment, source=source)
