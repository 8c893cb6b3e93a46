"""Command-line front-end: ``price <experiment> --config run.toml``.

Exit status is 0 on success, 2 for configuration errors, 3 for numerical
failures and 4 for I/O failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path
from typing import Any

from convex_bounds import export
from convex_bounds.bermudan import (
    EXERCISE,
    UNEXERCISED,
    bracket_rows,
    build_put_mdp,
    convergence_sweep,
    solve_bounds,
)
from convex_bounds.config import Experiment, RunConfig, load_config
from convex_bounds.exceptions import ComputationError, ConfigError, ConvexBoundsError
from convex_bounds.mdp_core import (
    SamplingSource,
    Scheme,
    ValueTable,
    backward_induction,
    extract_policy,
)
from convex_bounds.sampling import (
    DisturbanceSampling,
    SamplingKind,
    extreme_point_sampling,
    local_average_sampling,
    monte_carlo_schedule,
    truncate,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPUTATION = 3
EXIT_IO = 4


def _config_echo(config: RunConfig) -> dict[str, Any]:
    return {
        "experiment": str(config.experiment),
        "source": config.source,
        "file": dict(config.raw),
        "threads": config.threads,
        "output_dir": str(config.output_dir),
        "seed": config.sampling.seed,
    }


def _single_run(
    config: RunConfig,
) -> tuple[ValueTable, SamplingSource, DisturbanceSampling]:
    """Run the one induction selected by ``sampling.kind``."""
    model = build_put_mdp(config.put)
    lognormal = config.put.lognormal()
    s = config.sampling
    samplings: SamplingSource
    if s.kind is SamplingKind.LOCAL_AVERAGE:
        first = local_average_sampling(lognormal, s.n)
        samplings, scheme = first, Scheme.TANGENT
    elif s.kind is SamplingKind.EXTREME_POINT:
        first = extreme_point_sampling(lognormal, truncate(lognormal, s.mass), s.n)
        samplings, scheme = first, Scheme.INTERP
    else:
        schedule = monte_carlo_schedule(lognormal, s.n, s.seed, config.put.horizon)
        first, samplings, scheme = schedule[0], schedule, Scheme.TANGENT
    table = backward_induction(
        model,
        config.grid,
        samplings,
        scheme,
        single_projection=config.single_projection,
        max_workers=config.threads,
    )
    return table, samplings, first


def _run_table(config: RunConfig) -> list[Path]:
    lower, upper = solve_bounds(
        config.put,
        config.grid,
        config.sampling.n,
        config.sampling.mass,
        single_projection=config.single_projection,
        max_workers=config.threads,
    )
    rows = bracket_rows(config.put.spots, lower, upper)
    for row in rows:
        logger.info(
            "Z0=%g lower=%.5f upper=%.5f gap=%.5f", row.spot, row.lower, row.upper, row.gap
        )
    out = config.output_dir
    return [
        export.write_bracket(out / "bracket.csv", rows),
        export.write_metadata(
            out / "metadata.json",
            config=_config_echo(config),
            runs={"lower": lower.metadata, "upper": upper.metadata},
        ),
    ]


def _run_sweep(config: RunConfig, axis: str) -> list[Path]:
    sweep = config.sweep
    assert sweep is not None
    points = convergence_sweep(
        config.put,
        axis,
        sweep.values,
        sweep.bound,
        spot=sweep.spot,
        n=config.sampling.n,
        m=config.grid.m,
        lo=config.grid.lo,
        hi=config.grid.hi,
        mass=config.sampling.mass,
        nested=sweep.nested,
        max_workers=config.threads,
    )
    out = config.output_dir
    return [
        export.write_sweep(out / f"sweep_{axis}.csv", axis, sweep.bound, points),
        export.write_metadata(
            out / "metadata.json",
            config=_config_echo(config),
            runs={},
            extra={"sweep": {"axis": axis, "bound": sweep.bound, "values": list(sweep.values)}},
        ),
    ]


def _run_boundary(config: RunConfig) -> list[Path]:
    table, samplings, _ = _single_run(config)
    policy = extract_policy(table, build_put_mdp(config.put), samplings)
    out = config.output_dir
    return [
        export.write_boundary(out / "boundary.csv", policy, UNEXERCISED, EXERCISE),
        export.write_metadata(
            out / "metadata.json",
            config=_config_echo(config),
            runs={str(table.bound_kind): table.metadata},
        ),
    ]


def _run_dump(config: RunConfig) -> list[Path]:
    table, _, first = _single_run(config)
    out = config.output_dir
    written = [
        export.write_value_table(out / "values.csv", table),
        export.write_sampling(out / "sampling.csv", first),
    ]
    for t in range(table.horizon + 1):
        written.append(
            export.write_function(
                out / "functions" / f"t{t:04d}_{UNEXERCISED}.csv",
                table.function(t, UNEXERCISED),
            )
        )
    written.append(
        export.write_metadata(
            out / "metadata.json",
            config=_config_echo(config),
            runs={str(table.bound_kind): table.metadata},
        )
    )
    return written


def run(config: RunConfig) -> list[Path]:
    """Dispatch the configured experiment and return the written artifacts."""
    logger.info("Running %s experiment", config.experiment)
    match config.experiment:
        case Experiment.TABLE:
            return _run_table(config)
        case Experiment.SWEEP_N:
            return _run_sweep(config, "n")
        case Experiment.SWEEP_M:
            return _run_sweep(config, "m")
        case Experiment.BOUNDARY:
            return _run_boundary(config)
        case Experiment.DUMP:
            return _run_dump(config)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="price",
        description="Lower and upper bounds for convex stochastic control problems.",
    )
    parser.add_argument(
        "experiment",
        choices=[e.value for e in Experiment],
        help="Experiment to run",
    )
    parser.add_argument("--config", required=True, type=Path, help="TOML run configuration")
    parser.add_argument("--threads", type=int, default=None, help="Cap on worker threads")
    parser.add_argument("--out", type=Path, default=None, help="Output directory")
    parser.add_argument(
        "--log-level",
        type=str,
        default="INFO",
        help="Set the logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)",
    )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    try:
        config = load_config(args.config, args.experiment)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads", "must be >= 1")
            config = replace(config, threads=args.threads)
        if args.out is not None:
            config = replace(config, output_dir=args.out)
        run(config)
    except ConfigError as exc:
        print(f"price: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ComputationError as exc:
        print(f"price: numerical failure: {exc}", file=sys.stderr)
        return EXIT_COMPUTATION
    except ConvexBoundsError as exc:
        print(f"price: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"price: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
