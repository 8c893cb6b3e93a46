"""CSV and JSON artifacts.

Every CSV starts with a header row, uses ``,`` separators, ``.`` decimals
and LF line endings; floats are written with ``repr`` so they round-trip.
"""

from __future__ import annotations

import csv
import json
import logging
import platform
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from convex_bounds.bermudan import BracketRow, SweepPoint
from convex_bounds.mdp_core import PolicyTable, ValueTable
from convex_bounds.pwl import InterpConvex, MaxAffine
from convex_bounds.sampling import DisturbanceSampling

logger = logging.getLogger(__name__)


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write *rows* under *header*; parent directories are created."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    logger.info("Wrote %s", path)
    return path


def write_bracket(path: Path, rows: Sequence[BracketRow]) -> Path:
    return write_csv(
        path,
        ("spot", "lower", "upper", "gap"),
        ((r.spot, r.lower, r.upper, r.gap) for r in rows),
    )


def write_sweep(path: Path, axis: str, bound: str, points: Sequence[SweepPoint]) -> Path:
    return write_csv(path, (axis, bound), ((p.value, p.estimate) for p in points))


def write_value_table(path: Path, table: ValueTable) -> Path:
    return write_csv(path, ("t", "mode", "z", "value"), table.to_rows())


def write_boundary(path: Path, policy: PolicyTable, mode: str, action: str) -> Path:
    return write_csv(path, ("t", "boundary_z"), policy.to_rows(mode, action))


def write_sampling(path: Path, sampling: DisturbanceSampling) -> Path:
    return write_csv(path, ("k", "point", "weight"), sampling.to_rows())


def write_function(path: Path, f: MaxAffine | InterpConvex) -> Path:
    """Dump one representation: pieces of a max-affine function, knots of an interpolant.

    The interpolant's left extension is written as a ``left`` row of
    ``(slope, intercept)`` before the knots.
    """
    if isinstance(f, MaxAffine):
        return write_csv(path, ("slope", "intercept"), f.to_rows())
    rows: list[tuple[Any, ...]] = [("left", f.left_slope, f.left_intercept)]
    rows.extend(("knot", z, v) for z, v in f.to_rows())
    return write_csv(path, ("row", "x", "y"), rows)


def write_metadata(
    path: Path,
    *,
    config: Mapping[str, Any],
    runs: Mapping[str, Mapping[str, Any]],
    extra: Mapping[str, Any] | None = None,
) -> Path:
    """Write the run description: config echo, per-induction metadata, versions."""
    # Lazy import to avoid a cycle through the package root
    from convex_bounds import __version__  # noqa: PLC0415

    document = {
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "config": config,
        "runs": runs,
        **(extra or {}),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    logger.info("Wrote %s", path)
    return path
