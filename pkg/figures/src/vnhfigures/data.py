"""Loading and schema validation for simulation trajectory CSV files.

The expected header is t, q0..q{n-1}, v0..v{n-1}, u0..u{m-1},
phi0..phi{m-1}, energy, kinetic, condA.  Dimensions n and m are inferred
from the header itself; every departure from the contract is reported
with the offending column or line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from os.path import dirname, exists, join

import numpy as np


class SchemaError(Exception):
    """The CSV file does not match the trajectory column contract."""


@dataclass(frozen=True)
class TrajectoryTable:
    """Parsed trajectory data with dimensions taken from the header."""

    columns: tuple[str, ...]
    times: np.ndarray
    positions: np.ndarray  # (rows, n)
    velocities: np.ndarray  # (rows, n)
    controls: np.ndarray  # (rows, m)
    constraint_values: np.ndarray  # (rows, m)
    energy: np.ndarray
    kinetic: np.ndarray
    condition: np.ndarray

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    @property
    def constraint_count(self) -> int:
        return self.controls.shape[1]

    def __len__(self) -> int:
        return len(self.times)


def _indexed_run(columns: list[str], start: int, prefix: str) -> int:
    """Number of consecutive columns named prefix0, prefix1, ... from start."""
    count = 0
    while start + count < len(columns) and columns[start + count] == f"{prefix}{count}":
        count += 1
    return count


def _column(columns: list[str], pos: int) -> str:
    return columns[pos] if pos < len(columns) else ""


def parse_header(line: str) -> tuple[tuple[str, ...], int, int]:
    """Validate the header row and return (columns, n, m)."""
    columns = line.split(",")
    if columns[0] != "t":
        raise SchemaError(f"column 1: expected 't', got {columns[0]!r}")
    n = _indexed_run(columns, 1, "q")
    if n == 0:
        raise SchemaError(f"column 2: expected 'q0', got {_column(columns, 1)!r}")
    run = _indexed_run(columns, 1 + n, "v")
    if run != n:
        pos = 1 + n + run
        raise SchemaError(
            f"column {pos + 1}: expected 'v{run}' to match the {n}-column q block, "
            f"got {_column(columns, pos)!r}"
        )
    m = _indexed_run(columns, 1 + 2 * n, "u")
    if m == 0:
        pos = 1 + 2 * n
        raise SchemaError(f"column {pos + 1}: expected 'u0', got {_column(columns, pos)!r}")
    run = _indexed_run(columns, 1 + 2 * n + m, "phi")
    if run != m:
        pos = 1 + 2 * n + m + run
        raise SchemaError(
            f"column {pos + 1}: expected 'phi{run}' to match the {m}-column u block, "
            f"got {_column(columns, pos)!r}"
        )
    tail_start = 1 + 2 * n + 2 * m
    for offset, name in enumerate(("energy", "kinetic", "condA")):
        if _column(columns, tail_start + offset) != name:
            raise SchemaError(
                f"column {tail_start + offset + 1}: expected {name!r}, "
                f"got {_column(columns, tail_start + offset)!r}"
            )
    if len(columns) > tail_start + 3:
        raise SchemaError(
            f"column {tail_start + 4}: unexpected trailing column "
            f"{columns[tail_start + 3]!r}"
        )
    return tuple(columns), n, m


def load_table(path: str) -> TrajectoryTable:
    """Read and validate a trajectory CSV file."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError("empty file, expected a header row")
    columns, n, m = parse_header(lines[0])
    if len(lines) == 1:
        raise SchemaError("no data rows after the header")
    width = len(columns)
    data = np.empty((len(lines) - 1, width))
    for k, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != width:
            raise SchemaError(f"line {k + 2}: expected {width} columns, got {len(parts)}")
        try:
            data[k] = [float(x) for x in parts]
        except ValueError:
            for j, part in enumerate(parts):
                try:
                    float(part)
                except ValueError:
                    raise SchemaError(
                        f"line {k + 2}, column {j + 1} ({columns[j]}): {part!r} is not a number"
                    ) from None
    return TrajectoryTable(
        columns=columns,
        times=data[:, 0].copy(),
        positions=data[:, 1 : 1 + n].copy(),
        velocities=data[:, 1 + n : 1 + 2 * n].copy(),
        controls=data[:, 1 + 2 * n : 1 + 2 * n + m].copy(),
        constraint_values=data[:, 1 + 2 * n + m : 1 + 2 * n + 2 * m].copy(),
        energy=data[:, -3].copy(),
        kinetic=data[:, -2].copy(),
        condition=data[:, -1].copy(),
    )


def scenario_name(csv_path: str) -> str | None:
    """Scenario name from a summary.json next to the CSV, when present."""
    path = join(dirname(csv_path) or ".", "summary.json")
    if not exists(path):
        return None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return None
    name = loaded.get("name") if isinstance(loaded, dict) else None
    return name if isinstance(name, str) else None
