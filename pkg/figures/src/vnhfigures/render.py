"""Figure rendering for trajectory CSV files.

Styling defaults, chosen for legibility: 7x4.5 inch figures at 130 dpi,
a light grid, one line per plotted column, tight layout.  Output is
deterministic for a fixed input: figure geometry is pinned and the PNG
metadata carries no timestamps.
"""

from __future__ import annotations

import argparse
import sys
from os import makedirs
from os.path import join

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import SchemaError, TrajectoryTable, load_table, scenario_name

FIGURE_NAMES = ("trajectories", "energy", "constraint", "control")
_SAVE_OPTIONS = {"dpi": 130, "metadata": {"Software": "vnhfigures"}}


def _new_axes(title: str, name: str | None):
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.set_title(f"{name}: {title}" if name else title)
    ax.grid(True, alpha=0.3)
    return fig, ax


def trajectories_figure(table: TrajectoryTable, name: str | None = None):
    """Planar paths per particle for two-particle layouts, else time series."""
    fig, ax = _new_axes("trajectories", name)
    n = table.dimension
    if n == 4:
        ax.plot(table.positions[:, 0], table.positions[:, 1], label="particle 1 (q0, q1)")
        ax.plot(table.positions[:, 2], table.positions[:, 3], label="particle 2 (q2, q3)")
        ax.set_xlabel("q0, q2")
        ax.set_ylabel("q1, q3")
    else:
        for i in range(n):
            ax.plot(table.times, table.positions[:, i], label=f"q{i}")
        ax.set_xlabel("t")
        ax.set_ylabel("position")
    ax.legend()
    return fig


def energy_figure(table: TrajectoryTable, name: str | None = None):
    fig, ax = _new_axes("energy", name)
    ax.plot(table.times, table.energy, label="energy")
    ax.plot(table.times, table.kinetic, label="kinetic", linestyle="--")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend()
    return fig


def constraint_figure(table: TrajectoryTable, name: str | None = None):
    """Constraint values over time, y-range pinned near zero.

    The limits scale with the largest observed violation so that
    roundoff-level drift is never flattened against the trajectory scale.
    """
    fig, ax = _new_axes("constraint", name)
    for a in range(table.constraint_count):
        ax.plot(table.times, table.constraint_values[:, a], label=f"phi{a}")
    span = 1.25 * float(np.max(np.abs(table.constraint_values)))
    if span == 0.0:
        span = 1e-16
    ax.set_ylim(-span, span)
    ax.set_xlabel("t")
    ax.set_ylabel("phi0" if table.constraint_count == 1 else "constraint values")
    ax.legend()
    return fig


def control_figure(table: TrajectoryTable, name: str | None = None):
    fig, ax = _new_axes("control", name)
    for a in range(table.constraint_count):
        ax.plot(table.times, table.controls[:, a], label=f"u{a}")
    ax.set_xlabel("t")
    ax.set_ylabel("u0" if table.constraint_count == 1 else "control values")
    ax.legend()
    return fig


_BUILDERS = {
    "trajectories": trajectories_figure,
    "energy": energy_figure,
    "constraint": constraint_figure,
    "control": control_figure,
}


def render(csv_path: str, out_dir: str, which=FIGURE_NAMES) -> list[str]:
    """Render the requested figures; returns the written file paths."""
    unknown = [w for w in which if w not in _BUILDERS]
    if unknown:
        raise ValueError(
            f"unknown figure name {unknown[0]!r}, expected a subset of {', '.join(FIGURE_NAMES)}"
        )
    table = load_table(csv_path)
    name = scenario_name(csv_path)
    makedirs(out_dir, exist_ok=True)
    written = []
    for key in FIGURE_NAMES:
        if key not in which:
            continue
        fig = _BUILDERS[key](table, name)
        path = join(out_dir, f"{key}.png")
        fig.savefig(path, **_SAVE_OPTIONS)
        plt.close(fig)
        written.append(path)
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vnhfigures",
        description="Render figures from simulation trajectory CSV files.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    sub = subs.add_parser("render", help="render figures from one trajectory CSV")
    sub.add_argument("--input", required=True, help="trajectory CSV path")
    sub.add_argument("--out", required=True, help="output directory for PNG files")
    sub.add_argument("--which", default=",".join(FIGURE_NAMES),
                     help="comma-separated subset of " + ", ".join(FIGURE_NAMES))
    args = parser.parse_args(argv)

    which = tuple(w.strip() for w in args.which.split(",") if w.strip())
    try:
        written = render(args.input, args.out, which)
    except (SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
