"""Artifact writers and readers: bounds CSV, run summary, plot grids."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .bounding import BoundsResult

BOUND_COLUMNS = ("cond_lower", "cond_upper", "uncond_lower", "uncond_upper")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_bounds_csv(path: str | Path, bounds: BoundsResult, species: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(species) + list(BOUND_COLUMNS))
        for k, s in enumerate(bounds.states):
            w.writerow([int(v) for v in s] + [fmt(getattr(bounds, col)[k]) for col in BOUND_COLUMNS])


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_bounds(summary_path: str | Path) -> tuple[BoundsResult, list[str]]:
    """Load a run's bounds from its ``summary.json`` and sibling bounds CSV."""
    summary_path = Path(summary_path)
    summary = json.loads(summary_path.read_text())
    csv_path = summary_path.parent / summary.get("bounds_csv", "bounds.csv")
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = len(header) - len(BOUND_COLUMNS)
    if header[n:] != list(BOUND_COLUMNS):
        raise ValueError(f"{csv_path}: unexpected columns {header}")
    states = np.array([[int(v) for v in r[:n]] for r in body], dtype=np.int64).reshape(len(body), n)
    values = np.array([[float(v) for v in r[n:]] for r in body]).reshape(len(body), len(BOUND_COLUMNS))
    result = BoundsResult(
        states=states,
        cond_lower=values[:, 0],
        cond_upper=values[:, 1],
        uncond_lower=values[:, 2],
        uncond_upper=values[:, 3],
        c=summary["c"],
        gamma=summary["gamma"],
        epsilon=summary["epsilon"],
        lam=summary.get("lambda"),
    )
    return result, header[:n]


def project(bounds: BoundsResult, values: np.ndarray, axes: Sequence[int]) -> dict[tuple[int, int], float]:
    """Sum ``values`` over states that agree on the projected coordinates."""
    grid: dict[tuple[int, int], float] = defaultdict(float)
    for s, v in zip(bounds.states, values):
        key = (int(s[axes[0]]), int(s[axes[1]]) if len(axes) > 1 else 0)
        grid[key] += float(v)
    return dict(grid)


def write_grid(path: str | Path, grid: dict[tuple[int, int], float], labels: Sequence[str]) -> None:
    lines = ["# " + " ".join(labels)]
    prev = None
    for (a, b) in sorted(grid):
        if prev is not None and a != prev:
            lines.append("")
        lines.append(f"{a} {b} {fmt(grid[(a, b)])}")
        prev = a
    Path(path).write_text("\n".join(lines) + "\n")


def emit_plot_data(
    bounds: BoundsResult,
    species: Sequence[str],
    projection: Sequence[str],
    out_dir: str | Path,
) -> list[Path]:
    """Write ``plot_upper.dat`` (upper bounds) and ``plot_gap.dat`` (upper minus lower).

    ``projection`` names one or two species; with one, the second grid
    coordinate is 0.
    """
    axes = []
    for name in projection:
        if name not in species:
            raise ValueError(f"unknown species {name!r} in plot projection")
        axes.append(list(species).index(name))
    if not 1 <= len(axes) <= 2:
        raise ValueError("plot projection needs one or two species")
    labels = list(projection) + ([] if len(axes) == 2 else ["_"])
    out_dir = Path(out_dir)
    upper = out_dir / "plot_upper.dat"
    gap = out_dir / "plot_gap.dat"
    write_grid(upper, project(bounds, bounds.cond_upper, axes), labels + ["cond_upper"])
    write_grid(gap, project(bounds, bounds.cond_upper - bounds.cond_lower, axes), labels + ["gap"])
    return [upper, gap]


def read_grid(path: str | Path) -> dict[tuple[int, int], float]:
    grid = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        a, b, v = line.split()
        grid[(int(a), int(b))] = float(v)
    return grid


def local_maxima(grid: dict[tuple[int, int], float]) -> list[tuple[int, int]]:
    """Grid points strictly above all eight neighbours (missing neighbours count as 0)."""
    out = []
    for (a, b), v in grid.items():
        nbrs = [grid.get((a + i, b + j), 0.0) for i in (-1, 0, 1) for j in (-1, 0, 1) if i or j]
        if v > 0 and all(v > u for u in nbrs):
            out.append((a, b))
    return sorted(out)
