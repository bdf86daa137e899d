"""Enumeration of the finite window ``C = {x : d_s(x) > epsilon - 1}``.

The window is found by a certified box scan rather than a graph search, since
``C`` need not be connected under the transition relation. Coordinates fixed
by the invariants are enumerated as separate configurations; the scan runs
over the free coordinates only.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .configs import Configuration, configurations
from .errors import (
    BoxOverflowError,
    DriftCertificateError,
    EmptyWindowError,
    WindowOverflowError,
)
from .lyapunov import DriftMaximum, DriftParams, LyapunovSpec, SearchConfig, drift_maximizers, drift_polynomial
from .model import Model, State
from .polynomial import Polynomial

logger = logging.getLogger(__name__)

MAX_WINDOW = 2_000_000
MAX_BOX_SIDE = 100_000


class StateSet:
    """Lexicographically ordered set of lattice states with a reverse index."""

    def __init__(self, states: np.ndarray, breakdown: dict[str, int] | None = None):
        states = np.asarray(states, dtype=np.int64)
        if states.ndim != 2:
            raise ValueError("states must be a 2-d array")
        order = np.lexsort(states.T[::-1]) if len(states) else np.arange(0)
        self.states = states[order]
        self.states.setflags(write=False)
        self.index: dict[State, int] = {tuple(int(v) for v in s): i for i, s in enumerate(self.states)}
        if len(self.index) != len(self.states):
            raise ValueError("duplicate states")
        self.breakdown = dict(breakdown or {})

    def __len__(self):
        return len(self.states)

    def __contains__(self, x) -> bool:
        return tuple(x) in self.index

    def __iter__(self):
        return (tuple(int(v) for v in s) for s in self.states)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def state_of(self, i: int) -> State:
        return tuple(int(v) for v in self.states[i])

    def index_of(self, x: Sequence[int]) -> int:
        return self.index[tuple(x)]

    def to_csv(self, path: str | Path, species: Sequence[str]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(species)
            w.writerows(self.states.tolist())


@dataclass
class Box:
    """Per-configuration integer box over the free coordinates (inclusive)."""

    config: Configuration
    lo: np.ndarray
    hi: np.ndarray

    def points(self) -> np.ndarray:
        if not self.config.free:
            return np.zeros((1, 0), dtype=np.int64)
        axes = [np.arange(a, b + 1) for a, b in zip(self.lo, self.hi)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


@dataclass
class WindowBounds:
    boxes: list[Box]
    intervals: list[tuple[int, int]] = field(default_factory=list)


class _Membership:
    def __init__(self, m: Model, g: Polynomial, params: DriftParams, closed: bool):
        self.m = m
        self.d = drift_polynomial(m, g)
        self.params = params
        self.closed = closed

    def drift(self, full: np.ndarray) -> np.ndarray:
        return self.d.evaluate_many(full)

    def member(self, drift_values: np.ndarray) -> np.ndarray:
        s = drift_values / self.params.scale
        if self.closed:
            return s >= self.params.threshold
        return s > self.params.threshold


def _face(box_lo, box_hi, axis, value) -> np.ndarray:
    axes = [np.arange(a, b + 1) for a, b in zip(box_lo, box_hi)]
    axes[axis] = np.array([value])
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _face_settled(mem: _Membership, cfg: Configuration, lo, hi, axis, value, outward) -> bool:
    face = _face(lo, hi, axis, value)
    nxt = face.copy()
    nxt[:, axis] += outward
    keep = cfg.feasible(face)
    face, nxt = face[keep], nxt[keep]
    if len(face) == 0:
        return True
    n = mem.m.n
    d_face = mem.drift(cfg.full_states(face, n))
    d_next = mem.drift(cfg.full_states(nxt, n))
    if mem.member(d_face).any() or mem.member(d_next).any():
        return False
    return bool(np.all(d_next <= d_face))


def _grow_box(mem: _Membership, cfg: Configuration, seed: Sequence[float], max_side: int) -> Box:
    free = list(cfg.free)
    dim = len(free)
    if dim == 0:
        return Box(cfg, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    start = np.asarray(seed, dtype=float)[free]
    lo = np.maximum(np.floor(start), 0).astype(np.int64)
    hi = np.maximum(np.ceil(start), 0).astype(np.int64)
    changed = True
    while changed:
        changed = False
        for axis in range(dim):
            if not _face_settled(mem, cfg, lo, hi, axis, hi[axis], +1):
                hi[axis] += 1
                changed = True
            if lo[axis] > 0 and not _face_settled(mem, cfg, lo, hi, axis, lo[axis], -1):
                lo[axis] -= 1
                changed = True
            if hi[axis] - lo[axis] + 1 > max_side:
                raise BoxOverflowError(
                    f"bounding box side for {mem.m.species[free[axis]]} exceeds {max_side} "
                    f"in configuration {cfg.label(mem.m.species)}"
                )
    return Box(cfg, lo, hi)


def _window_bounds(m, g, params, maximum, max_box_side, closed) -> tuple[_Membership, WindowBounds]:
    mem = _Membership(m, g, params, closed)
    if maximum is None:
        maximum = drift_maximizers(m, g, SearchConfig())
    boxes = [_grow_box(mem, mx.config, mx.point, max_box_side) for mx in maximum.maximizers]
    intervals = []
    for i in range(m.n):
        lows, highs = [], []
        for b in boxes:
            fixed = b.config.fixed_map
            if i in fixed:
                lows.append(fixed[i])
                highs.append(fixed[i])
            else:
                k = b.config.free.index(i)
                lows.append(int(b.lo[k]))
                highs.append(int(b.hi[k]))
        intervals.append((min(lows), max(highs)))
    return mem, WindowBounds(boxes, intervals)


def bounding_box(
    m: Model,
    g: Polynomial,
    params: DriftParams,
    maximum: DriftMaximum | None = None,
    max_box_side: int = MAX_BOX_SIDE,
    closed: bool = False,
) -> list[tuple[int, int]]:
    """Per-coordinate inclusive intervals whose product contains the window."""
    return _window_bounds(m, g, params, maximum, max_box_side, closed)[1].intervals


def enumerate_window(
    m: Model,
    g: Polynomial,
    params: DriftParams,
    maximum: DriftMaximum | None = None,
    *,
    max_window: int = MAX_WINDOW,
    max_box_side: int = MAX_BOX_SIDE,
    closed: bool = False,
    slab: int = 65536,
) -> StateSet:
    """Enumerate ``C`` and re-verify ``d(x) <= c`` on every member.

    Raises
    ------
    EmptyWindowError
        No lattice state passes the membership test.
    WindowOverflowError
        More than ``max_window`` states qualify.
    DriftCertificateError
        A member has drift above ``params.c``.
    """
    mem, wb = _window_bounds(m, g, params, maximum, max_box_side, closed)
    chunks, breakdown, total = [], {}, 0
    tol = 1e-12 * max(1.0, abs(params.c))
    for box in wb.boxes:
        cfg = box.config
        count = 0
        pts = box.points()
        for start in range(0, len(pts), slab):
            part = pts[start:start + slab]
            part = part[cfg.feasible(part)]
            full = cfg.full_states(part, m.n)
            d = mem.drift(full)
            keep = mem.member(d)
            if np.any(d[keep] > params.c + tol):
                bad = full[keep][int(np.argmax(d[keep]))]
                raise DriftCertificateError(
                    f"state {tuple(int(v) for v in bad)} has drift {d[keep].max()!r} above c = {params.c!r}; "
                    "the drift maximum is not certified (supply --c-override)"
                )
            full = full[keep]
            count += len(full)
            total += len(full)
            if total > max_window:
                raise WindowOverflowError(f"window has more than {max_window} states")
            chunks.append(full)
        breakdown[cfg.label(m.species)] = count
    states = np.concatenate(chunks) if chunks else np.zeros((0, m.n), dtype=np.int64)
    if len(states) == 0:
        raise EmptyWindowError(
            f"no state has scaled drift above {params.threshold}; epsilon={params.epsilon} is too large"
        )
    LyapunovSpec(g, params.scale).check_nonnegative(states)
    logger.info("window: %d states (%s)", len(states), breakdown)
    return StateSet(states, breakdown)


def shell_points(m: Model, intervals: Sequence[tuple[int, int]]) -> np.ndarray:
    """Invariant-feasible lattice states on the one-thick shell outside a box."""
    lo = np.array([max(a - 1, 0) for a, _ in intervals])
    hi = np.array([b + 1 for _, b in intervals])
    out = []
    for cfg in configurations(m):
        free = list(cfg.free)
        fixed = cfg.fixed_map
        if any(not (intervals[i][0] <= v <= intervals[i][1]) for i, v in fixed.items()):
            continue
        axes = [np.arange(lo[i], hi[i] + 1) for i in free]
        if not free:
            continue
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        inside = np.all([(pts[:, k] >= intervals[i][0]) & (pts[:, k] <= intervals[i][1]) for k, i in enumerate(free)], axis=0)
        pts = pts[~inside]
        pts = pts[cfg.feasible(pts)]
        out.append(cfg.full_states(pts, m.n))
    return np.concatenate(out) if out else np.zeros((0, m.n), dtype=np.int64)
