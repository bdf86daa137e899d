"""Brute-force reference solver on a truncated box.

The chain is restricted to the invariant-feasible lattice points of a box;
transitions that leave the box are dropped and the diagonal re-closed, and
the balance equations are solved directly. This is deliberately independent
of the window and bounding code so it can be used to check them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .bounding import BoundsResult
from .configs import configurations
from .errors import MultipleClosedClassesError, OracleError, OracleSizeError
from .model import Model, successors

ORACLE_MAX_STATES = 200_000
CHECK_TOLERANCE = 1e-9


@dataclass
class TruncatedSolution:
    states: np.ndarray
    pi: np.ndarray
    residual: float
    dropped: np.ndarray  # per-state rate of transitions cut by the box
    box: list[tuple[int, int]]

    @property
    def dropped_total(self) -> float:
        return float(self.dropped.sum())

    @property
    def mass_proxy(self) -> float:
        """Stationary mass on states that lose transitions to the truncation."""
        return float(self.pi[self.dropped > 0].sum())

    def lookup(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(v) for v in s): i for i, s in enumerate(self.states)}


def parse_box(text: str, n: int) -> list[tuple[int, int]]:
    """Parse ``"0..30,0..30,..."`` into inclusive intervals."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n:
        raise ValueError(f"box has {len(parts)} intervals, model has {n} species")
    out = []
    for p in parts:
        a, sep, b = p.partition("..")
        if not sep:
            a = b = p
        lo, hi = int(a), int(b)
        if lo < 0 or hi < lo:
            raise ValueError(f"bad interval {p!r}")
        out.append((lo, hi))
    return out


def box_states(m: Model, box: Sequence[tuple[int, int]], max_states: int = ORACLE_MAX_STATES) -> np.ndarray:
    chunks = []
    total = 0
    for cfg in configurations(m):
        if any(not (box[i][0] <= v <= box[i][1]) for i, v in cfg.fixed):
            continue
        free = list(cfg.free)
        size = int(np.prod([box[i][1] - box[i][0] + 1 for i in free])) if free else 1
        total += size
        if total > max_states * 4:
            raise OracleSizeError(f"box has more than {max_states} states")
        if free:
            axes = [np.arange(box[i][0], box[i][1] + 1) for i in free]
            grids = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([g.ravel() for g in grids], axis=1)
        else:
            pts = np.zeros((1, 0), dtype=np.int64)
        pts = pts[cfg.feasible(pts)]
        chunks.append(cfg.full_states(pts, m.n))
    states = np.concatenate(chunks) if chunks else np.zeros((0, m.n), dtype=np.int64)
    if len(states) > max_states:
        raise OracleSizeError(f"box has {len(states)} states, limit is {max_states}")
    if len(states) == 0:
        raise OracleError("box contains no invariant-feasible state")
    return states[np.lexsort(states.T[::-1])]


def truncated_stationary(m: Model, box: Sequence[tuple[int, int]], max_states: int = ORACLE_MAX_STATES) -> TruncatedSolution:
    """Stationary distribution of the box-truncated chain.

    Raises
    ------
    MultipleClosedClassesError
        The truncated chain has more than one closed communicating class.
    OracleSizeError
        The box holds more than ``max_states`` feasible states.
    """
    box = [(int(a), int(b)) for a, b in box]
    states = box_states(m, box, max_states)
    index = {tuple(int(v) for v in s): i for i, s in enumerate(states)}
    n = len(states)
    rows, cols, vals = [], [], []
    dropped = np.zeros(n)
    for i, s in enumerate(states):
        for y, r in successors(m, tuple(int(v) for v in s)):
            k = index.get(y)
            if k is None:
                dropped[i] += r
            else:
                rows.append(i)
                cols.append(k)
                vals.append(r)
    off = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    off.sum_duplicates()
    Q = (off - sp.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()

    ncomp, labels = connected_components(off, directed=True, connection="strong")
    out_edges = np.zeros(ncomp, dtype=bool)
    coo = off.tocoo()
    cross = labels[coo.row] != labels[coo.col]
    out_edges[labels[coo.row[cross]]] = True
    closed = [k for k in range(ncomp) if not out_edges[k]]
    if len(closed) != 1:
        listing = [[tuple(int(v) for v in states[i]) for i in np.nonzero(labels == k)[0][:5]] for k in closed]
        raise MultipleClosedClassesError(
            f"truncated chain has {len(closed)} closed classes (first states: {listing}); refusing to pick one",
            listing,
        )
    members = np.nonzero(labels == closed[0])[0]
    pi = np.zeros(n)
    if len(members) == 1:
        pi[members] = 1.0
    else:
        A = Q[members][:, members].T.tolil()
        A[len(members) - 1, :] = 1.0
        rhs = np.zeros(len(members))
        rhs[-1] = 1.0
        sol = spla.spsolve(A.tocsc(), rhs)
        sol = np.clip(sol, 0.0, None)
        pi[members] = sol / sol.sum()
    residual = float(np.max(np.abs(Q.T @ pi))) if n else 0.0
    return TruncatedSolution(states, pi, residual, dropped, box)


def grow_until_stable(
    m: Model,
    box: Sequence[tuple[int, int]],
    window_states: np.ndarray,
    max_states: int = ORACLE_MAX_STATES,
    max_rounds: int = 8,
) -> TruncatedSolution:
    """Double the box until the solution on the window moves less than the truncation proxy."""
    box = [tuple(b) for b in box]
    prev = truncated_stationary(m, box, max_states)
    for _ in range(max_rounds):
        bigger = [(lo, 2 * hi + 1) for lo, hi in box]
        cur = truncated_stationary(m, bigger, max_states)
        a, b = prev.lookup(), cur.lookup()
        keys = [tuple(int(v) for v in s) for s in window_states]
        diff = max(abs(prev.pi[a[k]] - cur.pi[b[k]]) for k in keys)
        box, prev = bigger, cur
        if diff <= cur.mass_proxy + CHECK_TOLERANCE:
            return cur
    return prev


@dataclass
class CheckReport:
    tolerance: float
    tail_mass: float
    tail_bound: float
    worst_margin: float
    failures: list[dict] = field(default_factory=list)
    n_states: int = 0

    @property
    def passed(self) -> bool:
        return not self.failures and self.tail_mass <= self.tail_bound + self.tolerance

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "n_states": self.n_states,
            "tolerance": self.tolerance,
            "tail_mass": self.tail_mass,
            "tail_bound": self.tail_bound,
            "worst_margin": self.worst_margin,
            "failures": self.failures,
        }


def check_bounds(sol: TruncatedSolution, bounds: BoundsResult, tol: float = CHECK_TOLERANCE) -> CheckReport:
    """Compare reference probabilities on the window with the emitted bounds."""
    if bounds.states.ndim != 2 or bounds.states.shape[1] != sol.states.shape[1]:
        raise ValueError("bounds and reference solution have different state dimensions")
    lookup = sol.lookup()
    idx = []
    for s in bounds.states:
        key = tuple(int(v) for v in s)
        if key not in lookup:
            raise ValueError(f"window state {key} lies outside the oracle box")
        idx.append(lookup[key])
    p = sol.pi[idx]
    inside = p.sum()
    cond = p / inside if inside > 0 else p
    tolerance = tol + sol.mass_proxy
    failures = []
    margins = []
    for name, value, lo, hi in (
        ("conditional", cond, bounds.cond_lower, bounds.cond_upper),
        ("unconditional", p, bounds.uncond_lower, bounds.uncond_upper),
    ):
        margin = np.minimum(value - lo, hi - value)
        margins.append(margin.min())
        for i in np.nonzero(margin < -tolerance)[0]:
            failures.append({
                "state": [int(v) for v in bounds.states[i]],
                "kind": name,
                "value": float(value[i]),
                "lower": float(lo[i]),
                "upper": float(hi[i]),
            })
    return CheckReport(
        tolerance=tolerance,
        tail_mass=float(1.0 - inside),
        tail_bound=bounds.tail_bound,
        worst_margin=float(min(margins)),
        failures=failures,
        n_states=len(idx),
    )
