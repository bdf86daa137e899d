"""Split of coordinates into invariant-bounded and free ones.

A coordinate is bounded when it appears with a positive coefficient in an
invariant whose coefficients are all non-negative; then ``x_i <= rhs / a_i``.
Every feasible assignment of the bounded coordinates is a
:class:`Configuration`; the free coordinates range over the lattice subject
to whatever invariant rows still involve them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import prod

import numpy as np

from .errors import InfeasibleInvariantsError
from .model import Model

MAX_CONFIGURATIONS = 1_000_000


@dataclass(frozen=True)
class Configuration:
    fixed: tuple[tuple[int, int], ...]  # (coordinate, value) pairs
    free: tuple[int, ...]
    # remaining equality rows over the free coordinates: A @ x_free == b
    A: np.ndarray
    b: np.ndarray

    @property
    def fixed_map(self) -> dict[int, int]:
        return dict(self.fixed)

    def label(self, species) -> str:
        if not self.fixed:
            return "all"
        return ",".join(f"{species[i]}={v}" for i, v in self.fixed)

    def full_states(self, free_points: np.ndarray, n: int) -> np.ndarray:
        free_points = np.asarray(free_points, dtype=np.int64).reshape(-1, len(self.free))
        out = np.zeros((free_points.shape[0], n), dtype=np.int64)
        for i, v in self.fixed:
            out[:, i] = v
        if self.free:
            out[:, list(self.free)] = free_points
        return out

    def feasible(self, free_points: np.ndarray) -> np.ndarray:
        free_points = np.asarray(free_points).reshape(-1, len(self.free))
        if self.A.shape[0] == 0:
            return np.ones(free_points.shape[0], dtype=bool)
        return np.all(free_points @ self.A.T == self.b, axis=1)


def bounded_ranges(m: Model) -> dict[int, int]:
    """Upper bound for every invariant-bounded coordinate."""
    ub: dict[int, int] = {}
    for inv in m.invariants:
        if all(a >= 0 for a in inv.coeffs) and inv.rhs >= 0:
            for i, a in enumerate(inv.coeffs):
                if a > 0:
                    ub[i] = min(ub.get(i, inv.rhs // a), inv.rhs // a)
    return ub


def configurations(m: Model) -> list[Configuration]:
    """All feasible assignments of the bounded coordinates, in lexicographic order."""
    ub = bounded_ranges(m)
    bounded = sorted(ub)
    free = tuple(i for i in range(m.n) if i not in ub)
    if prod(ub[i] + 1 for i in bounded) > MAX_CONFIGURATIONS:
        raise InfeasibleInvariantsError("too many bounded-coordinate configurations to enumerate")
    out = []
    for values in itertools.product(*(range(ub[i] + 1) for i in bounded)):
        fixed = dict(zip(bounded, values))
        rows, rhs, ok = [], [], True
        for inv in m.invariants:
            resid = inv.rhs - sum(inv.coeffs[i] * v for i, v in fixed.items())
            coeffs = [inv.coeffs[i] for i in free]
            if not any(coeffs):
                if resid != 0:
                    ok = False
                    break
                continue
            if (all(a >= 0 for a in coeffs) and resid < 0) or (all(a <= 0 for a in coeffs) and resid > 0):
                ok = False
                break
            rows.append(coeffs)
            rhs.append(resid)
        if ok:
            A = np.array(rows, dtype=np.int64).reshape(len(rows), len(free))
            out.append(Configuration(tuple(sorted(fixed.items())), free, A, np.array(rhs, dtype=np.int64)))
    if not out:
        raise InfeasibleInvariantsError("no state satisfies the model invariants")
    return out
