"""Per-state equilibrium bounds on the window from redirected chains.

The generator block ``Q[C, C]`` is uniformized into the substochastic matrix
``W = I + Q[C, C] / lam``. Sending each row's slack ``s = 1 - W 1`` to a
single state ``j`` gives the stochastic matrix ``W + s e_j^T``; its stationary
vector, restricted to ``C``, is proportional to ``u_j`` where
``(W^T - I) u_j = e_j``. The conditional equilibrium distribution on ``C`` is
a convex combination of these vectors, so the elementwise minimum and maximum
over ``j`` bracket it. One LU factorization of ``W^T - I`` serves every ``j``.
"""

from __future__ import annotations

import logging
import os
import warnings
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import MixedSignError, NegativeRateError, SingularWindowError
from .lyapunov import DriftParams
from .model import Model
from .statespace import StateSet

logger = logging.getLogger(__name__)

DENSE_THRESHOLD = 512
LAMBDA_FACTOR = 1.001
SIGN_TOLERANCE = 1e-12
PIVOT_TOLERANCE = 1e-13


class _Counter:
    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def increment(self):
        with self._lock:
            self.count += 1

    def reset(self):
        with self._lock:
            self.count = 0


#: Number of LU factorizations performed; instrumentation for tests.
FACTORIZATIONS = _Counter()


@dataclass
class SparseGenerator:
    """``Q[C, C]`` in CSR form plus the per-state leak rate into the complement."""

    matrix: sp.csr_matrix
    leak: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()


@dataclass
class SubstochasticW:
    W: sp.csr_matrix
    lam: float
    slack: np.ndarray

    @property
    def dim(self) -> int:
        return self.W.shape[0]


@dataclass
class ColumnBounds:
    lower: np.ndarray
    upper: np.ndarray
    max_residual: float
    max_sum_error: float
    columns: np.ndarray | None = None  # (dim, dim), column j is pi^W_j


@dataclass
class BoundsResult:
    states: np.ndarray
    cond_lower: np.ndarray
    cond_upper: np.ndarray
    uncond_lower: np.ndarray
    uncond_upper: np.ndarray
    c: float
    gamma: float
    epsilon: float
    lam: float | None = None
    extras: dict = field(default_factory=dict)

    @property
    def window_size(self) -> int:
        return len(self.states)

    @property
    def max_gap(self) -> float:
        return float(np.max(self.cond_upper - self.cond_lower))

    @property
    def tail_bound(self) -> float:
        return self.epsilon

    def violations(self, tol: float = 1e-12) -> list[str]:
        """Broken result invariants, as messages; empty when consistent."""
        out = []
        lo, up = self.cond_lower, self.cond_upper
        if np.any(lo < -tol) or np.any(up > 1 + tol) or np.any(lo > up + tol):
            out.append("conditional bounds outside 0 <= lower <= upper <= 1")
        if lo.sum() > 1 + tol * len(lo) or up.sum() < 1 - tol * len(up):
            out.append("conditional bounds do not bracket total mass 1")
        if not np.allclose(self.uncond_lower, (1 - self.epsilon) * lo, rtol=1e-15, atol=0):
            out.append("uncond_lower != (1 - epsilon) * cond_lower")
        if not np.array_equal(self.uncond_upper, up):
            out.append("uncond_upper != cond_upper")
        return out


def _state_keys(states: np.ndarray, radix: np.ndarray) -> np.ndarray:
    strides = np.cumprod(np.concatenate([[1], radix[::-1][:-1]]))[::-1]
    return (states + 1) @ strides


def build_generator_block(m: Model, C: StateSet) -> SparseGenerator:
    """Assemble ``Q[C, C]``; transitions leaving ``C`` accumulate into ``leak``."""
    states = C.states
    dim = len(states)
    if dim == 0:
        raise ValueError("window is empty")
    radix = states.max(axis=0).astype(np.int64) + 3
    use_keys = float(np.prod(radix.astype(float))) < 2.0**62
    if use_keys:
        keys = _state_keys(states, radix)
        order = np.argsort(keys)
        sorted_keys = keys[order]
    rows, cols, vals = [], [], []
    leak = np.zeros(dim)
    exit_rate = np.zeros(dim)
    for tc in m.classes:
        rate = tc.rate.evaluate_many(states)
        if np.any(rate < 0):
            i = int(np.argmin(rate))
            raise NegativeRateError(f"class {tc.name!r} has negative rate {rate[i]} at state {C.state_of(i)}")
        targets = states + np.asarray(tc.change)
        feasible = np.all(targets >= 0, axis=1)
        bad = (rate > 0) & ~feasible
        if bad.any():
            logger.warning("class %r has positive rate at %d states with infeasible targets", tc.name, int(bad.sum()))
        active = (rate > 0) & feasible
        idx = np.nonzero(active)[0]
        if use_keys:
            tkeys = _state_keys(np.minimum(targets[idx], radix - 2), radix)
            pos = np.searchsorted(sorted_keys, tkeys)
            pos = np.minimum(pos, dim - 1)
            inside = (sorted_keys[pos] == tkeys) & np.all(targets[idx] <= radix - 3, axis=1)
            tgt = order[pos]
        else:
            found = [C.index.get(tuple(int(v) for v in t), -1) for t in targets[idx]]
            tgt = np.array(found, dtype=np.int64)
            inside = tgt >= 0
        r = rate[idx]
        exit_rate[idx] += r
        rows.append(idx[inside])
        cols.append(tgt[inside])
        vals.append(r[inside])
        np.add.at(leak, idx[~inside], r[~inside])
    rows = np.concatenate(rows + [np.arange(dim)])
    cols = np.concatenate(cols + [np.arange(dim)])
    vals = np.concatenate(vals + [-exit_rate])
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
    Q.sum_duplicates()
    return SparseGenerator(Q, leak)


def build_W(qcc: SparseGenerator, lambda_factor: float = LAMBDA_FACTOR) -> SubstochasticW:
    if not lambda_factor > 1:
        raise ValueError(f"lambda_factor must exceed 1, got {lambda_factor}")
    top = float(np.max(-qcc.diagonal))
    lam = lambda_factor * top if top > 0 else 1.0
    W = (sp.identity(qcc.dim, format="csr") + qcc.matrix / lam).tocsr()
    W.eliminate_zeros()
    return SubstochasticW(W, lam, qcc.leak / lam)


class _Factor:
    """LU factors of a square matrix; read-only after construction."""

    def __init__(self, A: sp.spmatrix, dense: bool):
        FACTORIZATIONS.increment()
        self.dense = dense
        if dense:
            with warnings.catch_warnings():
                # singularity is detected from the pivots below
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu, piv = scipy.linalg.lu_factor(A.toarray(), check_finite=False)
            pivots = np.abs(np.diag(lu))
            self._lu = (lu, piv)
        else:
            try:
                self._lu = spla.splu(sp.csc_matrix(A), permc_spec="COLAMD")
            except RuntimeError as exc:
                raise SingularWindowError(_SINGULAR_MESSAGE) from exc
            pivots = np.abs(self._lu.U.diagonal())
        scale = max(float(np.max(np.abs(A.data))) if A.nnz else 1.0, 1.0)
        if pivots.size and pivots.min() <= PIVOT_TOLERANCE * scale:
            raise SingularWindowError(_SINGULAR_MESSAGE)

    def solve(self, B: np.ndarray) -> np.ndarray:
        if self.dense:
            return scipy.linalg.lu_solve(self._lu, B, check_finite=False)
        return self._lu.solve(B)


_SINGULAR_MESSAGE = (
    "W^T - I is singular: the window contains a closed set of states with no leak. "
    "Check whether the window absorbs all probability mass; if so, solve that closed "
    "chain exactly instead of bounding it."
)


def _normalize(U: np.ndarray, j0: int) -> np.ndarray:
    P = U / U.sum(axis=0)
    neg = P < 0
    if neg.any():
        worst = np.min(P)
        if worst < -SIGN_TOLERANCE:
            col = j0 + int(np.argmin(P.min(axis=0)))
            raise MixedSignError(f"redirected solution for column {col} has mixed signs (entry {worst:g})", col)
        P[neg] = 0.0
        P /= P.sum(axis=0)
    return P


def solve_column_bounds(
    w: SubstochasticW,
    *,
    dense_threshold: int = DENSE_THRESHOLD,
    threads: int | None = None,
    keep_columns: bool = False,
) -> ColumnBounds:
    """Elementwise min and max over ``j`` of the redirected stationary vectors.

    ``W^T - I`` is factorized once; every column is one pair of triangular
    solves against the shared factors, batched and spread over ``threads``.

    Raises
    ------
    SingularWindowError
        ``W^T - I`` is singular (a closed subchain without leak).
    MixedSignError
        A solution vector has entries of both signs beyond roundoff.
    """
    n = w.dim
    dense = n < dense_threshold
    Wt = w.W.T.tocsr()
    if not np.any(w.slack > 0):
        # already stochastic: one stationary vector, no redirection needed
        A = (Wt - sp.identity(n, format="csr")).tolil()
        A[n - 1, :] = 1.0
        factor = _Factor(A.tocsr(), dense)
        rhs = np.zeros(n)
        rhs[n - 1] = 1.0
        pi = factor.solve(rhs)
        if np.min(pi) < -SIGN_TOLERANCE:
            raise MixedSignError("stationary vector of the closed window has mixed signs", 0)
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
        resid = float(np.max(np.abs(Wt @ pi - pi)))
        cols = np.repeat(pi[:, None], n, axis=1) if keep_columns else None
        return ColumnBounds(pi.copy(), pi.copy(), resid, abs(pi.sum() - 1.0), cols)

    factor = _Factor(Wt - sp.identity(n, format="csr"), dense)
    batch = int(max(1, min(256, 20_000_000 // n)))
    starts = list(range(0, n, batch))

    def work(j0):
        j1 = min(j0 + batch, n)
        B = np.zeros((n, j1 - j0))
        B[np.arange(j0, j1), np.arange(j1 - j0)] = 1.0
        P = _normalize(factor.solve(B), j0)
        # balance of the redirected chain: pi (W + s e_j^T) = pi
        R = Wt @ P - P
        R[np.arange(j0, j1), np.arange(j1 - j0)] += w.slack @ P
        return j0, P.min(axis=1), P.max(axis=1), float(np.abs(R).max()), float(np.abs(P.sum(axis=0) - 1).max()), (P if keep_columns else None)

    workers = threads or os.cpu_count() or 1
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, starts))
    else:
        results = [work(j0) for j0 in starts]
    lower = np.min(np.stack([r[1] for r in results]), axis=0)
    upper = np.max(np.stack([r[2] for r in results]), axis=0)
    cols = np.concatenate([r[5] for r in results], axis=1) if keep_columns else None
    return ColumnBounds(
        lower,
        upper,
        max(r[3] for r in results),
        max(r[4] for r in results),
        cols,
    )


def assemble_bounds(cond: ColumnBounds, params: DriftParams, C: StateSet, lam: float | None = None) -> BoundsResult:
    lower = cond.lower
    return BoundsResult(
        states=np.asarray(C.states),
        cond_lower=lower,
        cond_upper=cond.upper,
        uncond_lower=(1.0 - params.epsilon) * lower,
        uncond_upper=cond.upper,
        c=params.c,
        gamma=params.gamma,
        epsilon=params.epsilon,
        lam=lam,
    )
