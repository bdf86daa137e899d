"""Drift of a Lyapunov function and the geometric tail bound.

For a Lyapunov function ``g`` the drift at ``x`` is the expected rate of
change of ``g``::

    d(x) = sum_j alpha_j(x) * (g(x + v_j) - g(x))

With ``c >= max d`` and margin ``gamma`` chosen so that
``epsilon = c / (c + gamma)``, the stationary mass outside
``C = {x : d(x) / (c + gamma) > epsilon - 1}`` is at most ``epsilon``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .configs import Configuration, configurations
from .errors import LyapunovError, UnboundedDriftError
from .model import Model
from .polynomial import Polynomial

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchConfig:
    starts: int = 64
    radius: float = 1e6
    ceiling: float = 1e12
    seed: int = 0
    c_override: float | None = None


@dataclass(frozen=True)
class DriftParams:
    c: float
    gamma: float
    epsilon: float

    def __post_init__(self):
        if not (self.c > 0 and self.gamma > 0):
            raise ValueError(f"need c > 0 and gamma > 0, got c={self.c}, gamma={self.gamma}")
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if abs(self.c / (self.c + self.gamma) - self.epsilon) > 1e-12 * self.epsilon:
            raise ValueError("epsilon, c and gamma are inconsistent")

    @classmethod
    def from_epsilon(cls, c: float, epsilon: float) -> DriftParams:
        return cls(c, gamma_from_epsilon(c, epsilon), epsilon)

    @property
    def scale(self) -> float:
        return self.gamma + self.c

    @property
    def threshold(self) -> float:
        """Membership threshold on the scaled drift."""
        return self.epsilon - 1.0


@dataclass(frozen=True)
class LyapunovSpec:
    """Unscaled Lyapunov function ``g_star`` and the scale ``gamma + c``."""

    g_star: Polynomial
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def g(self) -> Polynomial:
        return self.g_star / self.scale

    def check_nonnegative(self, states: np.ndarray) -> None:
        values = self.g_star.evaluate_many(states)
        if values.size and values.min() < 0:
            bad = states[int(np.argmin(values))]
            raise LyapunovError(f"Lyapunov function is negative ({values.min():g}) at state {tuple(int(v) for v in bad)}")


@dataclass(frozen=True)
class Maximizer:
    config: Configuration
    point: tuple[float, ...]  # full state, real-valued
    value: float


@dataclass(frozen=True)
class DriftMaximum:
    c: float
    maximizers: list[Maximizer] = field(default_factory=list)


def drift(m: Model, g: Polynomial, x: Sequence[float]) -> float:
    total = 0.0
    for tc in m.classes:
        rate = tc.rate(x)
        if rate == 0:
            continue
        y = [a + b for a, b in zip(x, tc.change)]
        if rate > 0 and any(v < 0 for v in y):
            logger.warning("drift: class %r has rate %g at %s with infeasible target", tc.name, rate, tuple(x))
        total += rate * (g(y) - g(x))
    return total


def drift_polynomial(m: Model, g: Polynomial) -> Polynomial:
    """Symbolic drift ``sum_j alpha_j * (g(. + v_j) - g)``."""
    out = Polynomial(m.n)
    for tc in m.classes:
        out = out + tc.rate * g.shift_difference(tc.change)
    return out


def gamma_from_epsilon(c: float, epsilon: float) -> float:
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    return c * (1.0 - epsilon) / epsilon


def scaled_drift(m: Model, g: Polynomial, c: float, gamma: float, x: Sequence[float]) -> float:
    return drift(m, g, x) / (gamma + c)


def check_growth(m: Model, g_star: Polynomial) -> bool:
    """Sufficient check that sublevel sets of ``g_star`` are finite.

    Every coordinate not pinned down by the invariants must occur in a
    pure power ``a * x_i^k`` with ``a > 0``. Logs a warning and returns
    False otherwise.
    """
    free = configurations(m)[0].free
    ok = True
    terms = g_star.terms
    for i in free:
        pure = [c for e, c in terms.items() if e[i] > 0 and sum(e) == e[i]]
        if not any(c > 0 for c in pure):
            logger.warning("Lyapunov function has no positive pure power of %s; finite sublevel sets not verified", m.species[i])
            ok = False
    return ok


def _start_points(rng: np.random.Generator, dim: int, starts: int, radius: float) -> list[np.ndarray]:
    points = [np.zeros(dim)]
    top = max(radius / 10.0, 1.0)
    for k in range(1, starts):
        side = top ** (k / max(starts - 1, 1))
        points.append(rng.uniform(0.0, side, size=dim))
    return points


def _maximize_config(d: Polynomial, cfg: Configuration, n: int, search: SearchConfig, rng) -> Maximizer:
    free = list(cfg.free)
    p = d.restrict(free, cfg.fixed_map)
    dim = len(free)
    if dim == 0:
        point = cfg.full_states(np.zeros((1, 0)), n)[0]
        return Maximizer(cfg, tuple(float(v) for v in point), p(()))
    grad = [p.partial(i) for i in range(dim)]

    def f(x):
        return -p(x)

    def jac(x):
        return -np.array([gi(x) for gi in grad])

    bounds = [(0.0, search.radius)] * dim
    best_x, best_v = None, -np.inf
    for x0 in _start_points(rng, dim, search.starts, search.radius):
        if cfg.A.shape[0]:
            cons = [{"type": "eq", "fun": lambda x: cfg.A @ x - cfg.b, "jac": lambda x: cfg.A.astype(float)}]
            res = minimize(f, x0, jac=jac, bounds=bounds, constraints=cons, method="SLSQP",
                           options={"ftol": 1e-15, "maxiter": 1000})
        else:
            res = minimize(f, x0, jac=jac, bounds=bounds, method="L-BFGS-B",
                           options={"ftol": 1e-16, "gtol": 1e-12, "maxiter": 5000})
        x, v = res.x, -res.fun
        if v > search.ceiling or np.max(np.abs(x)) >= search.radius * (1 - 1e-9):
            raise UnboundedDriftError(
                f"drift keeps increasing along an expanding ray in configuration {cfg.fixed} "
                f"(reached {v:g} at distance {np.max(np.abs(x)):g}); the Lyapunov function is not valid"
            )
        if v > best_v:
            best_x, best_v = x, v
    point = np.zeros(n)
    for i, val in cfg.fixed:
        point[i] = val
    point[free] = best_x
    return Maximizer(cfg, tuple(float(v) for v in point), float(best_v))


def _lattice_neighbourhood(point: Sequence[float], free: Sequence[int], reach: int = 1) -> np.ndarray:
    base = np.floor(np.asarray(point, dtype=float)).astype(np.int64)
    offsets = np.arange(-reach, reach + 2)
    grids = np.meshgrid(*[offsets] * len(free), indexing="ij")
    shifts = np.stack([g.ravel() for g in grids], axis=1)
    pts = np.repeat(base[None, :], shifts.shape[0], axis=0)
    pts[:, list(free)] += shifts
    return pts[np.all(pts >= 0, axis=1)]


def drift_maximizers(m: Model, g: Polynomial, search: SearchConfig = SearchConfig()) -> DriftMaximum:
    """Multi-start search for the maximum of the drift over the real relaxation.

    Each configuration of the invariant-bounded coordinates is searched
    separately. The maximum is then raised, if needed, to cover the lattice
    points surrounding every maximizer.
    """
    d = drift_polynomial(m, g)
    rng = np.random.default_rng(search.seed)
    found = [_maximize_config(d, cfg, m.n, search, rng) for cfg in configurations(m)]
    c = max(mx.value for mx in found)
    for mx in found:
        free = mx.config.free
        if len(free) > 8:
            continue
        pts = _lattice_neighbourhood(mx.point, free)
        pts = pts[mx.config.feasible(pts[:, list(free)])] if free else pts
        if len(pts):
            lattice_max = float(d.evaluate_many(pts).max())
            if lattice_max > c:
                logger.info("raising drift maximum from %r to lattice value %r", c, lattice_max)
                c = lattice_max
    if search.c_override is not None:
        if search.c_override < c:
            logger.warning("--c-override %g is below the searched maximum %g", search.c_override, c)
        c = float(search.c_override)
    return DriftMaximum(c, found)


def max_drift(m: Model, g: Polynomial, search: SearchConfig = SearchConfig()) -> float:
    return drift_maximizers(m, g, search).c
