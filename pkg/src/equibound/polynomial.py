"""Sparse multivariate polynomials over population counts.

A :class:`Polynomial` is an immutable map from exponent vectors to float
coefficients. It stores no zero coefficients and no duplicate monomials, so
two polynomials compare equal exactly when their canonical term maps agree.
"""

from __future__ import annotations

import itertools
from math import comb
from typing import Iterable, Mapping, Sequence

import numpy as np

Exponents = tuple[int, ...]


class Polynomial:
    """Multivariate polynomial in ``nvars`` variables.

    Parameters
    ----------
    nvars : int
        Number of variables (species).
    terms : mapping or iterable of (exponents, coefficient)
        Duplicate exponent vectors are merged; zero coefficients dropped.
    """

    __slots__ = ("nvars", "_terms", "_hash")

    def __init__(self, nvars: int, terms: Mapping[Exponents, float] | Iterable[tuple[Exponents, float]] = ()):
        if isinstance(terms, Mapping):
            terms = terms.items()
        merged: dict[Exponents, float] = {}
        for exps, coef in terms:
            exps = tuple(int(e) for e in exps)
            if len(exps) != nvars:
                raise ValueError(f"exponent vector {exps} has length {len(exps)}, expected {nvars}")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            merged[exps] = merged.get(exps, 0.0) + float(coef)
        self.nvars = nvars
        self._terms = {e: c for e, c in merged.items() if c != 0.0}
        self._hash = None

    # construction helpers

    @classmethod
    def constant(cls, nvars: int, value: float) -> Polynomial:
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, nvars: int, index: int) -> Polynomial:
        exps = [0] * nvars
        exps[index] = 1
        return cls(nvars, {tuple(exps): 1.0})

    @classmethod
    def sum_of_squares(cls, nvars: int) -> Polynomial:
        return cls(nvars, {tuple(2 if i == j else 0 for i in range(nvars)): 1.0 for j in range(nvars)})

    # structure

    @property
    def terms(self) -> dict[Exponents, float]:
        return dict(self._terms)

    @property
    def degree(self) -> int:
        """Maximum total degree; the zero polynomial has degree 0."""
        return max((sum(e) for e in self._terms), default=0)

    def is_zero(self) -> bool:
        return not self._terms

    def variables(self) -> set[int]:
        """Indices of variables that occur with a positive exponent."""
        return {i for e in self._terms for i, k in enumerate(e) if k}

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(sorted(self._terms.items(), reverse=True))

    def __eq__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.nvars, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.nvars, frozenset(self._terms.items())))
        return self._hash

    def __repr__(self):
        return f"Polynomial({self.to_text()})"

    # arithmetic

    def _coerce(self, other) -> Polynomial:
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise ValueError("polynomials over different numbers of variables")
            return other
        return Polynomial.constant(self.nvars, float(other))

    def __add__(self, other):
        other = self._coerce(other)
        return Polynomial(self.nvars, itertools.chain(self._terms.items(), other._terms.items()))

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return Polynomial(self.nvars, {e: c * float(other) for e, c in self._terms.items()})
        other = self._coerce(other)
        out = []
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                out.append((tuple(a + b for a, b in zip(e1, e2)), c1 * c2))
        return Polynomial(self.nvars, out)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> Polynomial:
        return Polynomial(self.nvars, {e: c / scalar for e, c in self._terms.items()})

    # evaluation

    def __call__(self, x: Sequence[float]) -> float:
        if len(x) != self.nvars:
            raise ValueError(f"point has dimension {len(x)}, expected {self.nvars}")
        total = 0.0
        for exps, coef in self._terms.items():
            term = coef
            for xi, e in zip(x, exps):
                if e:
                    term *= xi**e
            total += term
        return total

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at every row of an ``(m, nvars)`` array."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.nvars:
            raise ValueError(f"expected an (m, {self.nvars}) array, got shape {points.shape}")
        out = np.zeros(points.shape[0])
        for exps, coef in self._terms.items():
            term = np.full(points.shape[0], coef)
            for i, e in enumerate(exps):
                if e:
                    term *= points[:, i] ** e
            out += term
        return out

    def gradient(self, x: Sequence[float]) -> np.ndarray:
        return np.array([self.partial(i)(x) for i in range(self.nvars)])

    # transformations

    def partial(self, index: int) -> Polynomial:
        out = []
        for exps, coef in self._terms.items():
            k = exps[index]
            if k:
                e = list(exps)
                e[index] = k - 1
                out.append((tuple(e), coef * k))
        return Polynomial(self.nvars, out)

    def _expand_shift(self, shift: Sequence[int], skip_identity: bool) -> Polynomial:
        out = []
        for exps, coef in self._terms.items():
            ranges = [range(e + 1) for e in exps]
            for ks in itertools.product(*ranges):
                if skip_identity and ks == exps:
                    continue
                c = coef
                for e, k, v in zip(exps, ks, shift):
                    if k != e:
                        c *= comb(e, k) * v ** (e - k)
                if c:
                    out.append((ks, c))
        return Polynomial(self.nvars, out)

    def shift(self, shift: Sequence[int]) -> Polynomial:
        """The polynomial ``x -> p(x + shift)``."""
        return self._expand_shift(shift, skip_identity=False)

    def shift_difference(self, shift: Sequence[int]) -> Polynomial:
        """The polynomial ``x -> p(x + shift) - p(x)``.

        The leading monomials cancel structurally rather than by floating
        point subtraction, so the result has degree at most ``degree - 1``.
        """
        return self._expand_shift(shift, skip_identity=True)

    def restrict(self, free: Sequence[int], fixed: Mapping[int, float]) -> Polynomial:
        """Substitute ``fixed`` values and return a polynomial in the ``free`` variables only."""
        out = []
        for exps, coef in self._terms.items():
            c = coef
            for i, v in fixed.items():
                if exps[i]:
                    c *= v ** exps[i]
            out.append((tuple(exps[i] for i in free), c))
        return Polynomial(len(free), out)

    # printing

    def to_text(self, names: Sequence[str] | None = None) -> str:
        """Render in the model-file expression syntax."""
        if names is None:
            names = [f"x{i + 1}" for i in range(self.nvars)]
        if not self._terms:
            return "0"
        parts = []
        for exps, coef in self:
            factors = []
            for name, e in zip(names, exps):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            mag = abs(coef)
            if factors and mag == 1.0:
                body = "*".join(factors)
            else:
                body = "*".join([repr(mag)] + factors)
            sign = "-" if coef < 0 else "+"
            parts.append((sign, body))
        first_sign, first = parts[0]
        text = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return text
