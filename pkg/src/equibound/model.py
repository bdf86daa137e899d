"""Transition-class population models and their text format.

A model file is line oriented; ``#`` starts a comment::

    species: X Y
    class birth: rate = 1 ; change = (+1, 0)
    class conv:  rate = 0.5*X ; change = (-1, +1)
    invariant: X + Y = 10
    init: (10, 0)
    lyapunov: X^2 + Y^2

Species can also be referred to as ``x1 ... xn`` in expressions.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import ModelError, ModelSyntaxError, NegativeRateError
from .polynomial import Polynomial

logger = logging.getLogger(__name__)

State = tuple[int, ...]


@dataclass(frozen=True)
class TransitionClass:
    name: str
    rate: Polynomial
    change: tuple[int, ...]

    def __post_init__(self):
        if not any(self.change):
            raise ModelError(f"class {self.name!r}: change vector is all zero")


@dataclass(frozen=True)
class Invariant:
    """Linear conservation law ``sum(coeffs[i] * x[i]) == rhs``."""

    coeffs: tuple[int, ...]
    rhs: int

    def holds(self, x: Sequence[int]) -> bool:
        return sum(a * b for a, b in zip(self.coeffs, x)) == self.rhs


@dataclass(frozen=True)
class Model:
    species: tuple[str, ...]
    classes: tuple[TransitionClass, ...]
    invariants: tuple[Invariant, ...]
    init: State
    lyapunov: Polynomial | None = field(default=None, compare=False)

    def __post_init__(self):
        n = len(self.species)
        if len(set(self.species)) != n:
            raise ModelError("duplicate species name")
        seen = {}
        for tc in self.classes:
            if len(tc.change) != n or tc.rate.nvars != n:
                raise ModelError(f"class {tc.name!r}: dimension does not match {n} species")
            if tc.change in seen:
                raise ModelError(f"classes {seen[tc.change]!r} and {tc.name!r} share change vector {tc.change}")
            seen[tc.change] = tc.name
        if len(self.init) != n:
            raise ModelError(f"init has {len(self.init)} entries, expected {n}")
        if any(v < 0 for v in self.init):
            raise ModelError("init has a negative entry")
        for inv in self.invariants:
            if len(inv.coeffs) != n:
                raise ModelError("invariant dimension does not match species count")
            if not inv.holds(self.init):
                raise ModelError(f"init {self.init} violates invariant {self._inv_text(inv)}")
            for tc in self.classes:
                if sum(a * v for a, v in zip(inv.coeffs, tc.change)):
                    raise ModelError(f"class {tc.name!r} does not preserve invariant {self._inv_text(inv)}")

    @property
    def n(self) -> int:
        return len(self.species)

    def satisfies(self, x: Sequence[int]) -> bool:
        return all(v >= 0 for v in x) and all(inv.holds(x) for inv in self.invariants)

    def _inv_text(self, inv: Invariant) -> str:
        lhs = Polynomial(self.n, {tuple(int(i == j) for i in range(self.n)): a for j, a in enumerate(inv.coeffs)})
        return f"{lhs.to_text(self.species)} = {inv.rhs}"

    def to_text(self) -> str:
        """Serialize in the model-file format; ``parse_model`` inverts this."""
        lines = ["species: " + " ".join(self.species)]
        for tc in self.classes:
            change = ", ".join(f"{v:+d}" if v else "0" for v in tc.change)
            lines.append(f"class {tc.name}: rate = {tc.rate.to_text(self.species)} ; change = ({change})")
        for inv in self.invariants:
            lines.append(f"invariant: {self._inv_text(inv)}")
        lines.append("init: (" + ", ".join(str(v) for v in self.init) + ")")
        if self.lyapunov is not None:
            lines.append(f"lyapunov: {self.lyapunov.to_text(self.species)}")
        return "\n".join(lines) + "\n"


def eval_poly(p: Polynomial, x: Sequence[float]) -> float:
    return p(x)


def successors(m: Model, x: Sequence[int]) -> list[tuple[State, float]]:
    """Outgoing transitions of ``x`` as ``(target, rate)`` in class order.

    Zero-rate classes are skipped. A positive rate whose target leaves the
    non-negative orthant is dropped with a warning; a negative rate raises
    :class:`NegativeRateError`.
    """
    out = []
    for tc in m.classes:
        r = tc.rate(x)
        if r < 0:
            raise NegativeRateError(f"class {tc.name!r} has negative rate {r} at state {tuple(x)}")
        if r == 0:
            continue
        y = tuple(a + b for a, b in zip(x, tc.change))
        if any(v < 0 for v in y):
            logger.warning("class %r has rate %g at %s but its target %s is infeasible", tc.name, r, tuple(x), y)
            continue
        out.append((y, r))
    return out


# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*^=();,:]))"
)


class _Tokens:
    def __init__(self, text: str, lineno: int, offset: int = 0):
        self.lineno = lineno
        self.items = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if not m:
                col = pos + len(text[pos:]) - len(text[pos:].lstrip()) + 1 + offset
                raise ModelSyntaxError(f"unexpected character {text[col - 1 - offset]!r}", lineno, col)
            kind = m.lastgroup
            self.items.append((kind, m.group(kind), m.start(kind) + 1 + offset))
            pos = m.end()
        self.pos = 0
        self.end_col = len(text) + 1 + offset

    def peek(self):
        return self.items[self.pos] if self.pos < len(self.items) else (None, None, self.end_col)

    def next(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, value):
        kind, val, col = self.next()
        if val != value:
            found = "end of line" if val is None else repr(val)
            raise ModelSyntaxError(f"expected {value!r}, found {found}", self.lineno, col)

    def error(self, message):
        return ModelSyntaxError(message, self.lineno, self.peek()[2])

    def done(self):
        return self.pos >= len(self.items)


def _parse_expr(toks: _Tokens, names: dict[str, int], n: int, stop: set[str]) -> Polynomial:
    result = Polynomial(n)
    sign = 1.0
    kind, val, col = toks.peek()
    if val in ("+", "-"):
        toks.next()
        sign = -1.0 if val == "-" else 1.0
    while True:
        result = result + sign * _parse_term(toks, names, n)
        kind, val, col = toks.peek()
        if val in ("+", "-"):
            toks.next()
            sign = -1.0 if val == "-" else 1.0
            continue
        if val is None or val in stop:
            return result
        raise toks.error(f"unexpected {val!r} in expression")


def _parse_term(toks: _Tokens, names: dict[str, int], n: int) -> Polynomial:
    term = _parse_factor(toks, names, n)
    while toks.peek()[1] == "*":
        toks.next()
        term = term * _parse_factor(toks, names, n)
    return term


def _parse_factor(toks: _Tokens, names: dict[str, int], n: int) -> Polynomial:
    kind, val, col = toks.next()
    if kind == "num":
        return Polynomial.constant(n, float(val))
    if kind != "name":
        found = "end of line" if val is None else repr(val)
        raise ModelSyntaxError(f"expected a number or species name, found {found}", toks.lineno, col)
    if val not in names:
        raise ModelSyntaxError(f"unknown species {val!r}", toks.lineno, col)
    power = 1
    if toks.peek()[1] == "^":
        toks.next()
        kind, exp, ecol = toks.next()
        if kind != "num" or not exp.isdigit() or int(exp) < 1:
            raise ModelSyntaxError("exponent must be a positive integer", toks.lineno, ecol)
        power = int(exp)
    exps = [0] * n
    exps[names[val]] = power
    return Polynomial(n, {tuple(exps): 1.0})


def _parse_int_vector(toks: _Tokens, n: int) -> tuple[int, ...]:
    toks.expect("(")
    values = []
    while True:
        kind, val, col = toks.next()
        sign = 1
        if val in ("+", "-"):
            sign = -1 if val == "-" else 1
            kind, val, col = toks.next()
        if kind != "num" or not val.isdigit():
            raise ModelSyntaxError("expected an integer", toks.lineno, col)
        values.append(sign * int(val))
        kind, val, col = toks.next()
        if val == ")":
            break
        if val != ",":
            raise ModelSyntaxError("expected ',' or ')'", toks.lineno, col)
    if len(values) != n:
        raise ModelSyntaxError(f"vector has {len(values)} entries, expected {n}", toks.lineno, col)
    if not toks.done():
        raise toks.error("trailing input after vector")
    return tuple(values)


def parse_model(text: str) -> Model:
    """Parse model-file text into a validated :class:`Model`.

    Raises
    ------
    ModelSyntaxError
        Malformed text; the message carries line and column.
    ModelError
        Well-formed text describing an invalid model (duplicate or zero
        change vector, invariant violated by init or not preserved).
    """
    species = None
    names: dict[str, int] = {}
    classes = []
    invariants = []
    init = None
    lyapunov = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        m = re.match(r"\s*(species|class|invariant|init|lyapunov)\b", line)
        if not m:
            col = len(line) - len(line.lstrip()) + 1
            raise ModelSyntaxError("expected one of species/class/invariant/init/lyapunov", lineno, col)
        keyword = m.group(1)
        if keyword != "species" and species is None:
            raise ModelSyntaxError("'species:' must come first", lineno, m.start(1) + 1)
        rest_start = m.end()
        toks = _Tokens(line[rest_start:], lineno, rest_start)
        n = len(species) if species is not None else 0

        if keyword == "species":
            if species is not None:
                raise ModelSyntaxError("duplicate 'species:' line", lineno, m.start(1) + 1)
            toks.expect(":")
            species = []
            while not toks.done():
                kind, val, col = toks.next()
                if kind != "name":
                    raise ModelSyntaxError("expected a species name", lineno, col)
                species.append(val)
            if not species:
                raise ModelSyntaxError("no species declared", lineno, toks.end_col)
            if len(set(species)) != len(species):
                raise ModelSyntaxError("duplicate species name", lineno, m.start(1) + 1)
            names = {f"x{i + 1}": i for i in range(len(species))}
            names.update({s: i for i, s in enumerate(species)})
        elif keyword == "class":
            kind, name, col = toks.next()
            if kind != "name":
                raise ModelSyntaxError("expected a class name", lineno, col)
            toks.expect(":")
            kind, val, col = toks.next()
            if val != "rate":
                raise ModelSyntaxError("expected 'rate'", lineno, col)
            toks.expect("=")
            rate = _parse_expr(toks, names, n, stop={";"})
            toks.expect(";")
            kind, val, col = toks.next()
            if val != "change":
                raise ModelSyntaxError("expected 'change'", lineno, col)
            toks.expect("=")
            change = _parse_int_vector(toks, n)
            if not any(change):
                raise ModelError(f"line {lineno}: class {name!r} has an all-zero change vector")
            classes.append(TransitionClass(name, rate, change))
        elif keyword == "invariant":
            toks.expect(":")
            lhs = _parse_expr(toks, names, n, stop={"="})
            toks.expect("=")
            sign = 1
            if toks.peek()[1] in ("+", "-"):
                sign = -1 if toks.next()[1] == "-" else 1
            kind, val, col = toks.next()
            if kind != "num" or not val.isdigit():
                raise ModelSyntaxError("invariant right-hand side must be an integer", lineno, col)
            if not toks.done():
                raise toks.error("trailing input after invariant")
            if lhs.degree > 1:
                raise ModelSyntaxError("invariant must be linear", lineno, toks.end_col)
            coeffs = [0] * n
            rhs = sign * int(val)
            for exps, coef in lhs.terms.items():
                if coef != int(coef):
                    raise ModelSyntaxError("invariant coefficients must be integers", lineno, toks.end_col)
                if sum(exps) == 0:
                    rhs -= int(coef)
                else:
                    coeffs[exps.index(1)] = int(coef)
            invariants.append(Invariant(tuple(coeffs), rhs))
        elif keyword == "init":
            if init is not None:
                raise ModelSyntaxError("duplicate 'init:' line", lineno, m.start(1) + 1)
            toks.expect(":")
            init = _parse_int_vector(toks, n)
        else:
            toks.expect(":")
            lyapunov = _parse_expr(toks, names, n, stop=set())
    if species is None:
        raise ModelSyntaxError("missing 'species:' line")
    if init is None:
        raise ModelSyntaxError("missing 'init:' line")
    return Model(tuple(species), tuple(classes), tuple(invariants), init, lyapunov)


def load_model(path: str | Path) -> Model:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def bundled_model_path(name: str) -> Path:
    """Path of a model shipped with the package, e.g. ``"exclusive_switch"``."""
    path = Path(__file__).parent / "models" / f"{name}.mpm"
    if not path.exists():
        raise FileNotFoundError(f"no bundled model named {name!r}")
    return path
