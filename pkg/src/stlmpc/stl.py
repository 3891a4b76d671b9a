"""STL formulas over finite discrete-time trajectories.

Predicates are normalized polyhedra ``G x >= b`` (unit-norm rows).  Formulas
are immutable ASTs kept in negation normal form; general negation is only a
front-end convenience that :func:`to_nnf` removes.  Temporal intervals are
relative to the evaluation instant and count unitless time steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Sequence, Union

import numpy as np

ROW_NORM_TOL = 1e-9


class StlError(Exception):
    pass


class StlSyntaxError(StlError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


@dataclass(frozen=True, eq=False)
class Predicate:
    """Polyhedral atom ``G x >= b`` with unit-norm rows."""

    G: np.ndarray
    b: np.ndarray
    name: Optional[str] = None

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if G.ndim != 2 or G.shape[0] < 1:
            raise StlError("predicate needs at least one row")
        if b.shape != (G.shape[0],):
            raise StlError(
                f"predicate '{self.name}': G is {G.shape} but b has shape {b.shape}"
            )
        norms = np.linalg.norm(G, axis=1)
        if np.any(np.abs(norms - 1.0) > ROW_NORM_TOL):
            raise StlError(
                f"predicate '{self.name}': rows must have unit norm "
                f"(norms={norms.tolist()})"
            )
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "b", b)

    @classmethod
    def normalized(cls, G, b, name=None) -> "Predicate":
        """Build a predicate, rescaling each row of ``G x >= b`` to unit norm."""
        G = np.atleast_2d(np.asarray(G, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        norms = np.linalg.norm(G, axis=1)
        if np.any(norms <= 0):
            raise StlError(f"predicate '{name}': zero row in G")
        return cls(G / norms[:, None], b / norms, name=name)

    @property
    def q(self) -> int:
        return self.G.shape[0]

    @property
    def n(self) -> int:
        return self.G.shape[1]

    def h(self, x: np.ndarray) -> np.ndarray:
        return self.G @ np.asarray(x, dtype=float) - self.b

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(self.h(x) >= 0.0))

    def row(self, j: int) -> "Predicate":
        label = None if self.name is None else f"{self.name}[{j}]"
        return Predicate(self.G[j : j + 1], self.b[j : j + 1], name=label)

    def __repr__(self):
        return f"Predicate(name={self.name!r}, q={self.q}, n={self.n})"


class Formula:
    """Base class for STL AST nodes.  Instances are immutable and hashable."""

    __slots__ = ()


@dataclass(frozen=True)
class Top(Formula):
    pass


@dataclass(frozen=True)
class Pred(Formula):
    pred: Predicate


@dataclass(frozen=True)
class NegPred(Formula):
    pred: Predicate


@dataclass(frozen=True)
class Not(Formula):
    """General negation; removed by :func:`to_nnf`."""

    child: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Always(Formula):
    a: int
    b: int
    child: Formula

    def __post_init__(self):
        _check_interval(self.a, self.b)


@dataclass(frozen=True)
class Until(Formula):
    a: int
    b: int
    left: Formula
    right: Formula

    def __post_init__(self):
        _check_interval(self.a, self.b)


def _check_interval(a: int, b: int):
    if a < 0 or b < 0 or a > b:
        raise StlError(f"bad temporal interval [{a},{b}]")


def eventually(a: int, b: int, child: Formula) -> Until:
    """Derived operator: eventually within [a,b] is ``true U[a,b] child``."""
    return Until(a, b, Top(), child)


def conjunction(children: Sequence[Formula]) -> Formula:
    out = children[0]
    for c in children[1:]:
        out = And(out, c)
    return out


def disjunction(children: Sequence[Formula]) -> Formula:
    out = children[0]
    for c in children[1:]:
        out = Or(out, c)
    return out


# ---------------------------------------------------------------------------
# negation normal form


def to_nnf(f: Formula) -> Formula:
    """Push negations down to predicates.

    A negated multi-row predicate becomes a disjunction of single-row negated
    predicates: violating ``G x >= b`` means violating at least one row.
    """
    if isinstance(f, (Top, Pred, NegPred)):
        return f
    if isinstance(f, And):
        return And(to_nnf(f.left), to_nnf(f.right))
    if isinstance(f, Or):
        return Or(to_nnf(f.left), to_nnf(f.right))
    if isinstance(f, Always):
        return Always(f.a, f.b, to_nnf(f.child))
    if isinstance(f, Until):
        return Until(f.a, f.b, to_nnf(f.left), to_nnf(f.right))
    if isinstance(f, Not):
        return _negate(f.child)
    raise StlError(f"unknown node {type(f).__name__}")


def _negate(f: Formula) -> Formula:
    if isinstance(f, Not):
        return to_nnf(f.child)
    if isinstance(f, Pred):
        if f.pred.q == 1:
            return NegPred(f.pred)
        return disjunction([NegPred(f.pred.row(j)) for j in range(f.pred.q)])
    if isinstance(f, NegPred):
        return Pred(f.pred)
    if isinstance(f, And):
        return Or(_negate(f.left), _negate(f.right))
    if isinstance(f, Or):
        return And(_negate(f.left), _negate(f.right))
    if isinstance(f, Always):
        return eventually(f.a, f.b, _negate(f.child))
    if isinstance(f, Until):
        if isinstance(f.left, Top):
            return Always(f.a, f.b, _negate(f.right))
        raise StlError("negation of a general until lies outside the fragment")
    if isinstance(f, Top):
        raise StlError("negation of 'true' lies outside the fragment")
    raise StlError(f"unknown node {type(f).__name__}")


def is_nnf(f: Formula) -> bool:
    if isinstance(f, Not):
        return False
    if isinstance(f, (Top, Pred, NegPred)):
        return True
    if isinstance(f, (And, Or)):
        return is_nnf(f.left) and is_nnf(f.right)
    if isinstance(f, Always):
        return is_nnf(f.child)
    if isinstance(f, Until):
        return is_nnf(f.left) and is_nnf(f.right)
    return False


# ---------------------------------------------------------------------------
# active horizon


def active_horizon(f: Formula, k: int) -> frozenset:
    """Set of absolute instants that determine satisfaction at time ``k``."""
    if isinstance(f, Top):
        return frozenset()
    if isinstance(f, (Pred, NegPred)):
        return frozenset({k})
    if isinstance(f, (And, Or)):
        return active_horizon(f.left, k) | active_horizon(f.right, k)
    if isinstance(f, Always):
        out = frozenset()
        for i in range(k + f.a, k + f.b + 1):
            out |= active_horizon(f.child, i)
        return out
    if isinstance(f, Until):
        out = frozenset()
        for i in range(k, k + f.b + 1):
            out |= active_horizon(f.left, i)
        for j in range(k + f.a, k + f.b + 1):
            out |= active_horizon(f.right, j)
        return out
    raise StlError(f"active horizon undefined for {type(f).__name__}")


def formula_length(f: Formula, k: int = 0) -> int:
    h = active_horizon(f, k)
    return (max(h) - k) if h else 0


# ---------------------------------------------------------------------------
# monitoring


def monitor(f: Formula, traj: Union[np.ndarray, Sequence], k: int) -> bool:
    """Boolean satisfaction of ``f`` on a trajectory indexed by absolute time."""
    traj = np.atleast_2d(np.asarray(traj, dtype=float))
    h = active_horizon(f, k)
    if h and max(h) >= traj.shape[0]:
        raise StlError(
            f"trajectory of length {traj.shape[0]} too short; "
            f"active horizon reaches {max(h)}"
        )
    return _monitor(f, traj, k)


def _monitor(f: Formula, traj: np.ndarray, k: int) -> bool:
    if isinstance(f, Top):
        return True
    if isinstance(f, Pred):
        return bool(np.all(f.pred.h(traj[k]) >= 0.0))
    if isinstance(f, NegPred):
        return bool(np.any(f.pred.h(traj[k]) < 0.0))
    if isinstance(f, Not):
        return not _monitor(f.child, traj, k)
    if isinstance(f, And):
        return _monitor(f.left, traj, k) and _monitor(f.right, traj, k)
    if isinstance(f, Or):
        return _monitor(f.left, traj, k) or _monitor(f.right, traj, k)
    if isinstance(f, Always):
        return all(_monitor(f.child, traj, i) for i in range(k + f.a, k + f.b + 1))
    if isinstance(f, Until):
        for k1 in range(k + f.a, k + f.b + 1):
            if _monitor(f.right, traj, k1) and all(
                _monitor(f.left, traj, k2) for k2 in range(k, k1 + 1)
            ):
                return True
        return False
    raise StlError(f"cannot monitor {type(f).__name__}")


# ---------------------------------------------------------------------------
# surface syntax
#
# formula := or
# or      := and ('|' and)*
# and     := until ('&' until)*
# until   := unary ('U[' nat ',' nat ']' unary)*      (left associative)
# unary   := '!' unary | 'G[a,b]' unary | 'F[a,b]' unary | atom
# atom    := 'true' | 'in(' ident ')' | '(' formula ')'


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> Iterator[_Tok]:
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "!&|(),[]":
            yield _Tok(c, c, i)
            i += 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            yield _Tok("ident", text[i:j], i)
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            yield _Tok("nat", text[i:j], i)
            i = j
            continue
        raise StlSyntaxError(f"unexpected character {c!r}", i)
    yield _Tok("eof", "", n)


class _Parser:
    def __init__(self, text: str, predicates: Mapping[str, Predicate]):
        self.toks = list(_tokenize(text))
        self.pos = 0
        self.predicates = predicates

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, kind: str) -> _Tok:
        t = self.next()
        if t.kind != kind:
            raise StlSyntaxError(f"expected {kind!r}, found {t.text!r}", t.pos)
        return t

    def parse(self) -> Formula:
        f = self.parse_or()
        t = self.peek()
        if t.kind != "eof":
            raise StlSyntaxError(f"unexpected trailing input {t.text!r}", t.pos)
        return f

    def parse_or(self) -> Formula:
        f = self.parse_and()
        while self.peek().kind == "|":
            self.next()
            f = Or(f, self.parse_and())
        return f

    def parse_and(self) -> Formula:
        f = self.parse_until()
        while self.peek().kind == "&":
            self.next()
            f = And(f, self.parse_until())
        return f

    def parse_until(self) -> Formula:
        f = self.parse_unary()
        while self.peek().kind == "ident" and self.peek().text == "U":
            self.next()
            a, b = self.parse_interval()
            f = Until(a, b, f, self.parse_unary())
        return f

    def parse_interval(self) -> tuple:
        tok = self.expect("[")
        a = int(self.expect("nat").text)
        self.expect(",")
        b = int(self.expect("nat").text)
        self.expect("]")
        if a > b:
            raise StlSyntaxError(f"interval [{a},{b}] has a > b", tok.pos)
        return a, b

    def parse_unary(self) -> Formula:
        t = self.peek()
        if t.kind == "!":
            self.next()
            return Not(self.parse_unary())
        if t.kind == "ident" and t.text == "G":
            self.next()
            a, b = self.parse_interval()
            return Always(a, b, self.parse_unary())
        if t.kind == "ident" and t.text == "F":
            self.next()
            a, b = self.parse_interval()
            return eventually(a, b, self.parse_unary())
        return self.parse_atom()

    def parse_atom(self) -> Formula:
        t = self.next()
        if t.kind == "(":
            f = self.parse_or()
            self.expect(")")
            return f
        if t.kind == "ident" and t.text == "true":
            return Top()
        if t.kind == "ident" and t.text == "in":
            self.expect("(")
            name = self.expect("ident").text
            self.expect(")")
            if name not in self.predicates:
                raise StlSyntaxError(f"unknown predicate {name!r}", t.pos)
            return Pred(self.predicates[name])
        raise StlSyntaxError(f"unexpected token {t.text!r}", t.pos)


def parse(text: str, predicates: Mapping[str, Predicate]) -> Formula:
    """Parse STL source text and convert to negation normal form."""
    return to_nnf(_Parser(text, predicates).parse())


# ---------------------------------------------------------------------------
# printing


def _pred_ref(p: Predicate) -> str:
    if p.name is None:
        raise StlError("cannot print an unnamed predicate")
    return f"in({p.name})"


def print_formula(f: Formula) -> str:
    """Render a formula so that ``parse(print_formula(f))`` rebuilds it."""
    return _print(f)


def _print(f: Formula) -> str:
    if isinstance(f, Top):
        return "true"
    if isinstance(f, Pred):
        return _pred_ref(f.pred)
    if isinstance(f, NegPred):
        return "!" + _pred_ref(f.pred)
    if isinstance(f, Not):
        return "!" + _paren_unary(f.child)
    if isinstance(f, And):
        left = f"({_print(f.left)})" if isinstance(f.left, Or) else _print(f.left)
        right = (
            f"({_print(f.right)})"
            if isinstance(f.right, (And, Or))
            else _print(f.right)
        )
        return f"{left} & {right}"
    if isinstance(f, Or):
        left = _print(f.left)
        right = f"({_print(f.right)})" if isinstance(f.right, Or) else _print(f.right)
        return f"{left} | {right}"
    if isinstance(f, Always):
        return f"G[{f.a},{f.b}] {_paren_unary(f.child)}"
    if isinstance(f, Until):
        if isinstance(f.left, Top):
            return f"F[{f.a},{f.b}] {_paren_unary(f.right)}"
        left = _print(f.left) if isinstance(f.left, Until) else _paren_unary(f.left)
        return f"{left} U[{f.a},{f.b}] {_paren_unary(f.right)}"
    raise StlError(f"cannot print {type(f).__name__}")


def _paren_unary(f: Formula) -> str:
    if isinstance(f, (And, Or)):
        return f"({_print(f)})"
    if isinstance(f, Until) and not isinstance(f.left, Top):
        return f"({_print(f)})"
    return _print(f)
