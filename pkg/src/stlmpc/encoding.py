"""Big-M compilation of NNF formulas into mixed-integer constraint blocks.

Every subformula instantiated at an absolute time instant gets a binary
satisfaction variable.  State rows have the shape

    g . x(i)  +  M * sum_s f_s . s  >=  offset  (+ rho(i) when slackened)

and boolean rows constrain the binaries alone.  A block only encodes the
implication "binary true => subformula holds with margin rho(i)"; the root
binary is pinned to 1, which is what makes the block a constraint.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .stl import (
    Always,
    And,
    Formula,
    NegPred,
    Or,
    Pred,
    Predicate,
    StlError,
    Top,
    Until,
    active_horizon,
    is_nnf,
)


class EncodingError(Exception):
    pass


@dataclass
class StateRow:
    """g . x(time) + M * (fcoef . s) >= offset [+ rho(time)]."""

    time: int
    g: np.ndarray
    fcoef: Dict[int, float]
    offset: float
    use_slack: bool


@dataclass
class BoolRow:
    """coeffs . s >= rhs."""

    coeffs: Dict[int, float]
    rhs: float


@dataclass
class EncodedSpec:
    k: int
    horizon: frozenset
    state_rows: List[StateRow]
    bool_rows: List[BoolRow]
    n_binaries: int
    root: int
    bigM: float
    eps: float
    # (binary, absolute time) of each until-disjunct; used by the scheduler
    # to break ties toward earlier satisfaction
    until_choices: List[Tuple[int, int]] = field(default_factory=list)


def encode_atom(
    pred: Predicate,
    i: int,
    s_idx: int,
    M: float,
    eps: float,
    use_slack: bool = True,
    emit_reverse: bool = True,
    negated: bool = False,
) -> List[StateRow]:
    """Rows tying binary ``s_idx`` to satisfaction of an atom at time ``i``.

    s=1 forces satisfaction with margin rho(i) (or eps when use_slack is
    off); with the reverse rows, s=0 forces componentwise violation by eps.
    The reverse direction is only exact for single-row atoms: forcing every
    row of a box negative is usually impossible, so callers encoding q>1
    atoms inside larger formulas disable it.
    """
    if M <= 0:
        raise EncodingError("M must be positive")
    G, b = (-pred.G, -pred.b) if negated else (pred.G, pred.b)
    rows: List[StateRow] = []
    for j in range(G.shape[0]):
        if use_slack:
            rows.append(StateRow(i, G[j].copy(), {s_idx: -1.0}, b[j] - M, True))
        else:
            rows.append(StateRow(i, G[j].copy(), {s_idx: -1.0}, b[j] - M + eps, False))
    if emit_reverse:
        for j in range(G.shape[0]):
            rows.append(StateRow(i, -G[j].copy(), {s_idx: 1.0}, -b[j] + eps, False))
    return rows


class _Encoder:
    def __init__(self, M: float, eps: float):
        self.M = M
        self.eps = eps
        self.state_rows: List[StateRow] = []
        self.bool_rows: List[BoolRow] = []
        self.n_binaries = 0
        self.memo: Dict[Tuple[Formula, int], int] = {}
        self.top_binary: Optional[int] = None
        self.until_choices: List[Tuple[int, int]] = []

    def new_binary(self) -> int:
        self.n_binaries += 1
        return self.n_binaries - 1

    def visit(self, f: Formula, t: int) -> int:
        key = (f, t)
        if key in self.memo:
            return self.memo[key]
        s = self._emit(f, t)
        self.memo[key] = s
        return s

    def _emit(self, f: Formula, t: int) -> int:
        if isinstance(f, Top):
            if self.top_binary is None:
                self.top_binary = self.new_binary()
                self.bool_rows.append(BoolRow({self.top_binary: 1.0}, 1.0))
            return self.top_binary
        if isinstance(f, NegPred) and f.pred.q > 1:
            # a negated multi-row atom means "at least one row violated";
            # desugar into the disjunction of single-row negations, exactly
            # as NNF conversion does for formulas that went through it
            parts: Formula = NegPred(f.pred.row(0))
            for j in range(1, f.pred.q):
                parts = Or(parts, NegPred(f.pred.row(j)))
            return self.visit(parts, t)
        if isinstance(f, (Pred, NegPred)):
            # forward implication only: s=1 forces satisfaction with margin.
            # Reverse rows (s=0 forces violation) would carve an unreachable
            # band of width rho around every predicate boundary and are not
            # needed for enforcement, since the root binary is pinned to 1
            # and every boolean row propagates demand downward.
            s = self.new_binary()
            negated = isinstance(f, NegPred)
            self.state_rows.extend(
                encode_atom(
                    f.pred,
                    t,
                    s,
                    self.M,
                    self.eps,
                    use_slack=True,
                    emit_reverse=False,
                    negated=negated,
                )
            )
            return s
        if isinstance(f, And):
            s = self.new_binary()
            for child in (f.left, f.right):
                zc = self.visit(child, t)
                self.bool_rows.append(BoolRow({zc: 1.0, s: -1.0}, 0.0))
            return s
        if isinstance(f, Or):
            s = self.new_binary()
            coeffs = {s: -1.0}
            for child in (f.left, f.right):
                zc = self.visit(child, t)
                coeffs[zc] = coeffs.get(zc, 0.0) + 1.0
            self.bool_rows.append(BoolRow(coeffs, 0.0))
            return s
        if isinstance(f, Always):
            s = self.new_binary()
            for i in range(t + f.a, t + f.b + 1):
                zc = self.visit(f.child, i)
                self.bool_rows.append(BoolRow({zc: 1.0, s: -1.0}, 0.0))
            return s
        if isinstance(f, Until):
            s = self.new_binary()
            coeffs = {s: -1.0}
            for k1 in range(t + f.a, t + f.b + 1):
                conj = self.new_binary()
                self.until_choices.append((conj, k1))
                z2 = self.visit(f.right, k1)
                self.bool_rows.append(BoolRow({z2: 1.0, conj: -1.0}, 0.0))
                for k2 in range(t, k1 + 1):
                    z1 = self.visit(f.left, k2)
                    self.bool_rows.append(BoolRow({z1: 1.0, conj: -1.0}, 0.0))
                coeffs[conj] = coeffs.get(conj, 0.0) + 1.0
            self.bool_rows.append(BoolRow(coeffs, 0.0))
            return s
        raise EncodingError(f"cannot encode node {type(f).__name__}")


def encode(
    f: Formula,
    k: int,
    M: float = 1e4,
    eps: float = 1e-3,
    plan_horizon: Optional[int] = None,
) -> EncodedSpec:
    """Compile an NNF formula assigned at time ``k`` into a constraint block."""
    if not is_nnf(f):
        raise EncodingError("formula must be in negation normal form")
    horizon = active_horizon(f, k)
    if plan_horizon is not None and horizon and max(horizon) > plan_horizon:
        raise EncodingError(
            f"active horizon reaches {max(horizon)} beyond plan horizon {plan_horizon}"
        )
    enc = _Encoder(M, eps)
    root = enc.visit(f, k)
    enc.bool_rows.append(BoolRow({root: 1.0}, 1.0))
    return EncodedSpec(
        k=k,
        horizon=horizon,
        state_rows=enc.state_rows,
        bool_rows=enc.bool_rows,
        n_binaries=enc.n_binaries,
        root=root,
        bigM=M,
        eps=eps,
        until_choices=enc.until_choices,
    )


@dataclass
class JointEncoding:
    """Conjunction of encoded blocks with disjoint binary index ranges.

    Slack variables rho(j) are shared: every slackened row at time j, in any
    block, refers to the same rho(j).
    """

    specs: List[EncodedSpec]
    offsets: List[int]
    n_binaries: int
    N: int

    def blocks(self):
        return zip(self.specs, self.offsets)


def conjoin(specs: Sequence[EncodedSpec], N: int) -> JointEncoding:
    offsets: List[int] = []
    total = 0
    for spec in specs:
        if spec.horizon and max(spec.horizon) > N:
            raise EncodingError(
                f"spec assigned at {spec.k} needs horizon {max(spec.horizon)} > N={N}"
            )
        offsets.append(total)
        total += spec.n_binaries
    return JointEncoding(list(specs), offsets, total, N)


REJECT_KEY = -1  # placeholder index for the rejection binary in relaxed rows


def relax_for_rejection(spec: EncodedSpec, c_idx: int, M: float) -> EncodedSpec:
    """Rows of a newly assigned block, disabled entirely when c=1.

    State rows gain +M c on the left and boolean rows gain +M c, so with c=1
    every binary of the block may drop to 0 and no row of the block
    constrains anything.  The coefficient is kept at a single M (not M^2) to
    limit the damage a near-integral fractional c can do numerically.
    """
    state_rows = []
    for row in spec.state_rows:
        fcoef = dict(row.fcoef)
        fcoef[c_idx] = fcoef.get(c_idx, 0.0) + 1.0  # assembled as M * c
        state_rows.append(replace(row, fcoef=fcoef))
    bool_rows = []
    for row in spec.bool_rows:
        coeffs = dict(row.coeffs)
        coeffs[c_idx] = coeffs.get(c_idx, 0.0) + M
        bool_rows.append(BoolRow(coeffs, row.rhs))
    return replace(spec, state_rows=state_rows, bool_rows=bool_rows)
