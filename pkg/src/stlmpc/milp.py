"""Solver-agnostic mixed-integer linear programs.

Ships a dense revised simplex with bounded variables and a deterministic
best-first branch-and-bound on top of it, plus an LP text
format for driving external solvers.  The built-in solver is the reference
implementation at desk scale; adapters (in-process or subprocess) can take
over larger models behind the same interface.
"""

from __future__ import annotations

import heapq
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

INF = float("inf")
ROW_TOL = 1e-7
INT_TOL = 1e-6


class MilpError(Exception):
    pass


class AdapterError(MilpError):
    """An external adapter failed; never silently falls back."""


@dataclass
class Variable:
    name: str
    lb: float = -INF
    ub: float = INF
    integrality: str = "continuous"  # or "binary"

    def __post_init__(self):
        if self.integrality not in ("continuous", "binary"):
            raise MilpError(f"bad integrality {self.integrality!r}")
        if self.integrality == "binary":
            if self.lb < 0 or self.ub > 1:
                raise MilpError(f"binary {self.name} must have bounds within [0,1]")
        if self.lb > self.ub:
            raise MilpError(f"variable {self.name} has lb > ub")


@dataclass
class Row:
    coeffs: Dict[int, float]
    sense: str  # ">=", "<=", "="
    rhs: float
    name: Optional[str] = None

    def __post_init__(self):
        if self.sense not in (">=", "<=", "="):
            raise MilpError(f"bad row sense {self.sense!r}")
        for j, c in self.coeffs.items():
            if not np.isfinite(c):
                raise MilpError(f"non-finite coefficient in row {self.name}")
        if not np.isfinite(self.rhs):
            raise MilpError(f"non-finite rhs in row {self.name}")


class MilpModel:
    """Minimization MILP: variables, linear rows, linear objective."""

    def __init__(self):
        self.variables: List[Variable] = []
        self.rows: List[Row] = []
        self.objective: Dict[int, float] = {}

    def add_var(
        self,
        name: str,
        lb: float = -INF,
        ub: float = INF,
        integrality: str = "continuous",
    ) -> int:
        self.variables.append(Variable(name, lb, ub, integrality))
        return len(self.variables) - 1

    def add_binary(self, name: str) -> int:
        return self.add_var(name, 0.0, 1.0, "binary")

    def add_row(self, coeffs: Dict[int, float], sense: str, rhs: float, name=None):
        nv = len(self.variables)
        for j in coeffs:
            if not 0 <= j < nv:
                raise MilpError(f"row {name}: variable index {j} out of range")
        self.rows.append(Row(dict(coeffs), sense, float(rhs), name))

    def set_objective(self, coeffs: Dict[int, float]):
        self.objective = dict(coeffs)

    @property
    def binaries(self) -> List[int]:
        return [j for j, v in enumerate(self.variables) if v.integrality == "binary"]

    def objective_value(self, x: np.ndarray) -> float:
        return float(sum(c * x[j] for j, c in self.objective.items()))

    def structurally_equal(self, other: "MilpModel") -> bool:
        if len(self.variables) != len(other.variables):
            return False
        for a, b in zip(self.variables, other.variables):
            if (a.name, a.integrality) != (b.name, b.integrality):
                return False
            if not (_bnd_eq(a.lb, b.lb) and _bnd_eq(a.ub, b.ub)):
                return False
        if len(self.rows) != len(other.rows):
            return False
        for ra, rb in zip(self.rows, other.rows):
            if ra.sense != rb.sense or abs(ra.rhs - rb.rhs) > 1e-12:
                return False
            ca = {j: c for j, c in ra.coeffs.items() if c != 0.0}
            cb = {j: c for j, c in rb.coeffs.items() if c != 0.0}
            if set(ca) != set(cb):
                return False
            if any(abs(ca[j] - cb[j]) > 1e-12 for j in ca):
                return False
        oa = {j: c for j, c in self.objective.items() if c != 0.0}
        ob = {j: c for j, c in other.objective.items() if c != 0.0}
        return set(oa) == set(ob) and all(abs(oa[j] - ob[j]) < 1e-12 for j in oa)


def _bnd_eq(a: float, b: float) -> bool:
    if np.isinf(a) or np.isinf(b):
        return a == b
    return abs(a - b) <= 1e-12


@dataclass
class MilpSolution:
    status: str  # "optimal", "infeasible", "node_limit", "unbounded"
    values: Optional[np.ndarray]
    objective: Optional[float]
    nodes: int = 0
    gap: float = 0.0


def check_solution(
    model: MilpModel,
    x: np.ndarray,
    row_tol: float = ROW_TOL,
    int_tol: float = INT_TOL,
) -> List[str]:
    """Independent feasibility certification; returns violation messages."""
    x = np.asarray(x, dtype=float)
    bad: List[str] = []
    for j, v in enumerate(model.variables):
        if x[j] < v.lb - row_tol or x[j] > v.ub + row_tol:
            bad.append(f"bounds of {v.name}: {x[j]} not in [{v.lb}, {v.ub}]")
        if v.integrality == "binary" and abs(x[j] - round(x[j])) > int_tol:
            bad.append(f"binary {v.name} fractional: {x[j]}")
    for idx, row in enumerate(model.rows):
        act = sum(c * x[j] for j, c in row.coeffs.items())
        label = row.name or f"row{idx}"
        if row.sense == ">=" and act < row.rhs - row_tol:
            bad.append(f"{label}: {act} < {row.rhs}")
        elif row.sense == "<=" and act > row.rhs + row_tol:
            bad.append(f"{label}: {act} > {row.rhs}")
        elif row.sense == "=" and abs(act - row.rhs) > row_tol:
            bad.append(f"{label}: {act} != {row.rhs}")
    return bad


# ---------------------------------------------------------------------------
# dense revised simplex with bounded variables


@dataclass
class LpSolution:
    status: str  # "optimal", "infeasible", "unbounded"
    values: Optional[np.ndarray]
    objective: Optional[float]
    basis: Optional["LpBasis"] = None
    reduced: Optional[np.ndarray] = None  # structural reduced costs at optimality


@dataclass
class LpBasis:
    """Warm-start handle: basic column indices plus nonbasic bound sides."""

    basic: np.ndarray  # (m,) column indices into [structurals | active slacks]
    at_upper: np.ndarray  # (n + m,) bool, side for nonbasic bounded columns
    active: Optional[np.ndarray] = None  # model row indices behind the slacks


_ITER_CAP = 40000
_STALL_BEFORE_BLAND = 150
_RC_TOL = 1e-7  # reduced-cost optimality tolerance
_FEAS_TOL = 1e-8  # bound violation tolerance on basic variables
_PIV_TOL = 1e-9  # smallest acceptable ratio-test denominator
_REFRESH_EVERY = 400  # rebuild B^-1 and the iterate this often


def _nonbasic_values(l: np.ndarray, u: np.ndarray, at_upper: np.ndarray) -> np.ndarray:
    """Value of every column when treated as nonbasic: its bound, or 0 if free."""
    vals = np.where(at_upper & np.isfinite(u), u, np.where(np.isfinite(l), l, 0.0))
    # a side flag pointing at an infinite bound falls back to the finite one
    bad = at_upper & ~np.isfinite(u)
    vals = np.where(bad & np.isfinite(l), l, vals)
    return np.where(np.isfinite(vals), vals, 0.0)


def _bounded_simplex(
    A: np.ndarray,
    b: np.ndarray,
    l: np.ndarray,
    u: np.ndarray,
    c: np.ndarray,
    warm: Optional[LpBasis] = None,
    Binv0: Optional[np.ndarray] = None,
) -> Tuple[
    str,
    Optional[np.ndarray],
    Optional[LpBasis],
    Optional[np.ndarray],
    Optional[np.ndarray],
]:
    """Minimize c.x over {A x = b, l <= x <= u} (A dense, any signs).

    Revised simplex with explicit dense B^-1 and bound flips.  Infeasible
    starts are repaired by composite phase 1: while any basic variable sits
    outside its bounds, pricing uses the infeasibility gradient instead of
    the cost; violated basics block the ratio test at the bound they violate.
    ``Binv0`` is an optional inverse of the warm basis, which skips the
    initial factorization.  On optimality also returns the final B^-1 and
    the reduced-cost vector.
    """
    m, nt = A.shape
    if warm is not None and len(warm.basic) == m:
        basic = np.array(warm.basic, dtype=int)
        at_upper = np.array(warm.at_upper, dtype=bool)
    else:
        basic = np.arange(nt - m, nt)
        # nonbasic structurals start at the finite bound nearer zero
        at_upper = np.isfinite(u) & (~np.isfinite(l) | (np.abs(u) < np.abs(l)))
        Binv0 = None
    in_basis = np.zeros(nt, dtype=bool)
    in_basis[basic] = True

    x = np.zeros(nt)
    Binv: Optional[np.ndarray] = None
    if Binv0 is not None and Binv0.shape == (m, m):
        Binv = Binv0.copy()
        x = _nonbasic_values(l, u, at_upper)
        x[basic] = 0.0
        x[basic] = Binv @ (b - A @ x) if m else np.zeros(0)
    since_refresh = 0
    stall = 0
    bland = False

    for _ in range(_ITER_CAP):
        if Binv is None or since_refresh >= _REFRESH_EVERY:
            try:
                Binv = np.linalg.inv(A[:, basic])
            except np.linalg.LinAlgError:
                raise MilpError("singular basis (internal fault)")
            x = _nonbasic_values(l, u, at_upper)
            x[basic] = 0.0
            x[basic] = Binv @ (b - A @ x) if m else np.zeros(0)
            since_refresh = 0

        xB = x[basic]
        lB, uB = l[basic], u[basic]
        below = xB < lB - _FEAS_TOL
        above = xB > uB + _FEAS_TOL
        phase1 = bool(below.any() or above.any())
        if phase1:
            dB = np.where(below, -1.0, 0.0) + np.where(above, 1.0, 0.0)
            y = dB @ Binv
            z = -(y @ A)
        else:
            y = c[basic] @ Binv
            z = c - y @ A

        nb = ~in_basis
        free = nb & ~np.isfinite(l) & ~np.isfinite(u)
        at_lo = nb & ~free & ~at_upper
        at_hi = nb & ~free & at_upper
        score = np.zeros(nt)
        score[at_lo] = np.maximum(-z[at_lo], 0.0)
        score[at_hi] = np.maximum(z[at_hi], 0.0)
        score[free] = np.abs(z[free])
        cands = np.flatnonzero(score > _RC_TOL)
        if cands.size == 0:
            if phase1:
                viol = np.maximum(lB - xB, 0.0) + np.maximum(xB - uB, 0.0)
                if viol.sum() > 1e-6:
                    return "infeasible", None, None, None, None
                # residual violations are roundoff; fall through as feasible
                x[basic] = np.clip(xB, lB, uB)
                continue
            xv = x.copy()
            xv[~in_basis] = _nonbasic_values(l, u, at_upper)[~in_basis]
            return "optimal", xv, LpBasis(basic.copy(), at_upper.copy()), Binv, z

        if bland or stall >= _STALL_BEFORE_BLAND:
            bland = True  # sticky: Bland's rule guarantees termination
            q = int(cands[0])
        else:
            q = int(cands[np.argmax(score[cands])])
        delta = 1.0 if (at_lo[q] or (free[q] and z[q] < 0.0)) else -1.0

        w = Binv @ A[:, q]
        g = -delta * w  # rate of change of each basic variable
        # ratio test: feasible basics block at the bound they would leave,
        # violated basics block at the bound they are returning to
        pos = g > _PIV_TOL
        neg = g < -_PIV_TOL
        feas = ~below & ~above
        ti = np.full(m, INF)
        mask = below & pos
        np.divide(lB - xB, g, out=ti, where=mask)
        mask = above & neg
        ti[mask] = (uB[mask] - xB[mask]) / g[mask]
        mask = feas & pos & np.isfinite(uB)
        ti[mask] = (uB[mask] - xB[mask]) / g[mask]
        mask = feas & neg & np.isfinite(lB)
        ti[mask] = (lB[mask] - xB[mask]) / g[mask]
        ti = np.maximum(ti, 0.0)
        t_best = float(ti.min()) if m else INF
        r_best = -1
        if np.isfinite(t_best):
            ties = np.flatnonzero(ti <= t_best + 1e-12)
            if bland:
                r_best = int(ties[np.argmin(basic[ties])])
            else:
                r_best = int(ties[np.argmax(np.abs(g[ties]))])
        t_flip = u[q] - l[q] if np.isfinite(u[q]) and np.isfinite(l[q]) else INF
        if t_best == INF and t_flip == INF:
            if phase1:
                raise MilpError("phase-1 ray (internal fault)")
            return "unbounded", None, None, None, None

        if t_flip < t_best:
            # bound flip: the entering variable crosses to its other bound
            x[q] = u[q] if delta > 0 else l[q]
            at_upper[q] = delta > 0
            x[basic] = xB + t_flip * g
            stall = stall + 1 if t_flip <= 1e-12 else 0
            since_refresh += 1
            continue

        r = r_best
        leave = basic[r]
        x[q] = x[q] + delta * t_best
        xB = xB + t_best * g
        hit_upper = (above[r] or (not below[r] and g[r] > 0)) if m else False
        xB[r] = uB[r] if hit_upper else lB[r]
        x[basic] = xB
        basic[r] = q
        in_basis[q] = True
        in_basis[leave] = False
        at_upper[leave] = bool(hit_upper)
        x[leave] = u[leave] if hit_upper else l[leave]
        # product-form update of B^-1
        br = Binv[r] / w[r]
        Binv -= np.outer(w, br)
        Binv[r] = br
        stall = stall + 1 if t_best <= 1e-12 else 0
        since_refresh += 1

    raise MilpError("simplex iteration cap exceeded (internal fault)")


def _row_cache(model: MilpModel) -> dict:
    """Dense, row-equilibrated copy of the constraint system, cached."""
    cache = getattr(model, "_lp_cache", None)
    nv, mr = len(model.variables), len(model.rows)
    if cache is not None and cache["nv"] == nv and cache["m"] == mr:
        return cache
    R = np.zeros((mr, nv))
    b = np.zeros(mr)
    sl = np.zeros(mr)
    su = np.zeros(mr)
    scale = np.ones(mr)
    for i, row in enumerate(model.rows):
        sc = 1.0
        if row.coeffs:
            sc = max(abs(cf) for cf in row.coeffs.values()) or 1.0
        scale[i] = sc
        for j, cf in row.coeffs.items():
            R[i, j] += cf / sc
        b[i] = row.rhs / sc
        if row.sense == "<=":
            sl[i], su[i] = 0.0, INF
        elif row.sense == ">=":
            sl[i], su[i] = -INF, 0.0
        else:
            sl[i], su[i] = 0.0, 0.0
    cache = {"nv": nv, "m": mr, "R": R, "b": b, "sl": sl, "su": su,
             "scale": scale, "eq": [i for i, r in enumerate(model.rows) if r.sense == "="],
             # adding a row when its unscaled violation exceeds the row tolerance
             "viol_tol": (ROW_TOL / 10.0) / scale}
    model._lp_cache = cache
    return cache


def solve_lp(
    model: MilpModel,
    lb: Optional[np.ndarray] = None,
    ub: Optional[np.ndarray] = None,
    warm: Optional[LpBasis] = None,
) -> LpSolution:
    """Solve the LP relaxation (integrality ignored).

    Optional bound arrays override the model bounds and `warm` reuses a basis
    from a previous solve of the same row structure (used by branch and
    bound).  Inequality rows are activated lazily: the simplex runs on the
    equality rows plus whatever inequalities the current iterate violates,
    which keeps the working basis small on big-M models.  Feasibility of a
    returned optimum is certified by the caller via :func:`check_solution`.
    """
    nv = len(model.variables)
    lb = np.array([v.lb for v in model.variables]) if lb is None else np.asarray(lb, float)
    ub = np.array([v.ub for v in model.variables]) if ub is None else np.asarray(ub, float)
    if np.any(lb > ub):
        return LpSolution("infeasible", None, None)

    cache = _row_cache(model)
    R, ball, sl, su = cache["R"], cache["b"], cache["sl"], cache["su"]
    mr = cache["m"]
    c_struct = np.zeros(nv)
    for j, cj in model.objective.items():
        c_struct[j] += cj

    if warm is not None and warm.active is not None:
        active: List[int] = list(warm.active)
        basic = np.array(warm.basic, dtype=int)
        at_upper = np.array(warm.at_upper, dtype=bool)
    else:
        active = list(cache["eq"])
        basic = None
        at_upper = None

    in_active = np.zeros(mr, dtype=bool)
    in_active[active] = True
    Binv_next: Optional[np.ndarray] = None
    for _ in range(mr + 2):
        mA = len(active)
        A = np.zeros((mA, nv + mA))
        A[:, :nv] = R[active]
        A[:, nv:] = np.eye(mA)
        b = ball[active]
        l = np.concatenate([lb, sl[active]])
        u = np.concatenate([ub, su[active]])
        c = np.concatenate([c_struct, np.zeros(mA)])
        wb = None
        if basic is not None and at_upper is not None and len(basic) == mA:
            wb = LpBasis(basic, at_upper)
        try:
            status, xfull, bas, Binv, z = _bounded_simplex(A, b, l, u, c, wb, Binv_next)
        except MilpError:
            if wb is None:
                raise
            # a warm basis inherited from another solve can be numerically
            # singular for this node; restart cold on the same active rows
            status, xfull, bas, Binv, z = _bounded_simplex(A, b, l, u, c, None)
        Binv_next = None
        if status == "infeasible":
            return LpSolution("infeasible", None, None)
        if status == "unbounded":
            if mA == mr:
                return LpSolution("unbounded", None, None)
            # a ray may be cut off by a not-yet-active inequality
            fresh = [i for i in range(mr) if not in_active[i]]
            active += fresh
            in_active[:] = True
            basic = None
            at_upper = None
            continue
        x = xfull[:nv]
        act = R @ x
        tol = cache["viol_tol"]
        # slack of row i would be b_i - a_i x; violated if outside [sl, su]
        lo_bad = act > ball - sl + tol
        hi_bad = act < ball - su - tol
        fresh = [
            i
            for i in range(mr)
            if not in_active[i] and (lo_bad[i] or hi_bad[i])
        ]
        if not fresh:
            x = np.clip(x, lb, ub)
            return LpSolution(
                "optimal",
                x,
                model.objective_value(x),
                LpBasis(bas.basic.copy(), bas.at_upper.copy(), np.array(active)),
                reduced=z[:nv].copy() if z is not None else None,
            )
        basic = np.concatenate([bas.basic, nv + mA + np.arange(len(fresh))])
        at_upper = np.concatenate([bas.at_upper, np.zeros(len(fresh), dtype=bool)])
        if Binv is not None:
            # the fresh rows enter with their slacks basic, so the extended
            # basis is block triangular: inv([[B, 0], [C, I]]) needs no
            # refactorization
            k = len(fresh)
            struct = bas.basic < nv
            C = np.zeros((k, mA))
            C[:, struct] = R[np.ix_(fresh, bas.basic[struct])]
            Binv_next = np.zeros((mA + k, mA + k))
            Binv_next[:mA, :mA] = Binv
            Binv_next[mA:, :mA] = -C @ Binv
            Binv_next[mA:, mA:] = np.eye(k)
        active += fresh
        in_active[fresh] = True

    raise MilpError("row activation failed to converge (internal fault)")


# ---------------------------------------------------------------------------
# rounding repair: complete a fractional relaxation over the binaries only


def _repair_binaries(
    model: MilpModel,
    x: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
    node_cap: int = 4000,
) -> Optional[np.ndarray]:
    """Search for binary values feasible with the continuous part of ``x``.

    With the continuous variables frozen, every row is a pure 0/1 linear
    inequality; unit propagation plus a small DFS usually completes the
    relaxation into a full feasible point, which branch and bound then uses
    as an incumbent.  Returns the binary-completed vector or None.
    """
    binset = set(model.binaries)
    free = [j for j in binset if lb[j] < ub[j] - 1e-12]
    fixed = {j: lb[j] for j in binset if lb[j] >= ub[j] - 1e-12}
    if not free:
        return None
    pos = {j: i for i, j in enumerate(free)}
    nb = len(free)

    # every row as sum(c * s) >= rhs over the free binaries
    ineqs: List[Tuple[List[Tuple[int, float]], float]] = []
    for row in model.rows:
        terms = [(pos[j], cf) for j, cf in row.coeffs.items() if j in pos]
        if not terms:
            continue
        const = sum(
            cf * (fixed[j] if j in fixed else x[j])
            for j, cf in row.coeffs.items()
            if j not in pos
        )
        rhs = row.rhs - const
        if row.sense in (">=", "="):
            hi = sum(max(cf, 0.0) for _, cf in terms)
            if hi < rhs + 1e-9:  # keep only rows a binary choice can affect
                ineqs.append((terms, rhs))
            elif sum(min(cf, 0.0) for _, cf in terms) < rhs - 1e-9:
                ineqs.append((terms, rhs))
        if row.sense in ("<=", "="):
            terms_n = [(i, -cf) for i, cf in terms]
            rhs_n = -rhs
            if sum(min(cf, 0.0) for _, cf in terms_n) < rhs_n - 1e-9:
                ineqs.append((terms_n, rhs_n))

    rows_of: List[List[int]] = [[] for _ in range(nb)]
    for ridx, (terms, _) in enumerate(ineqs):
        for i, _ in terms:
            rows_of[i].append(ridx)

    obj = np.zeros(nb)
    for j, cf in model.objective.items():
        if j in pos:
            obj[pos[j]] = cf

    def preferred(i: int, val: np.ndarray) -> int:
        if obj[i] > 1e-12:
            return 0
        if obj[i] < -1e-12:
            return 1
        return int(round(x[free[i]]))

    budget = [node_cap]

    def propagate(val: np.ndarray, trail: List[int]) -> bool:
        changed = True
        while changed:
            changed = False
            for terms, rhs in ineqs:
                hi = 0.0
                unassigned = []
                for i, cf in terms:
                    v = val[i]
                    if v < 0:
                        hi += max(cf, 0.0)
                        unassigned.append((i, cf))
                    else:
                        hi += cf * v
                if hi < rhs - 1e-6:
                    return False
                for i, cf in unassigned:
                    # forcing: the weaker choice alone breaks the row
                    if hi - abs(cf) < rhs - 1e-6:
                        val[i] = 1 if cf > 0 else 0
                        trail.append(i)
                        changed = True
        return True

    def dfs(val: np.ndarray) -> bool:
        if budget[0] <= 0:
            return False
        budget[0] -= 1
        trail: List[int] = []
        if not propagate(val, trail):
            for i in trail:
                val[i] = -1
            return False
        todo = int(np.argmin(val)) if (val < 0).any() else -1
        if todo < 0:
            return True
        first = preferred(todo, val)
        for v in (first, 1 - first):
            val[todo] = v
            if dfs(val):
                return True
            val[todo] = -1
        for i in trail:
            val[i] = -1
        return False

    val = np.full(nb, -1, dtype=int)
    if not dfs(val):
        return None
    xi = x.copy()
    for i, j in enumerate(free):
        xi[j] = float(val[i])
    for j, v in fixed.items():
        xi[j] = v
    return xi


def _dive(
    model: MilpModel,
    rel: LpSolution,
    lb0: np.ndarray,
    ub0: np.ndarray,
    binaries: List[int],
    max_lps: int = 250,
) -> Optional[np.ndarray]:
    """Depth-first LP dive: fix binaries one at a time, re-solving the LP.

    Penalty-weighted binaries are first pushed to their cheap side; then the
    most nearly integral fractional binary is fixed to its rounded value,
    with the opposite value and a bounded amount of backtracking as
    fallbacks.  Returns a feasible mixed-integer point or ``None``.
    """
    obj = np.zeros(len(model.variables))
    for j, cj in model.objective.items():
        obj[j] += cj
    lb, ub = lb0.copy(), ub0.copy()
    x, basis = rel.values, rel.basis
    lps = 0
    # heavily priced binaries (acceptance/rejection switches) go to their
    # cheap side first so the dive does not wander into penalty solutions
    for j in binaries:
        if abs(obj[j]) > 100.0 and ub[j] - lb[j] > 0.5:
            val = 0.0 if obj[j] > 0 else 1.0
            lb2, ub2 = lb.copy(), ub.copy()
            lb2[j] = ub2[j] = val
            sol = solve_lp(model, lb2, ub2, warm=basis)
            lps += 1
            if sol.status == "optimal":
                lb, ub, x, basis = lb2, ub2, sol.values, sol.basis

    # frames: (variable, untried values, bounds/iterate to restore)
    stack: List[Tuple[int, List[float], np.ndarray, np.ndarray, np.ndarray, LpBasis]] = []
    while lps < max_lps:
        unfixed = [j for j in binaries if ub[j] - lb[j] > 0.5]
        loose = [(j, abs(x[j] - round(x[j]))) for j in unfixed]
        loose = [(j, d) for j, d in loose if d > INT_TOL]
        if not loose:
            for j in binaries:
                if ub[j] - lb[j] > 0.5:
                    lb[j] = ub[j] = round(x[j])
            sol = solve_lp(model, lb, ub, warm=basis)
            lps += 1
            if sol.status == "optimal" and not check_solution(model, sol.values):
                return sol.values
            xi = x.copy()
            for j in binaries:
                xi[j] = round(xi[j])
            return xi if not check_solution(model, xi) else None
        j, _ = min(loose, key=lambda t: (t[1], t[0]))
        pref = float(round(x[j]))
        stack.append((j, [1.0 - pref], lb, ub, x, basis))
        advanced = False
        probe = [pref]
        while stack and not advanced and lps < max_lps:
            jj, vals, slb, sub, sx, sbasis = stack[-1]
            if not probe and not vals:
                stack.pop()
                probe = []
                continue
            val = probe.pop() if probe else vals.pop()
            lb2, ub2 = slb.copy(), sub.copy()
            lb2[jj] = ub2[jj] = val
            sol = solve_lp(model, lb2, ub2, warm=sbasis)
            lps += 1
            if sol.status == "optimal":
                lb, ub, x, basis = lb2, ub2, sol.values, sol.basis
                advanced = True
        if not advanced:
            return None
    return None


# ---------------------------------------------------------------------------
# branch and bound


def solve_milp(
    model: MilpModel,
    node_limit: int = 200000,
    gap_tol: float = 1e-6,
    incumbent: Optional[np.ndarray] = None,
) -> MilpSolution:
    """Deterministic best-first branch and bound on the built-in simplex.

    Nodes are explored in order of their parent relaxation bound, branching
    on the most fractional binary (ties by lowest index).  At every node a
    propagation/DFS repair tries to complete the fractional relaxation over
    the binaries, which keeps a near-optimal incumbent available early; a
    supplied feasible incumbent bounds the search from above and is returned
    verbatim if nothing better is found.
    """
    binaries = model.binaries
    best_x: Optional[np.ndarray] = None
    best_obj = INF
    if incumbent is not None:
        inc = np.asarray(incumbent, dtype=float)
        if check_solution(model, inc):
            raise MilpError("supplied incumbent is infeasible")
        best_x = inc.copy()
        best_obj = model.objective_value(inc)

    def try_incumbent(xi: np.ndarray) -> None:
        nonlocal best_obj, best_x
        obj = model.objective_value(xi)
        if obj < best_obj:
            best_obj = obj
            best_x = np.asarray(xi, dtype=float).copy()

    lb0 = np.array([v.lb for v in model.variables])
    ub0 = np.array([v.ub for v in model.variables])
    # (parent bound, insertion order, lb, ub, warm basis)
    heap: List[Tuple[float, int, np.ndarray, np.ndarray, Optional[LpBasis]]] = [
        (-INF, 0, lb0, ub0, None)
    ]
    seq = 1
    nodes = 0
    hit_limit = False

    def push(bound, lb, ub, warm):
        nonlocal seq
        heapq.heappush(heap, (bound, seq, lb, ub, warm))
        seq += 1

    def branch(lb, ub, j_star, side, bound, warm):
        """Split on binary ``j_star``; the ``side`` child is explored first."""
        ub_dn = ub.copy()
        ub_dn[j_star] = 0.0
        lb_up = lb.copy()
        lb_up[j_star] = 1.0
        push(bound, lb, ub_dn, warm)
        push(bound, lb_up, ub, warm)

    while heap:
        if nodes >= node_limit:
            hit_limit = True
            break
        bound, _, lb, ub, warm = heapq.heappop(heap)
        if bound >= best_obj - gap_tol * max(1.0, abs(best_obj)):
            break  # best-first: every remaining node is at least as bad
        nodes += 1
        rel = solve_lp(model, lb, ub, warm=warm)
        if rel.status == "infeasible":
            continue
        if rel.status == "unbounded":
            if best_x is None:
                return MilpSolution("unbounded", None, None, nodes)
            continue
        if rel.objective >= best_obj - gap_tol * max(1.0, abs(best_obj)):
            continue
        x = rel.values
        frac = [(j, abs(x[j] - round(x[j]))) for j in binaries]
        frac = [(j, d) for j, d in frac if d > INT_TOL]
        if not frac:
            xi = x.copy()
            for j in binaries:
                xi[j] = round(xi[j])
            if check_solution(model, xi):
                # rounding pushed a row out of tolerance: re-solve with the
                # binaries pinned so the continuous part is consistent
                lbf, ubf = lb.copy(), ub.copy()
                for j in binaries:
                    lbf[j] = ubf[j] = round(x[j])
                fixed = solve_lp(model, lbf, ubf)
                if fixed.status != "optimal" or check_solution(model, fixed.values):
                    # the near-integral point was a big-M artifact; branch on
                    # the binary that moved most when rounded
                    devs = [(j, abs(x[j] - round(x[j]))) for j in binaries]
                    if not devs or max(d for _, d in devs) <= 1e-12:
                        continue  # nothing to branch on; numerically dead node
                    j_star = min(devs, key=lambda t: (-t[1], t[0]))[0]
                    branch(lb, ub, j_star, round(x[j_star]), rel.objective, rel.basis)
                    continue
                xi = fixed.values
            try_incumbent(xi)
            continue
        # primal heuristics: a cheap propagation repair over the binaries
        # alone runs periodically; the LP dive runs while the incumbent is
        # still far from this node's bound (e.g. penalty-grade fallbacks)
        far = best_obj - rel.objective > 0.5 * max(1.0, abs(rel.objective))
        if nodes == 1 or nodes % 10 == 1:
            xi = _repair_binaries(model, x, lb, ub)
            if xi is not None:
                lbf, ubf = lb.copy(), ub.copy()
                for j in binaries:
                    lbf[j] = ubf[j] = xi[j]
                fx = solve_lp(model, lbf, ubf, warm=rel.basis)
                if fx.status == "optimal" and not check_solution(model, fx.values):
                    try_incumbent(fx.values)
                elif not check_solution(model, xi):
                    try_incumbent(xi)
        if far and (nodes == 1 or nodes % 50 == 1):
            xi = _dive(model, rel, lb, ub, binaries)
            if xi is not None:
                try_incumbent(xi)
        # reduced-cost fixing: with incumbent U and node bound L, a nonbasic
        # binary whose reduced cost exceeds U - L cannot change side in any
        # improving solution, so both children inherit it pinned
        if best_obj < INF and rel.reduced is not None:
            slack = best_obj - gap_tol * max(1.0, abs(best_obj)) - rel.objective
            rc = rel.reduced
            tight = None
            for j in binaries:
                if ub[j] - lb[j] > 0.5:
                    if x[j] < 0.5 and rc[j] > slack:
                        tight = tight or (lb.copy(), ub.copy())
                        tight[1][j] = 0.0
                    elif x[j] > 0.5 and -rc[j] > slack:
                        tight = tight or (lb.copy(), ub.copy())
                        tight[0][j] = 1.0
            if tight is not None:
                lb, ub = tight
        # most fractional, ties by lowest index
        j_star = min(frac, key=lambda t: (-min(t[1], 1 - t[1]), t[0]))[0]
        branch(lb, ub, j_star, round(x[j_star]), rel.objective, rel.basis)
    if best_x is None:
        return MilpSolution("node_limit" if hit_limit else "infeasible", None, None, nodes)
    status = "node_limit" if hit_limit else "optimal"
    return MilpSolution(status, best_x, best_obj, nodes, gap=0.0)


# ---------------------------------------------------------------------------
# LP text format


def _fmt(x: float) -> str:
    return repr(float(x))


def _expr(coeffs: Dict[int, float], names: Sequence[str]) -> str:
    parts = []
    for j in sorted(coeffs):
        c = coeffs[j]
        if c == 0.0:
            continue
        if not parts:
            parts.append(f"{_fmt(c)} {names[j]}" if c >= 0 else f"- {_fmt(-c)} {names[j]}")
        elif c >= 0:
            parts.append(f"+ {_fmt(c)} {names[j]}")
        else:
            parts.append(f"- {_fmt(-c)} {names[j]}")
    return " ".join(parts) if parts else "0 " + names[0]


def export_lp(model: MilpModel, destination=None) -> str:
    """Render the model in LP text format; optionally write it out."""
    names = [v.name for v in model.variables]
    if len(set(names)) != len(names):
        raise MilpError("variable names must be unique for LP export")
    for nm in names:
        if not nm.replace("_", "").isalnum() or nm[0].isdigit():
            raise MilpError(f"variable name {nm!r} not exportable")
    lines = ["Minimize", f" obj: {_expr(model.objective, names)}", "Subject To"]
    for i, row in enumerate(model.rows):
        label = row.name or f"c{i}"
        lines.append(f" {label}: {_expr(row.coeffs, names)} {row.sense} {_fmt(row.rhs)}")
    lines.append("Bounds")
    for v in model.variables:
        if v.integrality == "binary":
            continue
        if np.isinf(v.lb) and np.isinf(v.ub):
            lines.append(f" {v.name} free")
        elif np.isinf(v.ub):
            lines.append(f" {v.name} >= {_fmt(v.lb)}")
        elif np.isinf(v.lb):
            lines.append(f" {v.name} <= {_fmt(v.ub)}")
        else:
            lines.append(f" {_fmt(v.lb)} <= {v.name} <= {_fmt(v.ub)}")
    binaries = [v.name for v in model.variables if v.integrality == "binary"]
    if binaries:
        lines.append("Binary")
        lines.append(" " + " ".join(binaries))
    lines.append("End")
    text = "\n".join(lines) + "\n"
    if destination is None:
        return text
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        Path(destination).write_text(text)
    return text


def import_lp(text: str) -> MilpModel:
    """Parse our LP text format back into a model."""
    section = None
    objective: Dict[str, float] = {}
    rows: List[Tuple[str, Dict[str, float], str, float]] = []
    bounds: Dict[str, Tuple[float, float]] = {}
    free: set = set()
    binaries: List[str] = []
    order: List[str] = []
    seen: set = set()

    def note(name: str):
        if name not in seen:
            seen.add(name)
            order.append(name)

    def parse_expr(tokens: List[str]) -> Dict[str, float]:
        coeffs: Dict[str, float] = {}
        sign = 1.0
        i = 0
        while i < len(tokens):
            t = tokens[i]
            if t == "+":
                sign = 1.0
                i += 1
                continue
            if t == "-":
                sign = -1.0
                i += 1
                continue
            coef = sign * float(t)
            name = tokens[i + 1]
            coeffs[name] = coeffs.get(name, 0.0) + coef
            note(name)
            sign = 1.0
            i += 2
        return coeffs

    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        low = line.lower()
        if low in ("minimize", "subject to", "bounds", "binary", "end"):
            section = low
            continue
        if section == "minimize":
            body = line.split(":", 1)[1] if ":" in line else line
            objective = parse_expr(body.split())
        elif section == "subject to":
            label, body = line.split(":", 1)
            tokens = body.split()
            sense_at = next(i for i, t in enumerate(tokens) if t in (">=", "<=", "="))
            coeffs = parse_expr(tokens[:sense_at])
            rows.append((label.strip(), coeffs, tokens[sense_at], float(tokens[sense_at + 1])))
        elif section == "bounds":
            tokens = line.split()
            if tokens[-1] == "free":
                free.add(tokens[0])
                note(tokens[0])
            elif len(tokens) == 5:  # lb <= x <= ub
                bounds[tokens[2]] = (float(tokens[0]), float(tokens[4]))
                note(tokens[2])
            elif tokens[1] == ">=":
                bounds[tokens[0]] = (float(tokens[2]), INF)
                note(tokens[0])
            elif tokens[1] == "<=":
                bounds[tokens[0]] = (-INF, float(tokens[2]))
                note(tokens[0])
            else:
                raise MilpError(f"bad bounds line: {line!r}")
        elif section == "binary":
            for nm in line.split():
                binaries.append(nm)
                note(nm)

    model = MilpModel()
    idx: Dict[str, int] = {}
    for nm in order:
        if nm in binaries:
            idx[nm] = model.add_binary(nm)
        elif nm in free:
            idx[nm] = model.add_var(nm)
        elif nm in bounds:
            lo, hi = bounds[nm]
            idx[nm] = model.add_var(nm, lo, hi)
        else:
            idx[nm] = model.add_var(nm)
    for label, coeffs, sense, rhs in rows:
        model.add_row({idx[n]: c for n, c in coeffs.items()}, sense, rhs, name=label)
    model.set_objective({idx[n]: c for n, c in objective.items()})
    return model


# ---------------------------------------------------------------------------
# adapters


class BuiltinSolver:
    """Reference adapter around the built-in branch and bound."""

    name = "builtin"

    def solve(self, model, node_limit=200000, gap_tol=1e-6, incumbent=None):
        return solve_milp(model, node_limit=node_limit, gap_tol=gap_tol, incumbent=incumbent)


class ScipyMilpAdapter:
    """In-process adapter backed by scipy.optimize.milp (HiGHS)."""

    name = "scipy"

    def solve(self, model, node_limit=200000, gap_tol=1e-6, incumbent=None):
        from scipy.optimize import Bounds, LinearConstraint
        from scipy.optimize import milp as scipy_milp

        nv = len(model.variables)
        c = np.zeros(nv)
        for j, cj in model.objective.items():
            c[j] = cj
        integrality = np.array(
            [1 if v.integrality == "binary" else 0 for v in model.variables]
        )
        lb = np.array([v.lb for v in model.variables])
        ub = np.array([v.ub for v in model.variables])
        constraints = []
        if model.rows:
            A = np.zeros((len(model.rows), nv))
            lo = np.zeros(len(model.rows))
            hi = np.zeros(len(model.rows))
            for i, row in enumerate(model.rows):
                for j, cj in row.coeffs.items():
                    A[i, j] = cj
                if row.sense == ">=":
                    lo[i], hi[i] = row.rhs, INF
                elif row.sense == "<=":
                    lo[i], hi[i] = -INF, row.rhs
                else:
                    lo[i], hi[i] = row.rhs, row.rhs
            constraints = [LinearConstraint(A, lo, hi)]
        try:
            res = scipy_milp(
                c,
                constraints=constraints,
                integrality=integrality,
                bounds=Bounds(lb, ub),
                options={"mip_rel_gap": min(gap_tol, 1e-9), "node_limit": node_limit},
            )
        except Exception as exc:  # noqa: BLE001
            raise AdapterError(f"scipy adapter failed: {exc}") from exc
        if res.status == 2:
            return MilpSolution("infeasible", None, None)
        if res.status == 3:
            return MilpSolution("unbounded", None, None)
        if res.x is None:
            if res.status == 1:
                return MilpSolution("node_limit", None, None)
            raise AdapterError(f"scipy adapter: {res.message}")
        x = np.asarray(res.x, dtype=float)
        x = np.clip(x, lb, ub)
        for j in model.binaries:
            x[j] = round(x[j])
        status = "optimal" if res.status == 0 else "node_limit"
        return MilpSolution(status, x, model.objective_value(x), nodes=0)


class SubprocessSolver:
    """Adapter driving an LP-file-consuming solver command.

    The command receives the LP file path and a solution file path (either
    via ``{lp}``/``{sol}`` placeholders or appended as the last two
    arguments), exits 0 on optimality or 3 on infeasibility, and writes the
    solution as ``name value`` lines.
    """

    name = "external"

    def __init__(self, command: str):
        self.command = command

    def solve(self, model, node_limit=200000, gap_tol=1e-6, incumbent=None):
        with tempfile.TemporaryDirectory() as tmp:
            lp_path = str(Path(tmp) / "model.lp")
            sol_path = str(Path(tmp) / "model.sol")
            export_lp(model, lp_path)
            argv = shlex.split(self.command)
            if any("{lp}" in a or "{sol}" in a for a in argv):
                argv = [a.replace("{lp}", lp_path).replace("{sol}", sol_path) for a in argv]
            else:
                argv = argv + [lp_path, sol_path]
            try:
                proc = subprocess.run(argv, capture_output=True, text=True, timeout=600)
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise AdapterError(f"external solver failed to run: {exc}") from exc
            if proc.returncode == 3:
                return MilpSolution("infeasible", None, None)
            if proc.returncode != 0:
                raise AdapterError(
                    f"external solver exited {proc.returncode}: {proc.stderr.strip()}"
                )
            try:
                text = Path(sol_path).read_text()
            except OSError as exc:
                raise AdapterError("external solver wrote no solution file") from exc
        values = {}
        for line in text.splitlines():
            parts = line.split()
            if len(parts) == 2:
                values[parts[0]] = float(parts[1])
        x = np.zeros(len(model.variables))
        for j, v in enumerate(model.variables):
            if v.name in values:
                x[j] = values[v.name]
            elif np.isfinite(v.lb):
                x[j] = v.lb
        return MilpSolution("optimal", x, model.objective_value(x), nodes=0)


def make_solver(spec: str):
    """Resolve a --solver string: builtin | scipy | external:<command>."""
    if spec == "builtin":
        return BuiltinSolver()
    if spec == "scipy":
        return ScipyMilpAdapter()
    if spec.startswith("external:"):
        return SubprocessSolver(spec.split(":", 1)[1])
    raise MilpError(f"unknown solver spec {spec!r}")


def lpsolve_main(argv=None) -> int:
    """Console entry: solve an LP-format file, write 'name value' lines."""
    import sys

    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print("usage: stlmpc-lpsolve MODEL.lp OUT.sol", file=sys.stderr)
        return 2
    model = import_lp(Path(argv[0]).read_text())
    sol = solve_milp(model)
    if sol.status == "infeasible":
        return 3
    if sol.values is None:
        print(f"solver status: {sol.status}", file=sys.stderr)
        return 4
    with open(argv[1], "w") as fh:
        for v, val in zip(model.variables, sol.values):
            fh.write(f"{v.name} {float(val)!r}\n")
    return 0
