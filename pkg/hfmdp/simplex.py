"""
Dense two-phase primal simplex with Bland's rule.

Solves   minimize c·x
         subject to A_ge x >= b_ge, A_eq x = b_eq, lower <= x <= upper
and reports primal values, row duals, bound multipliers, and an
unboundedness ray when one exists. Everything is deterministic: entering
and leaving choices break ties by the lowest index, and the final primal
and dual vectors are recomputed from the sorted optimal basis.
"""

import io
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from .errors import LpInputError, SolverError

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-8


class LpStatus(str, Enum):
    OPTIMAL = "Optimal"
    UNBOUNDED = "Unbounded"
    INFEASIBLE = "Infeasible"


def _as_matrix(a, n: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, n))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1) if a.size else np.zeros((0, n))
    return a


def _as_vector(b, m: int) -> np.ndarray:
    if b is None:
        return np.zeros(m)
    return np.asarray(b, dtype=float).reshape(-1)


@dataclass(frozen=True)
class LinearProgram:
    """A minimization LP; variables default to the bounds [0, +inf)."""

    c: np.ndarray
    A_ge: np.ndarray
    b_ge: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: Tuple[str, ...] = ()
    row_names: Tuple[str, ...] = ()

    @classmethod
    def build(cls, c, A_ge=None, b_ge=None, A_eq=None, b_eq=None, lower=None, upper=None,
              names: Sequence[str] = (), row_names: Sequence[str] = ()) -> "LinearProgram":
        c = np.asarray(c, dtype=float).reshape(-1)
        n = c.size
        A_ge = _as_matrix(A_ge, n)
        A_eq = _as_matrix(A_eq, n)
        lp = cls(
            c=c,
            A_ge=A_ge,
            b_ge=_as_vector(b_ge, A_ge.shape[0]),
            A_eq=A_eq,
            b_eq=_as_vector(b_eq, A_eq.shape[0]),
            lower=np.zeros(n) if lower is None else np.asarray(lower, dtype=float).reshape(-1),
            upper=np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float).reshape(-1),
            names=tuple(names),
            row_names=tuple(row_names),
        )
        lp.check()
        return lp

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.A_ge.shape[0] + self.A_eq.shape[0]

    def check(self) -> None:
        n = self.c.size
        if self.A_ge.ndim != 2 or self.A_ge.shape[1] != n and self.A_ge.shape[0]:
            raise LpInputError(f"A_ge has shape {self.A_ge.shape}, expected (m, {n})")
        if self.A_eq.ndim != 2 or self.A_eq.shape[1] != n and self.A_eq.shape[0]:
            raise LpInputError(f"A_eq has shape {self.A_eq.shape}, expected (m, {n})")
        if self.b_ge.size != self.A_ge.shape[0]:
            raise LpInputError(f"b_ge has {self.b_ge.size} entries for {self.A_ge.shape[0]} rows")
        if self.b_eq.size != self.A_eq.shape[0]:
            raise LpInputError(f"b_eq has {self.b_eq.size} entries for {self.A_eq.shape[0]} rows")
        if self.lower.size != n or self.upper.size != n:
            raise LpInputError("bounds must have one entry per variable")
        for label, arr in (("c", self.c), ("A_ge", self.A_ge), ("b_ge", self.b_ge),
                           ("A_eq", self.A_eq), ("b_eq", self.b_eq)):
            if not np.all(np.isfinite(arr)):
                raise LpInputError(f"{label} contains non-finite entries")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise LpInputError("NaN bound")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise LpInputError("lower bound +inf or upper bound -inf")
        if np.any(self.lower > self.upper):
            raise LpInputError("lower bound above upper bound")
        if self.names and len(self.names) != n:
            raise LpInputError("one name per variable expected")

    def with_bounds(self, lower=None, upper=None) -> "LinearProgram":
        return LinearProgram.build(
            self.c, self.A_ge, self.b_ge, self.A_eq, self.b_eq,
            self.lower if lower is None else lower,
            self.upper if upper is None else upper,
            self.names, self.row_names)


@dataclass(frozen=True)
class LpSolution:
    """
    `dual` holds one multiplier per user row, >= rows first. For a
    minimization the duals of >= rows are nonnegative; equality duals are
    free. `lower_dual`/`upper_dual` are the nonnegative multipliers of the
    variable bounds.
    """

    status: LpStatus
    x: np.ndarray
    objective: float
    dual: np.ndarray
    lower_dual: np.ndarray
    upper_dual: np.ndarray
    ray: Optional[np.ndarray] = None
    iterations: int = 0
    n_ge: int = 0

    @property
    def dual_ge(self) -> np.ndarray:
        return self.dual[:self.n_ge]

    @property
    def dual_eq(self) -> np.ndarray:
        return self.dual[self.n_ge:]

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@dataclass
class _StandardForm:
    """min c'y s.t. A y = b, y >= 0, and the map back to user variables."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    offset: np.ndarray
    transform: np.ndarray          # x = offset + transform @ y[:n_struct]
    n_struct: int
    row_sign: np.ndarray           # +1/-1 applied to each standard row
    n_user_rows: int
    bound_rows: List[Tuple[int, str]] = field(default_factory=list)   # (variable, 'lower'|'upper')
    slack_of_row: List[Optional[int]] = field(default_factory=list)   # slack column with +1 coefficient
    column_role: List[Tuple[int, str]] = field(default_factory=list)  # (variable, 'shift'|'reflect'|'plus'|'minus')


def _standard_form(lp: LinearProgram) -> _StandardForm:
    n = lp.n_vars
    offset = np.zeros(n)
    cols: List[Tuple[int, float]] = []   # (variable, coefficient) per structural column
    roles: List[Tuple[int, str]] = []
    bound_specs: List[Tuple[int, float, int, str]] = []  # (column, rhs, variable, side)
    for i in range(n):
        lo, hi = lp.lower[i], lp.upper[i]
        if np.isfinite(lo) and lo >= 0:
            offset[i] = lo
            cols.append((i, 1.0))
            roles.append((i, "shift"))
            if np.isfinite(hi):
                bound_specs.append((len(cols) - 1, hi - lo, i, "upper"))
        elif np.isfinite(hi) and hi <= 0:
            offset[i] = hi
            cols.append((i, -1.0))
            roles.append((i, "reflect"))
            if np.isfinite(lo):
                bound_specs.append((len(cols) - 1, hi - lo, i, "lower"))
        else:
            cols.append((i, 1.0))
            roles.append((i, "plus"))
            if np.isfinite(hi):
                bound_specs.append((len(cols) - 1, hi, i, "upper"))
            cols.append((i, -1.0))
            roles.append((i, "minus"))
            if np.isfinite(lo):
                bound_specs.append((len(cols) - 1, -lo, i, "lower"))
    n_struct = len(cols)
    transform = np.zeros((n, n_struct))
    for k, (i, coef) in enumerate(cols):
        transform[i, k] = coef

    m_ge, m_eq = lp.A_ge.shape[0], lp.A_eq.shape[0]
    m_bound = len(bound_specs)
    m = m_ge + m_eq + m_bound
    n_slack = m_ge + m_bound
    A = np.zeros((m, n_struct + n_slack))
    b = np.zeros(m)
    slack_of_row: List[Optional[int]] = [None] * m
    if m_ge:
        A[:m_ge, :n_struct] = lp.A_ge @ transform
        b[:m_ge] = lp.b_ge - lp.A_ge @ offset
        for r in range(m_ge):
            A[r, n_struct + r] = -1.0
            slack_of_row[r] = n_struct + r
    if m_eq:
        A[m_ge:m_ge + m_eq, :n_struct] = lp.A_eq @ transform
        b[m_ge:m_ge + m_eq] = lp.b_eq - lp.A_eq @ offset
    bound_rows = []
    for r, (col, rhs, var, side) in enumerate(bound_specs):
        row = m_ge + m_eq + r
        A[row, col] = 1.0
        A[row, n_struct + m_ge + r] = 1.0
        b[row] = rhs
        slack_of_row[row] = n_struct + m_ge + r
        bound_rows.append((var, side))

    row_sign = np.where(b < 0, -1.0, 1.0)
    A *= row_sign[:, None]
    b *= row_sign
    # a slack can start in the basis only where its coefficient is now +1
    usable = []
    for r, col in enumerate(slack_of_row):
        usable.append(col if col is not None and A[r, col] > 0 else None)

    c = np.concatenate([lp.c @ transform, np.zeros(n_slack)])
    return _StandardForm(A=A, b=b, c=c, offset=offset, transform=transform, n_struct=n_struct,
                         row_sign=row_sign, n_user_rows=m_ge + m_eq, bound_rows=bound_rows,
                         slack_of_row=usable, column_role=roles)


class _Tableau:
    """Row-reduced tableau [B^-1 A | B^-1 b] with a reduced-cost row."""

    def __init__(self, A: np.ndarray, b: np.ndarray, basis: List[int]):
        self.T = np.hstack([A, b[:, None]])
        self.basis = list(basis)
        self.iterations = 0

    @property
    def m(self) -> int:
        return self.T.shape[0]

    def pivot(self, row: int, col: int) -> None:
        T = self.T
        T[row] /= T[row, col]
        column = T[:, col].copy()
        column[row] = 0.0
        T -= np.outer(column, T[row])
        self.basis[row] = col
        self.iterations += 1

    def reduced_costs(self, c: np.ndarray) -> np.ndarray:
        cb = c[self.basis]
        return c - cb @ self.T[:, :-1]

    def run(self, c: np.ndarray, allowed: np.ndarray, max_iter: int, label: str) -> Optional[int]:
        """
        Iterate to optimality for cost `c`. Returns None at optimum, or the
        entering column that proved unboundedness.
        """
        scale = max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
        tol = 1e-10 * scale
        while True:
            if self.iterations >= max_iter:
                raise SolverError(f"simplex {label}: iteration cap {max_iter} reached")
            rc = self.reduced_costs(c)
            candidates = np.flatnonzero((rc < -tol) & allowed)
            if candidates.size == 0:
                return None
            col = int(candidates[0])
            column = self.T[:, col]
            positive = np.flatnonzero(column > PIVOT_TOL)
            if positive.size == 0:
                return col
            ratios = self.T[positive, -1] / column[positive]
            best = ratios.min()
            ties = positive[ratios <= best + 1e-12 * max(1.0, abs(best))]
            row = int(min(ties, key=lambda r: self.basis[r]))
            self.pivot(row, col)


def solve(lp: LinearProgram, max_iter: Optional[int] = None) -> LpSolution:
    """Solve `lp`; raises SolverError only when the iteration cap is hit."""
    lp.check()
    sf = _standard_form(lp)
    m, n_cols = sf.A.shape
    n_user = lp.n_vars
    cap = max_iter or 50 * (lp.n_rows + lp.n_vars + 1)

    basis: List[int] = []
    art_cols: List[int] = []
    A1 = sf.A
    extra = []
    for r in range(m):
        if sf.slack_of_row[r] is not None:
            basis.append(sf.slack_of_row[r])
        else:
            col = n_cols + len(extra)
            extra.append(r)
            basis.append(col)
            art_cols.append(col)
    if extra:
        art = np.zeros((m, len(extra)))
        for k, r in enumerate(extra):
            art[r, k] = 1.0
        A1 = np.hstack([sf.A, art])
    tab = _Tableau(A1, sf.b.copy(), basis)
    total_cols = A1.shape[1]
    is_art = np.zeros(total_cols, dtype=bool)
    is_art[n_cols:] = True

    if extra:
        c1 = np.zeros(total_cols)
        c1[n_cols:] = 1.0
        tab.run(c1, np.ones(total_cols, dtype=bool), cap, "phase 1")
        infeas = float(c1[tab.basis] @ tab.T[:, -1])
        if infeas > FEAS_TOL * max(1.0, float(np.max(np.abs(sf.b))) if m else 1.0):
            logger.debug("phase 1 ended with infeasibility %.3e", infeas)
            return _empty(LpStatus.INFEASIBLE, lp, tab.iterations)
        art_row = {n_cols + k: r for k, r in enumerate(extra)}
        dropped = _drive_out_artificials(tab, is_art, art_row)
        if dropped:
            logger.debug("removed %d redundant rows", len(dropped))
        kept_rows = [r for r in range(m) if r not in dropped]
    else:
        kept_rows = list(range(m))

    c2 = np.concatenate([sf.c, np.zeros(total_cols - n_cols)])
    allowed = ~is_art
    entering = tab.run(c2, allowed, cap, "phase 2")
    if entering is not None:
        direction = np.zeros(total_cols)
        direction[entering] = 1.0
        for r, bcol in enumerate(tab.basis):
            direction[bcol] = -tab.T[r, entering]
        ray = sf.transform @ direction[:sf.n_struct]
        peak = float(np.max(np.abs(ray))) if ray.size else 0.0
        if peak > 0:
            ray = ray / peak
        logger.debug("unbounded after %d pivots", tab.iterations)
        sol = _empty(LpStatus.UNBOUNDED, lp, tab.iterations)
        return LpSolution(status=sol.status, x=sol.x, objective=-np.inf, dual=sol.dual,
                          lower_dual=sol.lower_dual, upper_dual=sol.upper_dual, ray=ray,
                          iterations=tab.iterations, n_ge=lp.A_ge.shape[0])
    return _finish(lp, sf, tab, kept_rows, c2[:n_cols])


def _drive_out_artificials(tab: _Tableau, is_art: np.ndarray, art_row: dict) -> set:
    """
    Pivot zero-level artificials out of the basis. A tableau row with no
    structural entry left means the artificial's own constraint row is a
    combination of the others; it is dropped and its index returned.
    """
    dropped = set()
    r = 0
    while r < tab.m:
        bcol = tab.basis[r]
        if is_art[bcol]:
            candidates = np.flatnonzero((np.abs(tab.T[r, :-1]) > PIVOT_TOL) & ~is_art)
            if candidates.size:
                tab.pivot(r, int(candidates[0]))
            else:
                dropped.add(art_row[bcol])
                tab.T = np.delete(tab.T, r, axis=0)
                del tab.basis[r]
                continue
        r += 1
    return dropped


def _empty(status: LpStatus, lp: LinearProgram, iterations: int) -> LpSolution:
    n = lp.n_vars
    return LpSolution(status=status, x=np.zeros(n), objective=np.nan, dual=np.zeros(lp.n_rows),
                      lower_dual=np.zeros(n), upper_dual=np.zeros(n), iterations=iterations,
                      n_ge=lp.A_ge.shape[0])


def _finish(lp: LinearProgram, sf: _StandardForm, tab: _Tableau, kept_rows: List[int],
            cost: np.ndarray) -> LpSolution:
    order = np.argsort(tab.basis)
    basis = [tab.basis[i] for i in order]
    rows = list(kept_rows)
    B = sf.A[rows][:, basis]
    try:
        if basis:
            xb = np.linalg.solve(B, sf.b[rows])
            y = np.linalg.solve(B.T, cost[basis])
        else:
            xb = np.zeros(0)
            y = np.zeros(0)
    except np.linalg.LinAlgError:
        logger.warning("singular final basis; falling back to tableau values")
        xb = tab.T[order, -1]
        y = np.zeros(len(rows))
    xb = np.where(np.abs(xb) < 1e-13, 0.0, xb)
    y_std = np.zeros(sf.A.shape[0])
    y_std[rows] = y
    ystd_signed = y_std * sf.row_sign

    ys = np.zeros(sf.A.shape[1])
    ys[basis] = np.maximum(xb, 0.0)
    x = sf.offset + sf.transform @ ys[:sf.n_struct]

    dual = ystd_signed[:sf.n_user_rows].copy()
    n = lp.n_vars
    lower_dual = np.zeros(n)
    upper_dual = np.zeros(n)
    for k, (var, side) in enumerate(sf.bound_rows):
        mult = max(0.0, -float(ystd_signed[sf.n_user_rows + k]))
        if side == "upper":
            upper_dual[var] += mult
        else:
            lower_dual[var] += mult
    reduced = cost - y_std @ sf.A
    for col, (var, role) in enumerate(sf.column_role):
        rc = max(0.0, float(reduced[col]))
        if role == "shift":
            lower_dual[var] += rc
        elif role == "reflect":
            upper_dual[var] += rc
    objective = float(lp.c @ x)
    return LpSolution(status=LpStatus.OPTIMAL, x=x, objective=objective, dual=dual,
                      lower_dual=lower_dual, upper_dual=upper_dual, iterations=tab.iterations,
                      n_ge=lp.A_ge.shape[0])


def _fmt(v: float) -> str:
    return repr(float(v))


def _expr(coeffs: np.ndarray, names: Sequence[str]) -> str:
    terms = []
    for k in np.flatnonzero(coeffs):
        coef = float(coeffs[k])
        sign = "-" if coef < 0 else "+"
        terms.append(f"{sign} {_fmt(abs(coef))} {names[k]}")
    if not terms:
        return "0 " + names[0] if names else "0"
    text = " ".join(terms)
    return text[2:] if text.startswith("+ ") else text


def write_lp(lp: LinearProgram, target: Union[str, TextIO, None] = None) -> str:
    """Write `lp` in CPLEX LP text format; returns the text."""
    names = list(lp.names) or [f"x{i}" for i in range(lp.n_vars)]
    out = io.StringIO()
    out.write("\\ hfmdp linear program\n")
    out.write("Minimize\n")
    out.write(f" obj: {_expr(lp.c, names)}\n")
    out.write("Subject To\n")
    m_ge = lp.A_ge.shape[0]
    for r in range(m_ge):
        label = lp.row_names[r] if lp.row_names else f"g{r}"
        out.write(f" {label}: {_expr(lp.A_ge[r], names)} >= {_fmt(lp.b_ge[r])}\n")
    for r in range(lp.A_eq.shape[0]):
        label = lp.row_names[m_ge + r] if lp.row_names else f"e{r}"
        out.write(f" {label}: {_expr(lp.A_eq[r], names)} = {_fmt(lp.b_eq[r])}\n")
    out.write("Bounds\n")
    for i, name in enumerate(names):
        lo, hi = lp.lower[i], lp.upper[i]
        if lo == 0 and hi == np.inf:
            continue
        if lo == -np.inf and hi == np.inf:
            out.write(f" {name} free\n")
            continue
        lo_txt = "-inf" if lo == -np.inf else _fmt(lo)
        hi_txt = "+inf" if hi == np.inf else _fmt(hi)
        out.write(f" {lo_txt} <= {name} <= {hi_txt}\n")
    out.write("End\n")
    text = out.getvalue()
    if isinstance(target, str):
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(text)
    elif target is not None:
        target.write(text)
    return text
