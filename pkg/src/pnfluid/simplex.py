"""Dense two-phase simplex over Fractions with Bland's rule."""

from dataclasses import dataclass
from fractions import Fraction

ZERO = Fraction(0)


class LPError(RuntimeError):
    pass


class InfeasibleError(LPError):
    pass


class UnboundedError(LPError):
    pass


@dataclass
class LPResult:
    status: str
    x: list
    value: Fraction | None


def _pivot(T, obj, basis, r, c):
    prow = T[r]
    inv = 1 / prow[c]
    if inv != 1:
        for j, v in enumerate(prow):
            if v:
                prow[j] = v * inv
    nz = [j for j, v in enumerate(prow) if v]
    for i, row in enumerate(T):
        if i != r:
            f = row[c]
            if f:
                for j in nz:
                    row[j] -= f * prow[j]
    f = obj[c]
    if f:
        for j in nz:
            obj[j] -= f * prow[j]
    basis[r] = c


def _run(T, obj, basis, allowed):
    """Maximize with reduced-cost row ``obj`` (entering when obj[j] < 0)."""
    ncols = len(obj) - 1
    while True:
        enter = None
        for j in range(ncols):
            if allowed[j] and obj[j] < 0:
                enter = j
                break
        if enter is None:
            return "optimal"
        best = None
        leave = None
        for i, row in enumerate(T):
            a = row[enter]
            if a > 0:
                ratio = row[-1] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            return "unbounded"
        _pivot(T, obj, basis, leave, enter)


def linprog(c, A_ub=(), b_ub=(), A_eq=(), b_eq=(), free=None):
    """Maximize c.x subject to A_ub x <= b_ub, A_eq x = b_eq.

    Variables are nonnegative unless listed in ``free`` (indices, or True
    for all). Everything is converted to Fractions.
    """
    n = len(c)
    if free is True:
        free = set(range(n))
    free = set(free or ())
    # column map: original var -> list of (column, sign)
    colmap = []
    ncol = 0
    for j in range(n):
        if j in free:
            colmap.append(((ncol, 1), (ncol + 1, -1)))
            ncol += 2
        else:
            colmap.append(((ncol, 1),))
            ncol += 1

    def expand(row):
        out = [ZERO] * ncol
        for j, v in enumerate(row):
            v = Fraction(v)
            if v:
                for col, s in colmap[j]:
                    out[col] = v if s > 0 else -v
        return out

    rows = []
    kinds = []
    for row, b in zip(A_ub, b_ub):
        rows.append((expand(row), Fraction(b)))
        kinds.append("ub")
    for row, b in zip(A_eq, b_eq):
        rows.append((expand(row), Fraction(b)))
        kinds.append("eq")
    m = len(rows)
    nslack = kinds.count("ub")
    # layout: structural | slacks | artificials | rhs
    art_rows = []
    slack_of = {}
    s = 0
    for i, kind in enumerate(kinds):
        if kind == "ub":
            slack_of[i] = ncol + s
            s += 1
    needs_art = []
    for i, (row, b) in enumerate(rows):
        sign = 1
        if b < 0:
            sign = -1
        if kinds[i] == "eq" or sign < 0:
            needs_art.append(i)
    nart = len(needs_art)
    width = ncol + nslack + nart
    T = []
    basis = []
    art_col = {}
    for k, i in enumerate(needs_art):
        art_col[i] = ncol + nslack + k
    for i, (row, b) in enumerate(rows):
        full = row + [ZERO] * (nslack + nart) + [b]
        if i in slack_of:
            full[slack_of[i]] = Fraction(1)
        if b < 0:
            full = [-v for v in full]
        if i in art_col:
            full[art_col[i]] = Fraction(1)
            basis.append(art_col[i])
        else:
            basis.append(slack_of[i])
        T.append(full)
    is_art = [False] * width
    for col in art_col.values():
        is_art[col] = True

    if nart:
        # phase 1: maximize -sum(artificials)
        obj = [ZERO] * (width + 1)
        for col in art_col.values():
            obj[col] = Fraction(1)
        for i, col in enumerate(basis):
            if is_art[col]:
                for j, v in enumerate(T[i]):
                    if v:
                        obj[j] -= v
        _run(T, obj, basis, [True] * width)
        if obj[-1] != 0:
            return LPResult("infeasible", None, None)
        # drive artificials out of the basis
        keep = []
        for i in range(len(T)):
            if is_art[basis[i]]:
                col = None
                for j in range(width):
                    if not is_art[j] and T[i][j]:
                        col = j
                        break
                if col is None:
                    continue  # redundant row
                _pivot(T, obj, basis, i, col)
            keep.append(i)
        T = [T[i] for i in keep]
        basis = [basis[i] for i in keep]

    cost = [ZERO] * width
    for j in range(n):
        cj = Fraction(c[j])
        for col, sgn in colmap[j]:
            cost[col] = cj if sgn > 0 else -cj
    obj = [-v for v in cost] + [ZERO]
    for i, col in enumerate(basis):
        cb = cost[col]
        if cb:
            for j, v in enumerate(T[i]):
                if v:
                    obj[j] += cb * v
    allowed = [not a for a in is_art]
    status = _run(T, obj, basis, allowed)
    if status == "unbounded":
        return LPResult("unbounded", None, None)
    xcol = [ZERO] * width
    for i, col in enumerate(basis):
        xcol[col] = T[i][-1]
    x = []
    for j in range(n):
        v = ZERO
        for col, sgn in colmap[j]:
            v += xcol[col] if sgn > 0 else -xcol[col]
        x.append(v)
    value = sum((Fraction(c[j]) * x[j] for j in range(n)), ZERO)
    return LPResult("optimal", x, value)
