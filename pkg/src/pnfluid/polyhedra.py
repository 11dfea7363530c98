"""Small exact polyhedra given as lists of inequalities a.x <= b."""

from fractions import Fraction

from .exact import ONE, ZERO
from .simplex import linprog


def canonical(ineq):
    """Scale a.x <= b so the first nonzero coefficient has absolute value 1."""
    a, b = ineq
    a = tuple(Fraction(x) for x in a)
    for x in a:
        if x:
            s = abs(x)
            return tuple(v / s for v in a), Fraction(b) / s
    return a, Fraction(b)


def is_trivial(ineq):
    a, b = ineq
    return not any(a)


def dedupe(ineqs):
    seen = set()
    out = []
    for ineq in ineqs:
        c = canonical(ineq)
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


def clean(ineqs):
    """Drop 0 <= b rows; return None when some 0 <= b with b < 0 appears."""
    out = []
    for a, b in ineqs:
        if not any(a):
            if b < 0:
                return None
            continue
        out.append((tuple(a), b))
    return dedupe(out)


def maximize(direction, ineqs, dim):
    res = linprog(list(direction), A_ub=[a for a, _ in ineqs], b_ub=[b for _, b in ineqs],
                  free=set(range(dim)))
    return res


def is_feasible(ineqs, dim):
    return maximize([ZERO] * dim, ineqs, dim).status == "optimal"


def interior_point(ineqs, dim):
    """A point strictly inside every inequality, or None if the set is not
    full-dimensional."""
    if not ineqs:
        return [ZERO] * dim
    rows = [tuple(a) + (ONE,) for a, _ in ineqs]
    rows.append((ZERO,) * dim + (ONE,))
    rhs = [b for _, b in ineqs] + [ONE]
    res = linprog([ZERO] * dim + [ONE], A_ub=rows, b_ub=rhs, free=set(range(dim)))
    if res.status != "optimal" or res.x[-1] <= 0:
        return None
    return res.x[:dim]


def is_full_dimensional(ineqs, dim):
    return interior_point(ineqs, dim) is not None


def implied(ineq, ineqs, dim):
    a, b = ineq
    res = maximize(a, ineqs, dim)
    if res.status == "infeasible":
        return True
    return res.status == "optimal" and res.value <= b


def remove_redundant(ineqs, dim):
    """Drop inequalities implied by the others (the facet description is
    unique for full-dimensional sets, so the scan order does not matter)."""
    current = dedupe(ineqs)
    for row in list(current):
        others = [r for r in current if r != row]
        if implied(row, others, dim):
            current = others
    return current


def fourier_motzkin(ineqs, var):
    """Eliminate coordinate ``var``; the result lives in one fewer dimension."""
    pos, neg, zero = [], [], []
    for a, b in ineqs:
        c = a[var]
        if c > 0:
            pos.append((a, b))
        elif c < 0:
            neg.append((a, b))
        else:
            zero.append((a, b))
    out = [(a[:var] + a[var + 1:], b) for a, b in zero]
    for ap, bp in pos:
        for an, bn in neg:
            cp, cn = ap[var], -an[var]
            a = tuple(cn * x + cp * y for x, y in zip(ap, an))
            out.append((a[:var] + a[var + 1:], cn * bp + cp * bn))
    return out


def contains(ineqs, point, strict=False):
    for a, b in ineqs:
        v = sum((Fraction(x) * Fraction(y) for x, y in zip(a, point)), ZERO)
        if v > b or (strict and v == b):
            return False
    return True


def same_polyhedron(P, Q, dim):
    return all(implied(r, Q, dim) for r in P) and all(implied(r, P, dim) for r in Q)
