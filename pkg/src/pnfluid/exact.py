"""Exact rational helpers: parsing and Gauss-Jordan elimination."""

from fractions import Fraction
from numbers import Rational

ZERO = Fraction(0)
ONE = Fraction(1)


def to_fraction(value):
    """Convert ints, floats, Fractions and "p/q" strings to a Fraction.

    Floats go through their decimal repr, so 0.3 becomes 3/10 rather than
    the binary expansion.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError(f"not a finite number: {value}")
        return Fraction(repr(float(value)))
    if isinstance(value, str):
        text = value.strip()
        if not text:
            raise ValueError("empty number")
        return Fraction(text)
    # numpy scalars and the like
    if hasattr(value, "item"):
        return to_fraction(value.item())
    raise TypeError(f"cannot convert {value!r} to a rational")


def fraction_str(value):
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def is_exact(value):
    return isinstance(value, (int, Fraction)) and not isinstance(value, bool)


def dot(row, vec):
    total = ZERO
    for a, b in zip(row, vec):
        if a and b:
            total += a * b
    return total


def gauss_jordan(A, B=None):
    """Reduce [A | B] in place-free fashion.

    A is n x m, B is n x k (k right-hand sides). Pivots are only taken in
    the A block. Returns (R, S, pivots) where R, S are the reduced blocks
    and pivots[i] is the pivot column of row i for the first len(pivots)
    rows.
    """
    n = len(A)
    m = len(A[0]) if n else 0
    k = len(B[0]) if B else 0
    rows = []
    for i in range(n):
        rows.append([Fraction(x) for x in A[i]] + ([Fraction(x) for x in B[i]] if B else []))
    width = m + k
    pivots = []
    r = 0
    for c in range(m):
        if r == n:
            break
        piv = None
        for i in range(r, n):
            if rows[i][c]:
                piv = i
                break
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        prow = rows[r]
        inv = 1 / prow[c]
        if inv != 1:
            for j in range(c, width):
                if prow[j]:
                    prow[j] *= inv
        nz = [j for j in range(c, width) if prow[j]]
        for i in range(n):
            if i == r:
                continue
            f = rows[i][c]
            if f:
                row = rows[i]
                for j in nz:
                    row[j] -= f * prow[j]
        pivots.append(c)
        r += 1
    R = [row[:m] for row in rows]
    S = [row[m:] for row in rows]
    return R, S, pivots


class AffineSolution:
    """Solution set x = X0 @ [params, 1] + N @ w of A x = B @ [params, 1].

    ``conditions`` lists right-hand-side combinations that must vanish for
    the system to be consistent.
    """

    def __init__(self, particular, null_basis, conditions):
        self.particular = particular
        self.null_basis = null_basis
        self.conditions = conditions

    @property
    def nfree(self):
        return len(self.null_basis)


def solve_affine(A, B):
    """Solve A x = B (B has one column per parameter plus a constant)."""
    n = len(A)
    m = len(A[0])
    k = len(B[0])
    R, S, pivots = gauss_jordan(A, B)
    rank = len(pivots)
    conditions = []
    for i in range(rank, n):
        if any(S[i]):
            conditions.append(S[i])
    pivset = set(pivots)
    free = [c for c in range(m) if c not in pivset]
    particular = [[ZERO] * k for _ in range(m)]
    for i, c in enumerate(pivots):
        particular[c] = list(S[i])
    null_basis = []
    for f in free:
        vec = [ZERO] * m
        vec[f] = ONE
        for i, c in enumerate(pivots):
            if R[i][f]:
                vec[c] = -R[i][f]
        null_basis.append(vec)
    return AffineSolution(particular, null_basis, conditions)


def solve(A, b):
    """Unique solution of a square nonsingular system A x = b."""
    sol = solve_affine(A, [[x] for x in b])
    if sol.conditions or sol.null_basis:
        raise ZeroDivisionError("singular system")
    return [row[0] for row in sol.particular]


def nullspace(A, ncols=None):
    if not A:
        m = ncols or 0
        return [[ONE if i == j else ZERO for i in range(m)] for j in range(m)]
    return solve_affine(A, [[0] for _ in A]).null_basis
