"""Class structure of finite Markov chains and their Cesaro projector."""

import json
from dataclasses import dataclass
from fractions import Fraction

import networkx as nx
import numpy as np

from .exact import ONE, ZERO, fraction_str, is_exact, solve


@dataclass
class ChainStructure:
    classes: list  # SCCs, each a sorted tuple of states
    final_classes: list
    transient: tuple
    mu: list  # one full-length row vector per final class
    phi: list  # phi[k][i]: probability of ending in final_classes[k] from i
    exact: bool = True

    def to_dict(self):
        fmt = fraction_str if self.exact else float
        return {
            "classes": [list(c) for c in self.classes],
            "final_classes": [list(c) for c in self.final_classes],
            "transient": list(self.transient),
            "mu": [[fmt(x) for x in row] for row in self.mu],
            "phi": [[fmt(x) for x in row] for row in self.phi],
        }

    def dump(self):
        return json.dumps(self.to_dict(), indent=2)


def as_matrix(P, exact=None, tol=1e-12):
    """Validate a stochastic matrix; return (rows, exact_flag)."""
    rows = [list(r) for r in P]
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ValueError("matrix must be square")
    if exact is None:
        exact = all(is_exact(x) for r in rows for x in r)
    if exact:
        rows = [[Fraction(x) for x in r] for r in rows]
        for r in rows:
            if any(x < 0 for x in r) or sum(r) != 1:
                raise ValueError("rows must be nonnegative and sum to 1")
    else:
        rows = [[float(x) for x in r] for r in rows]
        for r in rows:
            if any(x < 0 for x in r) or abs(sum(r) - 1) > tol:
                raise ValueError("rows must be nonnegative and sum to 1")
    return rows, exact


def classify(P, exact=None):
    rows, exact = as_matrix(P, exact)
    n = len(rows)
    g = nx.DiGraph()
    g.add_nodes_from(range(n))
    for i, r in enumerate(rows):
        for j, x in enumerate(r):
            if x:
                g.add_edge(i, j)
    cond = nx.condensation(g)
    classes = sorted(tuple(sorted(cond.nodes[c]["members"])) for c in cond.nodes)
    sinks = {tuple(sorted(cond.nodes[c]["members"])) for c in cond.nodes if cond.out_degree(c) == 0}
    final = [c for c in classes if c in sinks]
    in_final = {i for c in final for i in c}
    transient = tuple(i for i in range(n) if i not in in_final)

    mu = []
    for F in final:
        mu.append(_invariant(rows, F, n, exact))
    phi = []
    for F in final:
        phi.append(_absorption(rows, F, transient, n, exact))
    return ChainStructure(classes, final, transient, mu, phi, exact)


def _invariant(rows, F, n, exact):
    k = len(F)
    # mu (P_F - I) = 0, sum mu = 1: transpose and replace one row
    if exact:
        A = [[rows[F[j]][F[i]] - (ONE if i == j else ZERO) for j in range(k)] for i in range(k)]
        A[-1] = [ONE] * k
        b = [ZERO] * (k - 1) + [ONE]
        x = solve(A, b)
        out = [ZERO] * n
    else:
        PF = np.array([[rows[i][j] for j in F] for i in F])
        A = PF.T - np.eye(k)
        A[-1, :] = 1.0
        b = np.zeros(k)
        b[-1] = 1.0
        x = np.linalg.solve(A, b)
        out = [0.0] * n
    for j, s in enumerate(F):
        out[s] = x[j]
    return out


def _absorption(rows, F, transient, n, exact):
    fset = set(F)
    Q = list(transient)
    zero, one = (ZERO, ONE) if exact else (0.0, 1.0)
    out = [one if i in fset else zero for i in range(n)]
    if not Q:
        return out
    m = len(Q)
    # (I - P_QQ) phi_Q = P_QF 1
    if exact:
        A = [[(ONE if a == b else ZERO) - rows[Q[a]][Q[b]] for b in range(m)] for a in range(m)]
        rhs = [sum((rows[i][j] for j in F), ZERO) for i in Q]
        x = solve(A, rhs)
    else:
        A = np.eye(m) - np.array([[rows[i][j] for j in Q] for i in Q])
        rhs = np.array([sum(rows[i][j] for j in F) for i in Q])
        x = np.linalg.solve(A, rhs)
    for a, i in enumerate(Q):
        out[i] = x[a]
    return out


def spectral_projector(P, exact=None, structure=None):
    """Cesaro limit of P^j, assembled from the class structure."""
    rows, exact = as_matrix(P, exact)
    cs = structure or classify(rows, exact)
    n = len(rows)
    zero = ZERO if exact else 0.0
    out = [[zero] * n for _ in range(n)]
    for F, mu, phi in zip(cs.final_classes, cs.mu, cs.phi):
        for i in range(n):
            if phi[i]:
                for j in F:
                    out[i][j] += phi[i] * mu[j]
    return out
