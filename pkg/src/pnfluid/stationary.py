"""Germs, stationary regimes and the throughput complex.

A stationary regime is an affine counter z(t) = rho t + u. Each transition
contributes one germ equation per upstream place ("branch"); the regime
satisfies (rho_q, u_q) = lexmin over admissible branches.
"""

import csv
import io
import itertools
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

from . import polyhedra
from .exact import ONE, ZERO, fraction_str, solve_affine, to_fraction
from .petri_model import NetError, PetriNet, Place, Priority, require_valid, stoichiometric_invariant
from .simplex import linprog
from .markov import classify
from .smdp import MAX_POLICIES, _policy_data, petri_to_smdp, solve_average_cost

log = logging.getLogger(__name__)

MAX_SELECTIONS = 2 ** 20


# ---------------------------------------------------------------------------
# germ semifield

class Germ:
    """Affine germ (rho, u) or the top element."""

    __slots__ = ("rho", "u")

    def __init__(self, rho=None, u=None):
        if (rho is None) != (u is None):
            raise ValueError("give both rho and u, or neither for top")
        self.rho = rho
        self.u = u

    @property
    def is_top(self):
        return self.rho is None

    def key(self):
        return (1, 0, 0) if self.is_top else (0, self.rho, self.u)

    def __eq__(self, other):
        return isinstance(other, Germ) and self.key() == other.key()

    def __lt__(self, other):
        return self.key() < other.key()

    def __le__(self, other):
        return self.key() <= other.key()

    def __hash__(self):
        return hash(self.key())

    def __add__(self, other):
        return add(self, other)

    def __repr__(self):
        return "Germ(top)" if self.is_top else f"Germ({self.rho}, {self.u})"


TOP = Germ()


def add(g1, g2):
    if g1.is_top or g2.is_top:
        return TOP
    return Germ(g1.rho + g2.rho, g1.u + g2.u)


def scale(a, g):
    if not a > 0:
        raise ValueError("germs can only be scaled by positive numbers")
    if g.is_top:
        return TOP
    return Germ(a * g.rho, a * g.u)


def lexmin(germs):
    return min(germs, key=Germ.key, default=TOP)


def shift(g, tau):
    """Germ of t -> f(t - tau)."""
    if g.is_top:
        return TOP
    return Germ(g.rho, g.u - g.rho * tau)


# ---------------------------------------------------------------------------
# branches of the germ equations

@dataclass(frozen=True)
class Branch:
    q: str
    place: str
    coef: Fraction  # pi_qp / alpha_qp
    tau: Fraction
    inflow: tuple  # ((q', coef * alpha_pq'), ...)
    outflow: tuple  # ((q', coef * alpha_q'p, lower), ...) on priority places
    lower: tuple  # lower-priority transitions that must have zero throughput


def branches(net):
    out = {}
    for q in net.transitions:
        bl = []
        for p in net.q_in[q]:
            coef = net.pi(q, p) / net.alpha_in[(p, q)]
            inflow = tuple((q2, coef * net.alpha_out[(q2, p)]) for q2 in net.p_in[p])
            r = net.rule(p)
            outflow, lower = (), ()
            if isinstance(r, Priority):
                low = set(r.lower(q))
                outflow = tuple((q2, coef * net.alpha_in[(p, q2)], q2 in low)
                                for q2 in net.p_out[p] if q2 != q)
                lower = tuple(q2 for q2 in r.order if q2 in low)
            bl.append(Branch(q, p, coef, net.tau(p), inflow, outflow, lower))
        out[q] = tuple(bl)
    return out


def branch_germ(b, marking, rho, u):
    """Value of the branch at a candidate regime (dicts rho, u)."""
    r = sum((w * rho[q2] for q2, w in b.inflow), ZERO)
    v = b.coef * marking + sum((w * (u[q2] - rho[q2] * b.tau) for q2, w in b.inflow), ZERO)
    for q2, w, _ in b.outflow:
        r -= w * rho[q2]
        v -= w * u[q2]
    return Germ(r, v)


def admissible(b, rho):
    return all(rho[q2] == 0 for q2 in b.lower)


@dataclass
class GermSystemSolution:
    rho: dict
    u: dict
    witness: dict  # q -> tuple of minimizing places
    selection: dict = field(default_factory=dict)

    def label(self, net=None, multi=None):
        return witness_label(self.witness, multi)

    def to_dict(self):
        return {"rho": {q: fraction_str(v) for q, v in self.rho.items()},
                "u": {q: fraction_str(v) for q, v in self.u.items()},
                "witness": {q: list(v) for q, v in self.witness.items()}}


def witness_label(witness, multi=None):
    parts = []
    for q, places in witness.items():
        if multi is not None and q not in multi:
            continue
        parts.append(f"{q}:{'+'.join(sorted(places))}")
    return ",".join(parts)


def multi_branch(net):
    return {q for q in net.transitions if len(net.q_in[q]) > 1}


def check_germ_solution(net, rho, u, br=None):
    """Witness dict if (rho, u) satisfies every germ equation, else None."""
    witness = {}
    br = br or branches(net)
    for q in net.transitions:
        vals = [(b.place, branch_germ(b, net.marking(b.place), rho, u))
                for b in br[q] if admissible(b, rho)]
        if not vals:
            return None
        best = lexmin([g for _, g in vals])
        if best != Germ(rho[q], u[q]):
            return None
        witness[q] = tuple(p for p, g in vals if g == best)
    return witness


# ---------------------------------------------------------------------------
# priority-free nets through the SMDP

def solve_lex_priority_free(net, method="policy-iteration"):
    if not net.priority_free:
        raise NetError("net has priority routing")
    require_valid(net)
    e = stoichiometric_invariant(net)
    if e is None:
        raise NetError("net has no positive stoichiometric invariant")
    model = petri_to_smdp(net, e)
    sol = solve_average_cost(model, method)
    rho = {q: e[q] * g for q, g in zip(net.transitions, sol.g)}
    u = {q: e[q] * h for q, h in zip(net.transitions, sol.h)}
    witness = check_germ_solution(net, rho, u)
    if witness is None:
        raise RuntimeError("lexicographic system not satisfied (internal error)")
    selection = {q: net.q_in[q][k] for q, k in zip(net.transitions, sol.policy)}
    return GermSystemSolution(rho, u, witness, selection)


# ---------------------------------------------------------------------------
# grid offset for exact stationarity of the discretized dynamics

def stationary_offset(net, rho, u, dt):
    """Smallest t0 >= 0 such that z(t) = rho (t + t0) + u is an exact fixed
    point of the dt-grid dynamics; None if no shift works."""
    dt = to_fraction(dt)
    br = branches(net)
    t0 = ZERO
    for q in net.transitions:
        target = u[q]
        hit = False
        for b in br[q]:
            slope = sum((w * rho[q2] for q2, w in b.inflow), ZERO)
            const = b.coef * net.marking(b.place) + sum(
                (w * (u[q2] - rho[q2] * b.tau) for q2, w in b.inflow), ZERO)
            for q2, w, low in b.outflow:
                slope -= w * rho[q2]
                const -= w * (u[q2] - rho[q2] * dt) if low else w * u[q2]
            eps = slope - rho[q]
            gap = const - target
            if eps < 0:
                return None
            if eps == 0:
                if gap < 0:
                    return None
                if gap == 0:
                    hit = True
            elif gap < 0:
                t0 = max(t0, -gap / eps)
        if not hit:
            return None
    return t0


# ---------------------------------------------------------------------------
# branch-selection systems with markings as symbols

@dataclass
class Case:
    zero: frozenset
    positive: frozenset
    selection: tuple  # branch index per transition
    rho: list  # per transition, form over (places..., 1)
    u: list  # per transition, (form over places+1, coefficients over free vars)
    conditions: list
    comparisons: list  # (q, branch index, drho form, (du form, du free coefs))
    nfree: int
    rho_free: bool  # True when rho is not pinned down by the equations


def _stripped(net):
    places = tuple(Place(p.id, p.tau, ZERO) for p in net.places)
    return PetriNet(places, net.transitions, net.pre, net.post, net.routing)


def relevant_transitions(net):
    br = branches(net)
    rel = []
    for q in net.transitions:
        for b in br[q]:
            for q2 in b.lower:
                if q2 not in rel:
                    rel.append(q2)
    return tuple(q for q in net.transitions if q in rel)


def selection_space(net):
    """Yield (zero set, positive set, admissible branch lists)."""
    br = branches(net)
    rel = relevant_transitions(net)
    for k in range(len(rel) + 1):
        for zero in itertools.combinations(rel, k):
            zero = frozenset(zero)
            adm = []
            for q in net.transitions:
                adm.append([i for i, b in enumerate(br[q]) if all(q2 in zero for q2 in b.lower)])
            if all(adm):
                yield zero, frozenset(rel) - zero, adm


@lru_cache(maxsize=32)
def germ_cases(net):
    """All branch selections of a (marking-free) net, solved symbolically."""
    require_valid(net)
    br = branches(net)
    qs = net.transitions
    n = len(qs)
    qi = {q: i for i, q in enumerate(qs)}
    pi_ = {p: i for i, p in enumerate(net.place_ids)}
    P = len(pi_)
    width = P + 1
    total = 0
    cases = []
    for zero, pos, adm in selection_space(net):
        count = 1
        for a in adm:
            count *= len(a)
        total += count
        if total > MAX_SELECTIONS:
            raise RuntimeError(f"more than {MAX_SELECTIONS} branch selections")
        for sel in itertools.product(*adm):
            A, B = [], []
            for i, q in enumerate(qs):
                b = br[q][sel[i]]
                row_r = [ZERO] * (2 * n)
                row_u = [ZERO] * (2 * n)
                row_r[i] += ONE
                row_u[n + i] += ONE
                for q2, w in b.inflow:
                    j = qi[q2]
                    row_r[j] -= w
                    row_u[n + j] -= w
                    row_u[j] += w * b.tau
                for q2, w, _ in b.outflow:
                    j = qi[q2]
                    row_r[j] += w
                    row_u[n + j] += w
                A.append(row_r)
                B.append([ZERO] * width)
                A.append(row_u)
                rhs = [ZERO] * width
                rhs[pi_[b.place]] = b.coef
                B.append(rhs)
            for q in sorted(zero, key=qi.get):
                row = [ZERO] * (2 * n)
                row[qi[q]] = ONE
                A.append(row)
                B.append([ZERO] * width)
            sol = solve_affine(A, B)
            rho_free = any(any(v[:n]) for v in sol.null_basis)
            rho = sol.particular[:n]
            u = [(sol.particular[n + i], [v[n + i] for v in sol.null_basis]) for i in range(n)]
            comps = []
            if not rho_free:
                for i, q in enumerate(qs):
                    for k in adm[i]:
                        if k == sel[i]:
                            continue
                        b = br[q][k]
                        dr = [-x for x in rho[i]]
                        du = [-x for x in u[i][0]]
                        dw = [-x for x in u[i][1]]
                        du[pi_[b.place]] += b.coef
                        for q2, w in b.inflow:
                            j = qi[q2]
                            _axpy(dr, w, rho[j])
                            _axpy(du, w, u[j][0])
                            _axpy(du, -w * b.tau, rho[j])
                            _axpy(dw, w, u[j][1])
                        for q2, w, _ in b.outflow:
                            j = qi[q2]
                            _axpy(dr, -w, rho[j])
                            _axpy(du, -w, u[j][0])
                            _axpy(dw, -w, u[j][1])
                        comps.append((q, k, dr, (du, dw)))
            cases.append(Case(zero, pos, tuple(sel), rho, u, sol.conditions, comps,
                              sol.nfree, rho_free))
    return tuple(cases)


def _axpy(y, a, x):
    if a:
        for k, v in enumerate(x):
            if v:
                y[k] += a * v


def _ev(form, m):
    total = ZERO
    for a, b in zip(form, m):
        if a and b:
            total += a * b
    return total


def _evaluate_case(net, case, mvec):
    """Numeric check of one selection at marking vector mvec (with trailing 1)."""
    if case.rho_free:
        return None
    for c in case.conditions:
        if _ev(c, mvec) != 0:
            return None
    qs = net.transitions
    rho = [_ev(f, mvec) for f in case.rho]
    if any(r < 0 for r in rho):
        return None
    for q in case.positive:
        if rho[qs.index(q)] <= 0:
            return None
    ucons = []
    for q, k, dr, (du, dw) in case.comparisons:
        d = _ev(dr, mvec)
        if d < 0:
            return None
        if d == 0:
            ucons.append((_ev(du, mvec), dw))
    w = [ZERO] * case.nfree
    if any(any(dw) for _, dw in ucons):
        # need free gauge values making every tied branch no smaller
        A = [[-x for x in dw] for _, dw in ucons]
        b = [c for c, _ in ucons]
        res = linprog([ZERO] * case.nfree, A_ub=A, b_ub=b, free=True)
        if res.status != "optimal":
            return None
        w = res.x
    else:
        if any(c < 0 for c, _ in ucons):
            return None
    u = [_ev(base, mvec) + sum((a * b for a, b in zip(coefs, w)), ZERO) for base, coefs in case.u]
    return rho, u


def solve_germ_priority(net):
    """All stationary regimes compatible with the germ equations."""
    require_valid(net)
    return _solve_cases(net, germ_cases(_stripped(net)))


def _solve_cases(net, cases, br=None):
    mvec = [net.marking(p) for p in net.place_ids] + [ONE]
    br = br or branches(net)
    found = {}
    for case in cases:
        res = _evaluate_case(net, case, mvec)
        if res is None:
            continue
        rho_l, u_l = res
        rho = dict(zip(net.transitions, rho_l))
        u = dict(zip(net.transitions, u_l))
        key = tuple(rho_l) + tuple(u_l)
        if key in found:
            continue
        witness = check_germ_solution(net, rho, u, br)
        if witness is None:
            raise RuntimeError("germ selection produced an inconsistent regime (internal error)")
        selection = {q: br[q][k].place for q, k in zip(net.transitions, case.selection)}
        found[key] = GermSystemSolution(rho, u, witness, selection)
    return list(found.values())


def distinct_throughputs(solutions, transitions):
    seen = []
    for s in solutions:
        r = tuple(s.rho[q] for q in transitions)
        if r not in seen:
            seen.append(r)
    return seen


# ---------------------------------------------------------------------------
# throughput complex

@dataclass(frozen=True)
class Param:
    name: str
    lo: Fraction | None = ZERO
    hi: Fraction | None = None


def make_params(params):
    out = []
    for p in params:
        if isinstance(p, Param):
            out.append(p)
        elif isinstance(p, str):
            out.append(Param(p))
        else:
            name, lo, hi = p
            out.append(Param(name, None if lo is None else to_fraction(lo),
                             None if hi is None else to_fraction(hi)))
    return out


def domain_inequalities(params):
    k = len(params)
    rows = []
    for i, p in enumerate(params):
        if p.lo is not None:
            a = [ZERO] * k
            a[i] = -ONE
            rows.append((tuple(a), -p.lo))
        if p.hi is not None:
            a = [ZERO] * k
            a[i] = ONE
            rows.append((tuple(a), p.hi))
    return rows


@dataclass
class PhaseCell:
    label: str
    params: tuple
    inequalities: list  # [(coeffs, rhs)] meaning coeffs . m <= rhs
    throughput: dict  # q -> (coeffs, const)
    selections: list = field(default_factory=list)

    def contains(self, point, strict=False):
        return polyhedra.contains(self.inequalities, [to_fraction(x) for x in point], strict)

    def evaluate(self, point):
        pt = [to_fraction(x) for x in point]
        return {q: sum((a * x for a, x in zip(c, pt)), ZERO) + k
                for q, (c, k) in self.throughput.items()}

    def interior_point(self):
        return polyhedra.interior_point(self.inequalities, len(self.params))

    def to_dict(self):
        return {
            "label": self.label,
            "params": list(self.params),
            "inequalities": [{"coeffs": [fraction_str(x) for x in a], "rhs": fraction_str(b)}
                             for a, b in self.inequalities],
            "throughput": {q: {"coeffs": [fraction_str(x) for x in c], "const": fraction_str(k)}
                           for q, (c, k) in self.throughput.items()},
        }


def cells_json(cells):
    return json.dumps([c.to_dict() for c in cells], indent=2)


class _Projector:
    """Maps forms over (all places, 1) to forms over (params, 1)."""

    def __init__(self, net, params):
        self.names = [p.name for p in params]
        pids = net.place_ids
        missing = [nm for nm in self.names if nm not in pids]
        if missing:
            raise NetError(f"parameters {missing} are not places of the net")
        self.idx = [pids.index(nm) for nm in self.names]
        self.fixed = [(i, net.marking(p)) for i, p in enumerate(pids) if p not in self.names]

    def __call__(self, form):
        coeffs = tuple(form[i] for i in self.idx)
        const = form[-1] + sum((form[i] * m for i, m in self.fixed if form[i]), ZERO)
        return coeffs, const


def _finish_cell(ineqs, params, dim):
    ineqs = polyhedra.clean(list(ineqs) + domain_inequalities(params))
    if ineqs is None or not polyhedra.is_full_dimensional(ineqs, dim):
        return None
    return polyhedra.remove_redundant(ineqs, dim)


def _germ_cells(net, params):
    require_valid(net)
    cases = germ_cases(_stripped(net))
    proj = _Projector(net, params)
    k = len(params)
    br = branches(net)
    multi = multi_branch(net)
    qs = net.transitions
    cells = []
    for case in cases:
        if case.rho_free:
            log.info("selection %s leaves throughput undetermined; skipped", case.selection)
            continue
        if any(any(proj(c)[0]) or proj(c)[1] != 0 for c in case.conditions):
            continue
        rho = [proj(f) for f in case.rho]
        ineqs = []
        ok = True
        for i, q in enumerate(qs):
            c, const = rho[i]
            ineqs.append((tuple(-x for x in c), const))  # rho_q >= 0
            if q in case.positive and not any(c) and const == 0:
                ok = False
        if not ok:
            continue
        free_rows = []
        for q, kk, dr, (du, dw) in case.comparisons:
            c, const = proj(dr)
            if any(c) or const != 0:
                ineqs.append((tuple(-x for x in c), const))
            else:
                cu, ku = proj(du)
                if any(dw):
                    free_rows.append((tuple(-x for x in cu) + tuple(-x for x in dw), ku))
                else:
                    ineqs.append((tuple(-x for x in cu), ku))
        if free_rows:
            rows = [(a + (ZERO,) * case.nfree, b) for a, b in ineqs] + free_rows
            for _ in range(case.nfree):
                rows = polyhedra.fourier_motzkin(rows, k)
                rows = polyhedra.clean(rows)
                if rows is None:
                    break
            if rows is None:
                continue
            ineqs = rows
        final = _finish_cell(ineqs, params, k)
        if final is None:
            continue
        sel = {q: br[q][case.selection[i]].place for i, q in enumerate(qs)}
        label = ",".join(f"{q}:{sel[q]}" for q in qs if q in multi)
        cells.append(PhaseCell(label, tuple(proj.names), final,
                               {q: rho[i] for i, q in enumerate(qs)}, [sel]))
    return _merge(cells, k)


def _merge(cells, dim):
    out = []
    for cell in cells:
        for other in out:
            if other.throughput == cell.throughput and \
                    polyhedra.same_polyhedron(other.inequalities, cell.inequalities, dim):
                other.selections.extend(cell.selections)
                if cell.label not in other.label.split(" | "):
                    other.label = other.label + " | " + cell.label
                break
        else:
            out.append(cell)
    out.sort(key=lambda c: c.label)
    return out


def policy_throughput_forms(net, e, policy):
    """Affine map (over places + 1) of each throughput under a fixed policy."""
    model = petri_to_smdp(net, e)
    P, _, t = _policy_data(model, policy)
    cs = classify(P, exact=True)
    qs = net.transitions
    pids = net.place_ids
    width = len(pids) + 1
    n = len(qs)
    forms = [[ZERO] * width for _ in range(n)]
    for F, mu, phi in zip(cs.final_classes, cs.mu, cs.phi):
        time = sum((mu[j] * t[j] for j in F), ZERO)
        if time == 0:
            raise RuntimeError("zero-time final class")
        gain = [ZERO] * width
        for j in F:
            q = qs[j]
            p = net.q_in[q][policy[j]]
            coef = net.pi(q, p) / net.alpha_in[(p, q)] / e[q]
            gain[pids.index(p)] += mu[j] * coef / time
        for i in range(n):
            if phi[i]:
                _axpy(forms[i], phi[i] * e[qs[i]], gain)
    return forms


def _policy_cells(net, params, jobs=1):
    require_valid(net)
    e = stoichiometric_invariant(net)
    if e is None:
        raise NetError("net has no positive stoichiometric invariant")
    proj = _Projector(net, params)
    k = len(params)
    qs = net.transitions
    counts = [len(net.q_in[q]) for q in qs]
    total = 1
    for c in counts:
        total *= c
    if total > MAX_POLICIES:
        raise RuntimeError(f"{total} policies exceed the enumeration cap")
    groups = {}
    for pol in itertools.product(*(range(c) for c in counts)):
        forms = policy_throughput_forms(net, e, pol)
        key = tuple(proj(f) for f in forms)
        groups.setdefault(key, []).append(pol)
    maps = list(groups)
    multi = multi_branch(net)
    cells = []
    for key in maps:
        ineqs = []
        for other in maps:
            if other == key:
                continue
            for (c1, k1), (c2, k2) in zip(key, other):
                # key_q(m) <= other_q(m)
                a = tuple(x - y for x, y in zip(c1, c2))
                ineqs.append((a, k2 - k1))
        final = _finish_cell(ineqs, params, k)
        if final is None:
            continue
        pols = groups[key]
        parts = []
        sels = []
        for pol in pols:
            sels.append({q: net.q_in[q][a] for q, a in zip(qs, pol)})
        for i, q in enumerate(qs):
            if q in multi:
                used = sorted({net.q_in[q][pol[i]] for pol in pols})
                parts.append(f"{q}:{'+'.join(used)}")
        cells.append(PhaseCell(",".join(parts), tuple(proj.names), final,
                               {q: key[i] for i, q in enumerate(qs)}, sels))
    cells.sort(key=lambda c: c.label)
    return cells


def throughput_complex(net, params, method=None, jobs=1):
    """Full-dimensional cells of marking space on which throughputs are affine.

    method: "policy" (priority-free nets only) or "germ"; default picks
    "policy" when the net has no priority place.
    """
    params = make_params(params)
    if method is None:
        method = "policy" if net.priority_free else "germ"
    if method == "policy":
        if not net.priority_free:
            raise NetError("policy enumeration needs a priority-free net")
        return _policy_cells(net, params, jobs)
    if method == "germ":
        return _germ_cells(net, params)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# sampled phase diagram

def _grid_values(param, count):
    if param.lo is None or param.hi is None:
        raise ValueError(f"parameter {param.name} needs a finite range")
    if count == 1:
        return [(param.lo + param.hi) / 2]
    step = (param.hi - param.lo) / (count - 1)
    return [param.lo + i * step for i in range(count)]


def sample_phase_diagram(net, params, grid):
    """Solve the germ equations at each grid point.

    Returns a list of rows (point, label, rho dict or None).
    """
    params = make_params(params)
    if isinstance(grid, int):
        grid = [grid] * len(params)
    axes = [_grid_values(p, c) for p, c in zip(params, grid)]
    multi = multi_branch(net)
    require_valid(net)
    cases = germ_cases(_stripped(net))
    br = branches(net)
    rows = []
    for point in itertools.product(*axes):
        local = net.with_markings({p.name: v for p, v in zip(params, point)})
        sols = _solve_cases(local, cases, br)
        if not sols:
            rows.append((point, "none", None))
            continue
        labels = []
        for s in sols:
            lab = witness_label(s.witness, multi)
            if lab not in labels:
                labels.append(lab)
        rhos = distinct_throughputs(sols, net.transitions)
        rho = dict(zip(net.transitions, rhos[0]))
        rows.append((point, " | ".join(labels), rho))
    return rows


def samples_csv(rows, params, transitions):
    params = make_params(params)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([p.name for p in params] + ["label"] + [f"rho_{q}" for q in transitions])
    for point, label, rho in rows:
        vals = [fraction_str(x) for x in point]
        if rho is None:
            w.writerow(vals + [label] + [""] * len(transitions))
        else:
            w.writerow(vals + [label] + [fraction_str(rho[q]) for q in transitions])
    return buf.getvalue()
