"""Emergency call-center models: builders, closed forms and the phase table.

EMS-A: calls arrive at rate lambda, are picked up by one of N_A assistants,
and a fraction pi is forwarded to one of N_P physicians (assistant and
physician busy together for tau2, physician alone for tau3).

EMS-B adds a reservoir of N_R assistants monitoring urgent calls; a fraction
alpha of them is very urgent.  The reservoir pool gives priority to
z5 over z5p over z3, the physician pool to z5 over z5p.
"""

from dataclasses import dataclass, fields, replace
from fractions import Fraction

from .exact import ONE, ZERO, fraction_str, to_fraction
from .petri_model import build_net, normalize_preselection
from .polyhedra import same_polyhedron

ALIASES = {
    "lambda": "lam", "lam": "lam", "pi": "pi", "alpha": "alpha",
    "tau1": "tau1", "tau2": "tau2", "taus": "tau2", "tau_s": "tau2", "tau3": "tau3",
    "NA": "NA", "NP": "NP", "NR": "NR", "N_A": "NA", "N_P": "NP", "N_R": "NR",
}


def _frac_fields(obj):
    for f in fields(obj):
        object.__setattr__(obj, f.name, to_fraction(getattr(obj, f.name)))


@dataclass(frozen=True)
class EmsAParams:
    lam: Fraction = ONE
    pi: Fraction = Fraction(1, 2)
    tau1: Fraction = ONE
    tau2: Fraction = Fraction(2)
    tau3: Fraction = Fraction(4)
    NA: Fraction = Fraction(10)
    NP: Fraction = Fraction(10)

    def __post_init__(self):
        _frac_fields(self)
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be nonnegative")
        if not 0 < self.pi < 1:
            raise ValueError("pi must lie strictly between 0 and 1")

    @classmethod
    def from_mapping(cls, values, base=None):
        base = base or cls()
        kw = {}
        names = {f.name for f in fields(cls)}
        for k, v in values.items():
            key = ALIASES.get(k, k)
            if key not in names:
                raise KeyError(f"unknown parameter {k!r} for {cls.__name__}")
            kw[key] = to_fraction(v)
        return replace(base, **kw)

    def to_dict(self):
        return {f.name: fraction_str(getattr(self, f.name)) for f in fields(self)}


@dataclass(frozen=True)
class EmsBParams(EmsAParams):
    NR: Fraction = Fraction(10)
    alpha: Fraction = Fraction(1, 2)

    def __post_init__(self):
        super().__post_init__()
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie strictly between 0 and 1")

    @property
    def taus(self):
        return self.tau2


def build_ems_a(p=None, drawn=False):
    """EMS-A net.  With ``drawn`` the routing after tau1 is a single
    preselection place, returned in normal form."""
    p = p or EmsAParams()
    places = [("src", 1, p.lam), ("inc", 0, 0), ("NA", 0, p.NA), ("NP", 0, p.NP),
              ("svc", p.tau2, 0), ("con", p.tau3, 0)]
    arcs = [("src", "z0", 1), ("z0", "src", 1), ("z0", "inc", 1), ("inc", "z1", 1),
            ("NA", "z1", 1), ("z2", "NA", 1), ("z4", "NA", 1),
            ("NP", "z3", 1), ("z5", "NP", 1),
            ("z3", "svc", 1), ("svc", "z4", 1), ("z4", "con", 1), ("con", "z5", 1)]
    routing = {}
    if drawn:
        places.append(("arr", p.tau1, 0))
        arcs += [("z1", "arr", 1), ("arr", "z2", 1), ("arr", "z3", 1)]
        routing["arr"] = {"pi": {"z2": 1 - p.pi, "z3": p.pi}}
    else:
        places += [("arr2", p.tau1, 0), ("arr3", p.tau1, 0)]
        arcs += [("z1", "arr2", 1 - p.pi), ("arr2", "z2", 1),
                 ("z1", "arr3", p.pi), ("arr3", "z3", 1)]
    net = build_net(places, [f"z{k}" for k in range(6)], arcs, routing)
    return normalize_preselection(net) if drawn else net


def build_ems_b(p=None, drawn=False):
    p = p or EmsBParams()
    ts = p.tau2
    transitions = ["z0", "z1", "z2", "z3", "z4", "z5", "z5p", "z6", "z6p", "z7", "z7p"]
    places = [("src", 1, p.lam), ("inc", 0, 0), ("NA", 0, p.NA), ("NR", 0, p.NR),
              ("NP", 0, p.NP), ("sync1", ts, 0), ("sync2", ts, 0), ("sync3", ts, 0),
              ("con", p.tau3, 0), ("con2", p.tau3, 0)]
    arcs = [("src", "z0", 1), ("z0", "src", 1), ("z0", "inc", 1), ("inc", "z1", 1),
            ("NA", "z1", 1), ("z2", "NA", 1), ("z4", "NA", 1),
            ("NR", "z3", 1), ("NR", "z5", 1), ("NR", "z5p", 1),
            ("z4", "NR", 1), ("z6", "NR", 1), ("z6p", "NR", 1),
            ("z3", "sync1", 1), ("sync1", "z4", 1),
            ("NP", "z5", 1), ("NP", "z5p", 1), ("z7", "NP", 1), ("z7p", "NP", 1),
            ("z5", "sync2", 1), ("sync2", "z6", 1), ("z5p", "sync3", 1), ("sync3", "z6p", 1),
            ("z6", "con", 1), ("con", "z7", 1), ("z6p", "con2", 1), ("con2", "z7p", 1)]
    routing = {"NR": {"order": ["z5", "z5p", "z3"]}, "NP": {"order": ["z5", "z5p"]}}
    if drawn:
        places += [("arr", p.tau1, 0), ("wait", 0, 0)]
        arcs += [("z1", "arr", 1), ("arr", "z2", 1), ("arr", "z3", 1),
                 ("z4", "wait", 1), ("wait", "z5", 1), ("wait", "z5p", 1)]
        routing["arr"] = {"pi": {"z2": 1 - p.pi, "z3": p.pi}}
        routing["wait"] = {"pi": {"z5": p.alpha, "z5p": 1 - p.alpha}}
    else:
        places += [("arr2", p.tau1, 0), ("arr3", p.tau1, 0), ("w5", 0, 0), ("w5p", 0, 0)]
        arcs += [("z1", "arr2", 1 - p.pi), ("arr2", "z2", 1),
                 ("z1", "arr3", p.pi), ("arr3", "z3", 1),
                 ("z4", "w5", p.alpha), ("w5", "z5", 1),
                 ("z4", "w5p", 1 - p.alpha), ("w5p", "z5p", 1)]
    net = build_net(places, transitions, arcs, routing)
    return normalize_preselection(net) if drawn else net


def ems_a_rho_star(p):
    return min(p.lam, p.NA / (p.tau1 + p.pi * p.tau2), p.NP / (p.pi * (p.tau2 + p.tau3)))


def ems_a_closed_form(p):
    r = ems_a_rho_star(p)
    return {"z0": p.lam, "z1": r, "z2": (1 - p.pi) * r,
            "z3": p.pi * r, "z4": p.pi * r, "z5": p.pi * r}


# ---------------------------------------------------------------------------
# EMS-B phase table; affine forms are tuples (c_NA, c_NR, c_NP, const)

PHASES = ("1", "4a", "4", "2", "5a", "5", "3", "6a", "6")
PHASE_PARAMS = ("NA", "NR", "NP")


def _f(na=0, nr=0, np_=0, c=0):
    return (Fraction(na), Fraction(nr), Fraction(np_), Fraction(c))


def _lin(*terms):
    out = [ZERO] * 4
    for k, form in terms:
        for i in range(4):
            out[i] += k * form[i]
    return tuple(out)


def ems_b_phase_rows(p):
    """Nine phases as (label, [(form, strict)] meaning form >= 0 (> 0 when
    strict), {"z1": form, "z5": form, "z5p": form})."""
    ka = p.tau1 + p.pi * p.tau2
    ts = p.tau2
    s = ts + p.tau3
    lam, pi, a = p.lam, p.pi, p.alpha
    A = _f(na=1 / ka)  # N_A / (tau1 + pi tau_s)
    R = _f(nr=1 / ts)  # N_R / tau_s
    R2 = _f(nr=1 / (2 * ts))
    P = _f(np_=1 / s)  # N_P / (tau_s + tau3)
    L = _f(c=lam)
    zero = _f()

    def ge(x, y, strict=False):
        return (_lin((1, x), (-1, y)), strict)

    rows = []
    cong_a = [ge(A, L)]
    rows.append(("1", cong_a + [ge(R2, _lin((pi, L))), ge(P, _lin((pi, L)))],
                 {"z1": L, "z5": _lin((pi * a, L)), "z5p": _lin((pi * (1 - a), L))}))
    rows.append(("4a", cong_a + [ge(R, _lin((pi, L), (1, P))), ge(P, _lin((pi * a, L))),
                                 ge(_lin((pi, L)), P)],
                 {"z1": L, "z5": _lin((pi * a, L)), "z5p": _lin((1, P), (-pi * a, L))}))
    rows.append(("4", cong_a + [ge(R, _lin((pi, L), (1, P))), ge(_lin((pi * a, L)), P)],
                 {"z1": L, "z5": P, "z5p": zero}))
    sat_a = [ge(L, A, strict=True)]
    rows.append(("2", sat_a + [ge(R2, _lin((pi, A))), ge(P, _lin((pi, A)))],
                 {"z1": A, "z5": _lin((pi * a, A)), "z5p": _lin((pi * (1 - a), A))}))
    rows.append(("5a", sat_a + [ge(R, _lin((pi, A), (1, P))), ge(P, _lin((pi * a, A))),
                                ge(_lin((pi, A)), P)],
                 {"z1": A, "z5": _lin((pi * a, A)), "z5p": _lin((1, P), (-pi * a, A))}))
    rows.append(("5", sat_a + [ge(R, _lin((pi, A), (1, P))), ge(_lin((pi * a, A)), P)],
                 {"z1": A, "z5": P, "z5p": zero}))
    rows.append(("3", [ge(_lin((pi, L)), R2, strict=True), ge(_lin((pi, A)), R2), ge(P, R2)],
                 {"z1": _lin((1 / pi, R2)), "z5": _lin((a, R2)), "z5p": _lin((1 - a, R2))}))
    free_r = _lin((1, R), (-1, P))  # N_R/tau_s - N_P/(tau_s+tau3)
    six = [ge(_lin((pi, L)), free_r, strict=True), ge(_lin((pi, A)), free_r)]
    rows.append(("6a", six + [ge(P, _lin((a / (1 + a), R))), ge(R2, P)],
                 {"z1": _lin((1 / pi, free_r)), "z5": _lin((a, free_r)),
                  "z5p": _lin((1 + a, P), (-a, R))}))
    rows.append(("6", six + [ge(_lin((a / (1 + a), R)), P)],
                 {"z1": _lin((1 / pi, free_r)), "z5": P, "z5p": zero}))
    return rows


def _eval(form, point):
    return sum((c * x for c, x in zip(form[:3], point)), ZERO) + form[3]


def ems_b_phase_inequalities(p, label):
    """Phase inequalities in the a.m <= b convention over (NA, NR, NP)."""
    for lab, ineqs, _ in ems_b_phase_rows(p):
        if lab == label:
            return [(tuple(-c for c in f[:3]), f[3]) for f, _ in ineqs]
    raise KeyError(label)


@dataclass(frozen=True)
class PhaseValue:
    labels: tuple
    z1: Fraction
    z5: Fraction
    z5p: Fraction

    @property
    def label(self):
        return self.labels[0]


def ems_b_phase_table(p):
    """Phase of the point (p.NA, p.NR, p.NP) and its throughputs.

    Inequalities are read as closed, so boundary points return every
    adjacent phase."""
    point = (p.NA, p.NR, p.NP)
    hits = []
    for lab, ineqs, rho in ems_b_phase_rows(p):
        if all(_eval(f, point) >= 0 for f, _ in ineqs):
            hits.append((lab, {q: _eval(f, point) for q, f in rho.items()}))
    if not hits:
        raise RuntimeError("no phase contains this point")
    rho = hits[0][1]
    return PhaseValue(tuple(lab for lab, _ in hits), rho["z1"], rho["z5"], rho["z5p"])


def ems_b_throughputs(p):
    """All transition throughputs implied by the phase table."""
    v = ems_b_phase_table(p)
    r3 = p.pi * v.z1
    return {"z0": p.lam, "z1": v.z1, "z2": (1 - p.pi) * v.z1, "z3": r3, "z4": r3,
            "z5": v.z5, "z5p": v.z5p, "z6": v.z5, "z6p": v.z5p, "z7": v.z5, "z7p": v.z5p}


def name_cells(cells, p):
    """Map each computed cell to the phase label with the same throughput
    maps on z1, z5, z5p and the same polyhedron (domain rows ignored)."""
    names = {}
    rows = ems_b_phase_rows(p)
    for k, cell in enumerate(cells):
        if tuple(cell.params) != PHASE_PARAMS:
            raise ValueError("cells must be over (NA, NR, NP)")
        for lab, ineqs, rho in rows:
            if any(cell.throughput[q] != (tuple(rho[q][:3]), rho[q][3]) for q in rho):
                continue
            mine = [(tuple(-c for c in f[:3]), f[3]) for f, _ in ineqs]
            theirs = [r for r in cell.inequalities if not _is_domain_row(r)]
            if same_polyhedron(mine + _nonneg(), theirs + _nonneg(), 3):
                names[k] = lab
                break
    return names


def _nonneg():
    return [((-ONE, ZERO, ZERO), ZERO), ((ZERO, -ONE, ZERO), ZERO), ((ZERO, ZERO, -ONE), ZERO)]


def _is_domain_row(row):
    a, b = row
    return b == 0 and sum(1 for x in a if x) == 1 and any(x < 0 for x in a)


# ---------------------------------------------------------------------------
# paradox

@dataclass
class ParadoxReport:
    np_values: list
    germ_rho5: list
    table_rho5: list
    phases: list
    decreasing: tuple | None  # (first N_P, last N_P) of the strictly decreasing stretch
    agree: bool

    def to_dict(self):
        return {
            "NP": [fraction_str(x) for x in self.np_values],
            "rho5_germ": [fraction_str(x) for x in self.germ_rho5],
            "rho5_table": [fraction_str(x) for x in self.table_rho5],
            "phases": [list(x) for x in self.phases],
            "decreasing": None if self.decreasing is None else [fraction_str(x) for x in self.decreasing],
            "agree": self.agree,
        }


def paradox_check(p, np_values):
    """Sweep N_P and compare the germ solution of rho5 with the table."""
    from .stationary import solve_germ_priority
    if not (p.lam > 0 and p.NA > 0 and p.NR > 0):
        raise ValueError("paradox_check needs lambda, N_A and N_R positive")
    net = build_ems_b(p)
    xs = [to_fraction(x) for x in np_values]
    germ, table, phases = [], [], []
    for x in xs:
        q = replace(p, NP=x)
        sols = solve_germ_priority(net.with_markings({"NP": x}))
        vals = sorted({s.rho["z5"] for s in sols})
        if len(vals) != 1:
            raise RuntimeError(f"expected one stationary throughput at N_P={x}, got {vals}")
        germ.append(vals[0])
        v = ems_b_phase_table(q)
        table.append(v.z5)
        phases.append(v.labels)
    allowed = {"6", "6a", "3"}
    if not all(set(ph) & allowed for ph in phases):
        raise RuntimeError("sweep leaves the phases 6, 6a, 3")
    dec = None
    for i in range(len(xs) - 1):
        if germ[i + 1] < germ[i]:
            dec = (xs[i], xs[i + 1]) if dec is None else (dec[0], xs[i + 1])
    return ParadoxReport(xs, germ, table, phases, dec, germ == table)


def paradox_params(p=None):
    """Parameters in the paradox regime: N_A large, N_R < pi lambda tau_s."""
    p = p or EmsBParams()
    na = 2 * p.lam * (p.tau1 + p.pi * p.tau2) + 1
    nr = p.pi * p.lam * p.tau2 / 2
    return replace(p, NA=na, NR=nr)

