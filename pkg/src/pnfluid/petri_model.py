"""Timed Petri nets with synchronization, preselection and priority routing."""

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import networkx as nx

from .exact import ONE, ZERO, fraction_str, nullspace, to_fraction
from .simplex import linprog


class NetError(ValueError):
    """Structurally invalid net description."""


@dataclass(frozen=True)
class Place:
    id: str
    tau: Fraction = ZERO
    marking: Fraction = ZERO


@dataclass(frozen=True)
class Sync:
    kind = "sync"


@dataclass(frozen=True)
class Preselection:
    """Proportional routing; ``schedule`` = (L, {q: frozenset J_q}) for discrete use."""

    pi: tuple
    schedule: tuple | None = None
    kind = "preselection"

    def share(self, q):
        return dict(self.pi)[q]


@dataclass(frozen=True)
class Priority:
    order: tuple  # highest priority first
    kind = "priority"

    def higher(self, q):
        return self.order[: self.order.index(q)]

    def lower(self, q):
        return self.order[self.order.index(q) + 1:]


SYNC = Sync()


@dataclass(frozen=True)
class PetriNet:
    places: tuple
    transitions: tuple
    pre: tuple  # ((p, q, alpha_qp), ...)   place -> transition
    post: tuple  # ((q, p, alpha_pq), ...)  transition -> place
    routing: tuple = ()  # ((p, rule), ...)

    def __post_init__(self):
        pids = [p.id for p in self.places]
        if len(set(pids)) != len(pids):
            raise NetError("duplicate place id")
        if len(set(self.transitions)) != len(self.transitions):
            raise NetError("duplicate transition id")
        if set(pids) & set(self.transitions):
            raise NetError("place and transition ids must be distinct")
        tset = set(self.transitions)
        pset = set(pids)
        seen = set()
        for p, q, w in self.pre:
            if p not in pset or q not in tset:
                raise NetError(f"arc {p}->{q} references unknown ids")
            if (p, q) in seen:
                raise NetError(f"duplicate arc {p}->{q}")
            seen.add((p, q))
        for q, p, w in self.post:
            if p not in pset or q not in tset:
                raise NetError(f"arc {q}->{p} references unknown ids")
            if (q, p) in seen:
                raise NetError(f"duplicate arc {q}->{p}")
            seen.add((q, p))
        routed = [p for p, _ in self.routing]
        if len(set(routed)) != len(routed):
            raise NetError("a place carries at most one routing rule "
                           "(priority and preselection cannot be combined)")
        for p in routed:
            if p not in pset:
                raise NetError(f"routing for unknown place {p}")

    # lookups -----------------------------------------------------------
    @cached_property
    def _place(self):
        return {p.id: p for p in self.places}

    @cached_property
    def _rule(self):
        return dict(self.routing)

    @cached_property
    def place_ids(self):
        return tuple(p.id for p in self.places)

    @cached_property
    def alpha_in(self):
        """(p, q) -> alpha_qp, the weight of the arc p -> q."""
        return {(p, q): w for p, q, w in self.pre}

    @cached_property
    def alpha_out(self):
        """(q, p) -> alpha_pq, the weight of the arc q -> p."""
        return {(q, p): w for q, p, w in self.post}

    @cached_property
    def q_in(self):
        d = {q: [] for q in self.transitions}
        for p, q, _ in self.pre:
            d[q].append(p)
        return {q: tuple(v) for q, v in d.items()}

    @cached_property
    def q_out(self):
        d = {q: [] for q in self.transitions}
        for q, p, _ in self.post:
            d[q].append(p)
        return {q: tuple(v) for q, v in d.items()}

    @cached_property
    def p_in(self):
        d = {p: [] for p in self.place_ids}
        for q, p, _ in self.post:
            d[p].append(q)
        return {p: tuple(v) for p, v in d.items()}

    @cached_property
    def p_out(self):
        d = {p: [] for p in self.place_ids}
        for p, q, _ in self.pre:
            d[p].append(q)
        return {p: tuple(v) for p, v in d.items()}

    def place(self, pid):
        return self._place[pid]

    def tau(self, pid):
        return self._place[pid].tau

    def marking(self, pid):
        return self._place[pid].marking

    def rule(self, pid):
        return self._rule.get(pid, SYNC)

    def pi(self, q, p):
        r = self.rule(p)
        return r.share(q) if isinstance(r, Preselection) else ONE

    def transition_class(self, q):
        kinds = {self.rule(p).kind for p in self.q_in[q]}
        if "priority" in kinds:
            return "prio"
        if "preselection" in kinds:
            return "psel"
        return "sync"

    @property
    def max_tau(self):
        return max((p.tau for p in self.places), default=ZERO)

    @property
    def priority_free(self):
        return not any(isinstance(r, Priority) for _, r in self.routing)

    def with_markings(self, markings):
        """Copy of the net with some initial markings replaced."""
        unknown = set(markings) - set(self.place_ids)
        if unknown:
            raise NetError(f"unknown places {sorted(unknown)}")
        places = tuple(
            Place(p.id, p.tau, to_fraction(markings[p.id])) if p.id in markings else p
            for p in self.places
        )
        return PetriNet(places, self.transitions, self.pre, self.post, self.routing)

    # serialization -------------------------------------------------------
    def to_dict(self):
        routing = []
        for p, r in self.routing:
            if isinstance(r, Preselection):
                entry = {"place": p, "kind": "preselection",
                         "pi": {q: fraction_str(v) for q, v in r.pi}}
                if r.schedule is not None:
                    L, parts = r.schedule
                    entry["schedule"] = {"L": L, "J": {q: sorted(J) for q, J in parts}}
                routing.append(entry)
            elif isinstance(r, Priority):
                routing.append({"place": p, "kind": "priority", "order": list(r.order)})
        return {
            "places": [{"id": p.id, "tau": fraction_str(p.tau), "marking": fraction_str(p.marking)}
                       for p in self.places],
            "transitions": list(self.transitions),
            "arcs": [{"from": p, "to": q, "weight": fraction_str(w)} for p, q, w in self.pre]
            + [{"from": q, "to": p, "weight": fraction_str(w)} for q, p, w in self.post],
            "routing": routing,
        }


def build_net(places, transitions, arcs, routing=None):
    """Convenience constructor.

    places: iterable of (id, tau, marking); arcs: iterable of
    (source, target, weight) with direction inferred from the ids;
    routing: {place: {"pi": {...}} | {"order": [...]}} or rule objects.
    """
    places = tuple(Place(pid, to_fraction(tau), to_fraction(m)) for pid, tau, m in places)
    pids = {p.id for p in places}
    transitions = tuple(transitions)
    tids = set(transitions)
    pre, post = [], []
    for src, dst, w in arcs:
        w = to_fraction(w)
        if src in pids and dst in tids:
            pre.append((src, dst, w))
        elif src in tids and dst in pids:
            post.append((src, dst, w))
        else:
            raise NetError(f"arc {src}->{dst} must join a place and a transition")
    rules = []
    for p, spec in (routing or {}).items():
        rules.append((p, _make_rule(spec)))
    return PetriNet(places, transitions, tuple(pre), tuple(post), tuple(rules))


def _make_rule(spec):
    if isinstance(spec, (Sync, Preselection, Priority)):
        return spec
    kind = spec.get("kind")
    if kind is None:
        kind = "preselection" if "pi" in spec else "priority" if "order" in spec else None
    if kind == "preselection":
        pi = tuple((q, to_fraction(v)) for q, v in spec["pi"].items())
        schedule = None
        if spec.get("schedule") is not None:
            sch = spec["schedule"]
            schedule = (int(sch["L"]), tuple((q, frozenset(int(j) for j in J))
                                             for q, J in sch["J"].items()))
        return Preselection(pi, schedule)
    if kind == "priority":
        return Priority(tuple(spec["order"]))
    if kind == "sync":
        return SYNC
    raise NetError(f"unknown routing kind {kind!r}")


def net_from_dict(data):
    try:
        places = [(d["id"], d.get("tau", 0), d.get("marking", 0)) for d in data["places"]]
        transitions = list(data["transitions"])
        arcs = [(a["from"], a["to"], a.get("weight", 1)) for a in data.get("arcs", [])]
        routing = {}
        for entry in data.get("routing", []):
            p = entry["place"]
            if p in routing:
                raise NetError(f"place {p} has several routing entries")
            routing[p] = entry
    except (KeyError, TypeError) as exc:
        raise NetError(f"malformed net description: {exc}") from exc
    try:
        return build_net(places, transitions, arcs, routing)
    except (ValueError, ZeroDivisionError) as exc:
        raise NetError(str(exc)) from exc


def load_net(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NetError(f"invalid JSON: {exc}") from exc
    return net_from_dict(data)


def dump_net(net, path=None):
    text = json.dumps(net.to_dict(), indent=2)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return text


# ---------------------------------------------------------------------------
# validation

@dataclass
class CheckResult:
    name: str
    passed: bool
    message: str = ""
    witness: list = field(default_factory=list)


@dataclass
class ValidationReport:
    checks: list

    @property
    def ok(self):
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c for c in self.checks if not c.passed]

    def get(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {"ok": self.ok,
                "checks": [{"name": c.name, "passed": c.passed, "message": c.message,
                            "witness": c.witness} for c in self.checks]}


def _zero_time_graph(net):
    g = nx.DiGraph()
    zero = {p.id for p in net.places if p.tau == 0}
    for p, q, _ in net.pre:
        if p in zero:
            g.add_edge(("p", p), ("q", q))
    for q, p, _ in net.post:
        if p in zero:
            g.add_edge(("q", q), ("p", p))
    return g


def _cycle(g):
    try:
        edges = nx.find_cycle(g)
    except nx.NetworkXNoCycle:
        return None
    return [u for u, _ in edges] + [edges[0][0]]


def priority_graph(net):
    g = nx.DiGraph()
    g.add_nodes_from(net.transitions)
    for p, r in net.routing:
        if isinstance(r, Priority):
            for a, b in zip(r.order, r.order[1:]):
                g.add_edge(a, b)
    return g


def validate_net(net):
    checks = []

    problems = []
    for p in net.places:
        if p.tau < 0:
            problems.append(f"place {p.id} has negative holding time")
        if p.marking < 0:
            problems.append(f"place {p.id} has negative marking")
    for p, q, w in net.pre:
        if w <= 0:
            problems.append(f"arc {p}->{q} has nonpositive weight")
    for q, p, w in net.post:
        if w <= 0:
            problems.append(f"arc {q}->{p} has nonpositive weight")
    for q in net.transitions:
        if not net.q_in[q]:
            problems.append(f"transition {q} has no upstream place")
    for pid in net.place_ids:
        r = net.rule(pid)
        outs = set(net.p_out[pid])
        if isinstance(r, Sync) and len(outs) > 1:
            problems.append(f"place {pid} has several downstream transitions but no routing rule")
        if isinstance(r, Priority) and (set(r.order) != outs or len(r.order) != len(outs)):
            problems.append(f"priority order of {pid} must list its downstream transitions once each")
    checks.append(CheckResult("structure", not problems, "; ".join(problems)))

    cyc = _cycle(_zero_time_graph(net))
    if cyc is None:
        checks.append(CheckResult("non_zeno", True))
    else:
        checks.append(CheckResult("non_zeno", False, "circuit with zero holding times",
                                  [node for _, node in cyc]))

    cyc = _cycle(priority_graph(net))
    if cyc is None:
        checks.append(CheckResult("priority_compatible", True))
    else:
        checks.append(CheckResult("priority_compatible", False,
                                  "union of priority orders has a cycle", cyc))

    bad = []
    for pid in net.place_ids:
        if isinstance(net.rule(pid), Preselection):
            for q in net.p_out[pid]:
                if len(net.q_in[q]) > 1:
                    bad.append(q)
    checks.append(CheckResult("preselection_normal_form", not bad,
                              "transitions below a preselection place have other inputs" if bad else "",
                              sorted(set(bad))))

    bad = []
    for pid in net.place_ids:
        r = net.rule(pid)
        if isinstance(r, Preselection):
            pi = dict(r.pi)
            if set(pi) != set(net.p_out[pid]) or any(v < 0 for v in pi.values()) \
                    or sum(pi.values()) != 1:
                bad.append(pid)
            if r.schedule is not None:
                L, parts = r.schedule
                blocks = [J for _, J in parts]
                union = set().union(*blocks) if blocks else set()
                if union != set(range(1, L + 1)) or sum(len(J) for J in blocks) != L:
                    bad.append(pid)
    checks.append(CheckResult("preselection_stochastic", not bad,
                              "preselection vectors must be stochastic over p_out" if bad else "",
                              sorted(set(bad))))
    return ValidationReport(checks)


def require_valid(net, allow_non_normal=False):
    report = validate_net(net)
    failed = [c for c in report.failed()
              if not (allow_non_normal and c.name == "preselection_normal_form")]
    if failed:
        msg = "; ".join(f"{c.name}: {c.message} {c.witness or ''}".strip() for c in failed)
        raise NetError(msg)
    return report


def resolution_order(net):
    """Order in which transitions are evaluated inside one time step.

    q depends on q' at the same instant when q' feeds a zero-time place of
    q, or when q' has higher priority than q on a shared place.
    """
    g = nx.DiGraph()
    g.add_nodes_from(net.transitions)
    for q in net.transitions:
        for p in net.q_in[q]:
            if net.tau(p) == 0:
                for q2 in net.p_in[p]:
                    g.add_edge(q2, q)
            r = net.rule(p)
            if isinstance(r, Priority):
                for q2 in r.higher(q):
                    g.add_edge(q2, q)
    try:
        return tuple(nx.lexicographical_topological_sort(g, key=net.transitions.index))
    except nx.NetworkXUnfeasible as exc:
        raise NetError("instantaneous dependencies are cyclic") from exc


# ---------------------------------------------------------------------------
# preselection normal form

def normalize_preselection(net):
    """Insert zero-time relays below preselection places whose downstream
    transitions have other inputs, so every such transition reads only p."""
    require_valid(net, allow_non_normal=True)
    places = list(net.places)
    transitions = list(net.transitions)
    pre = list(net.pre)
    post = list(net.post)
    routing = dict(net.routing)
    pids = set(net.place_ids)
    tids = set(net.transitions)

    def fresh(base, taken):
        name = base
        k = 1
        while name in taken:
            k += 1
            name = f"{base}{k}"
        taken.add(name)
        return name

    for pid in net.place_ids:
        r = net.rule(pid)
        if not isinstance(r, Preselection):
            continue
        outs = net.p_out[pid]
        if all(len(net.q_in[q]) == 1 for q in outs):
            continue
        mapping = {}
        for q in outs:
            qs = fresh(f"{q}*", tids)
            ps = fresh(f"{pid}_{q}", pids)
            mapping[q] = qs
            transitions.append(qs)
            places.append(Place(ps, ZERO, ZERO))
            pre = [(p, qs if (p == pid and qq == q) else qq, w) for p, qq, w in pre]
            post.append((qs, ps, ONE))
            pre.append((ps, q, ONE))
        pi = tuple((mapping[q], v) for q, v in r.pi)
        schedule = None
        if r.schedule is not None:
            L, parts = r.schedule
            schedule = (L, tuple((mapping[q], J) for q, J in parts))
        routing[pid] = Preselection(pi, schedule)
    out = PetriNet(tuple(places), tuple(transitions), tuple(pre), tuple(post),
                   tuple(routing.items()))
    require_valid(out)
    return out


# ---------------------------------------------------------------------------
# stoichiometric invariants

@dataclass(frozen=True)
class StoichiometricInvariant:
    e: dict
    cone_dim: int

    def __getitem__(self, q):
        return self.e[q]

    def vector(self, transitions):
        return [self.e[q] for q in transitions]


def invariant_rows(net):
    """Rows of the homogeneous system e_q = pi alpha^-1 sum alpha e_q'."""
    idx = {q: i for i, q in enumerate(net.transitions)}
    rows = []
    for q in net.transitions:
        for p in net.q_in[q]:
            row = [ZERO] * len(idx)
            row[idx[q]] += ONE
            coef = net.pi(q, p) / net.alpha_in[(p, q)]
            for q2 in net.p_in[p]:
                row[idx[q2]] -= coef * net.alpha_out[(q2, p)]
            rows.append(row)
    return rows


def stoichiometric_invariant(net):
    """Positive solution of the balance equations with min entry 1, or None."""
    if not net.priority_free:
        raise NetError("stoichiometric invariants are defined for priority-free nets")
    require_valid(net)
    rows = invariant_rows(net)
    n = len(net.transitions)
    basis = nullspace(rows, n)
    dim = len(basis)
    if dim == 0:
        return None
    if dim == 1:
        v = basis[0]
        if all(x < 0 for x in v):
            v = [-x for x in v]
        if all(x > 0 for x in v):
            low = min(v)
            return StoichiometricInvariant(
                {q: x / low for q, x in zip(net.transitions, v)}, dim)
        return None
    # several directions: minimize sum(e) subject to balance and e >= 1
    res = linprog([-ONE] * n, A_ub=[[-ONE if i == j else ZERO for j in range(n)] for i in range(n)],
                  b_ub=[-ONE] * n, A_eq=rows, b_eq=[ZERO] * len(rows))
    if res.status != "optimal":
        return None
    low = min(res.x)
    return StoichiometricInvariant({q: x / low for q, x in zip(net.transitions, res.x)}, dim)


def is_invariant(net, e):
    for q in net.transitions:
        for p in net.q_in[q]:
            coef = net.pi(q, p) / net.alpha_in[(p, q)]
            if e[q] != coef * sum((net.alpha_out[(q2, p)] * e[q2] for q2 in net.p_in[p]), ZERO):
                return False
    return True
