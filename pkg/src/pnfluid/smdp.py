"""Semi-Markov decision processes built from priority-free Petri nets.

Costs are minimized. Average-cost solvers expect an undiscounted model
(every discount factor equal to 1).
"""

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

from .exact import ONE, ZERO, fraction_str, solve
from .markov import classify
from .petri_model import NetError, require_valid
from .simplex import linprog

MAX_POLICIES = 2 ** 20


class SmdpError(RuntimeError):
    pass


@dataclass(frozen=True)
class Action:
    name: str
    cost: Fraction
    time: Fraction
    discount: Fraction
    row: tuple  # transition probabilities over all states


@dataclass(frozen=True)
class SmdpModel:
    states: tuple
    actions: tuple  # actions[i] is a tuple of Action

    def __post_init__(self):
        n = len(self.states)
        for i, acts in enumerate(self.actions):
            if not acts:
                raise SmdpError(f"state {self.states[i]} has no action")
            for a in acts:
                if len(a.row) != n or any(x < 0 for x in a.row) or sum(a.row) != 1:
                    raise SmdpError(f"bad probability row for {self.states[i]}/{a.name}")
                if a.time < 0:
                    raise SmdpError("negative holding time")

    @property
    def n(self):
        return len(self.states)

    @property
    def undiscounted(self):
        return all(a.discount == 1 for acts in self.actions for a in acts)

    def policy_count(self):
        return math.prod(len(a) for a in self.actions)

    def action_index(self, i, name):
        for k, a in enumerate(self.actions[i]):
            if a.name == name:
                return k
        raise KeyError(name)

    def zero_time_cycle(self):
        import networkx as nx
        g = nx.DiGraph()
        for i, acts in enumerate(self.actions):
            for a in acts:
                if a.time == 0:
                    for j, x in enumerate(a.row):
                        if x:
                            g.add_edge(i, j)
        try:
            return [u for u, _ in nx.find_cycle(g)]
        except nx.NetworkXNoCycle:
            return None

    def to_dict(self):
        return {
            "states": list(self.states),
            "actions": [
                [{"name": a.name, "cost": fraction_str(a.cost), "time": fraction_str(a.time),
                  "discount": fraction_str(a.discount),
                  "row": {self.states[j]: fraction_str(x) for j, x in enumerate(a.row) if x}}
                 for a in acts]
                for acts in self.actions
            ],
        }

    def dump(self):
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class AverageCostSolution:
    g: list
    h: list
    policy: tuple
    iterations: int = 0


def petri_to_smdp(net, e=None):
    """States are transitions, actions at q are the places of q_in.

    Without ``e`` the model is the discounted one (discount kappa); with a
    stoichiometric invariant it is the undiscounted rescaled model.
    """
    if not net.priority_free:
        raise NetError("priority routing has no SMDP counterpart")
    require_valid(net)
    idx = {q: i for i, q in enumerate(net.transitions)}
    n = len(idx)
    if e is not None and not isinstance(e, dict):
        e = getattr(e, "e", None)
        if e is None:
            raise SmdpError("a stoichiometric invariant is required for the undiscounted model")
    actions = []
    for q in net.transitions:
        acts = []
        for p in net.q_in[q]:
            coef = net.pi(q, p) / net.alpha_in[(p, q)]
            cost = coef * net.marking(p)
            btil = [ZERO] * n
            for q2 in net.p_in[p]:
                btil[idx[q2]] += coef * net.alpha_out[(q2, p)]
            kappa = sum(btil, ZERO)
            if e is None:
                if kappa == 0:
                    row = [ZERO] * n
                    row[idx[q]] = ONE
                else:
                    row = [b / kappa for b in btil]
                acts.append(Action(p, cost, net.tau(p), kappa, tuple(row)))
            else:
                eq = e[q]
                row = [btil[j] * e[q2] / eq for j, q2 in enumerate(net.transitions)]
                if sum(row, ZERO) != 1:
                    raise SmdpError("e is not a stoichiometric invariant of this net")
                acts.append(Action(p, cost / eq, net.tau(p), ONE, tuple(row)))
        actions.append(tuple(acts))
    return SmdpModel(tuple(net.transitions), tuple(actions))


# ---------------------------------------------------------------------------
# policy evaluation

def _policy_data(model, policy):
    acts = [model.actions[i][policy[i]] for i in range(model.n)]
    P = [list(a.row) for a in acts]
    r = [a.cost for a in acts]
    t = [a.time for a in acts]
    return P, r, t


def evaluate_policy(model, policy, structure=None):
    """Gain g and bias h of a stationary policy (tuple of action indices).

    h vanishes at the least-indexed state of each final class.
    """
    if not model.undiscounted:
        raise SmdpError("average-cost evaluation needs an undiscounted model")
    policy = tuple(policy)
    P, r, t = _policy_data(model, policy)
    n = model.n
    cs = structure or classify(P, exact=True)
    g = [ZERO] * n
    gain_of = []
    for F, mu in zip(cs.final_classes, cs.mu):
        time = sum((mu[j] * t[j] for j in F), ZERO)
        if time == 0:
            raise SmdpError(f"final class {list(F)} is travelled in zero time")
        gain_of.append(sum((mu[j] * r[j] for j in F), ZERO) / time)
    for k, phi in enumerate(cs.phi):
        for i in range(n):
            if phi[i]:
                g[i] += phi[i] * gain_of[k]
    # h = r - t g + P h with anchors
    anchors = {F[0] for F in cs.final_classes}
    A = []
    b = []
    for i in range(n):
        row = [-x for x in P[i]]
        row[i] += ONE
        if i in anchors:
            row = [ZERO] * n
            row[i] = ONE
            b.append(ZERO)
        else:
            b.append(r[i] - t[i] * g[i])
        A.append(row)
    h = solve(A, b)
    return g, h


def _q_value(action, g):
    return sum((x * gj for x, gj in zip(action.row, g) if x), ZERO)


def _bias_value(action, gi, h):
    return action.cost - action.time * gi + sum((x * hj for x, hj in zip(action.row, h) if x), ZERO)


def optimality_gaps(model, g, h, policy=None):
    """Return (ok, message); checks both optimality equations exactly."""
    for i, acts in enumerate(model.actions):
        vals = [_q_value(a, g) for a in acts]
        best = min(vals)
        if best != g[i]:
            return False, f"gain equation fails at {model.states[i]}"
        star = [k for k, v in enumerate(vals) if v == best]
        bias = {k: _bias_value(acts[k], g[i], h) for k in star}
        bbest = min(bias.values())
        if bbest != h[i]:
            return False, f"bias equation fails at {model.states[i]}"
        if policy is not None and (policy[i] not in star or bias[policy[i]] != bbest):
            return False, f"policy is not a minimizer at {model.states[i]}"
    return True, ""


def satisfies_optimality(model, g, h, policy=None):
    return optimality_gaps(model, g, h, policy)[0]


def _improve(current, values):
    best = min(values)
    if values[current] == best:
        return current
    return values.index(best)


def policy_iteration(model, start=None):
    if not model.undiscounted:
        raise SmdpError("policy iteration needs an undiscounted model")
    policy = list(start) if start is not None else [0] * model.n
    limit = model.policy_count() + 1
    for it in range(1, limit + 1):
        g, h = evaluate_policy(model, policy)
        changed = False
        stars = []
        for i, acts in enumerate(model.actions):
            vals = [_q_value(a, g) for a in acts]
            k = _improve(policy[i], vals)
            if k != policy[i]:
                policy[i] = k
                changed = True
            best = min(vals)
            stars.append([k for k, v in enumerate(vals) if v == best])
        if changed:
            continue
        for i, acts in enumerate(model.actions):
            star = stars[i]
            vals = [_bias_value(acts[k], g[i], h) for k in star]
            cur = star.index(policy[i])
            k = _improve(cur, vals)
            if k != cur:
                policy[i] = star[k]
                changed = True
        if not changed:
            return AverageCostSolution(g, h, tuple(policy), it)
    raise SmdpError("policy iteration did not terminate (internal error)")


def _evaluate_chunk(args):
    model, policies = args
    out = []
    for pol in policies:
        out.append((pol, evaluate_policy(model, pol)))
    return out


def enumerate_policies(model, jobs=1):
    """Evaluate every stationary policy; returns [(policy, (g, h)), ...]."""
    count = model.policy_count()
    if count > MAX_POLICIES:
        raise SmdpError(f"{count} policies exceed the enumeration cap of {MAX_POLICIES}")
    policies = list(itertools.product(*(range(len(a)) for a in model.actions)))
    if jobs <= 1 or count < 64:
        return _evaluate_chunk((model, policies))
    size = math.ceil(len(policies) / jobs)
    chunks = [(model, policies[k:k + size]) for k in range(0, len(policies), size)]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        parts = list(ex.map(_evaluate_chunk, chunks))
    return [item for part in parts for item in part]


def solve_enumerate(model, jobs=1):
    results = enumerate_policies(model, jobs)
    n = model.n
    gmin = [min(gh[0][i] for _, gh in results) for i in range(n)]
    candidates = [(pol, gh) for pol, gh in results if list(gh[0]) == gmin]
    if not candidates:
        raise SmdpError("no policy is optimal at every state (internal error)")
    for pol, (g, h) in candidates:
        if satisfies_optimality(model, g, h, pol):
            return AverageCostSolution(g, h, pol, len(results))
    raise SmdpError("no gain-optimal policy solves the bias equation (internal error)")


def solve_average_cost(model, method="policy-iteration", jobs=1):
    method = method.lower().replace("_", "-")
    if method in ("policy-iteration", "policyiteration", "pi"):
        return policy_iteration(model)
    if method in ("enumerate", "enumeration"):
        return solve_enumerate(model, jobs)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# linear programming

def lp_problem(model, weights=None):
    """Objective and constraint rows over variables (rho_0.., u_0..)."""
    n = model.n
    w = [Fraction(x) for x in weights] if weights is not None else [ONE] * n
    c = w + [ZERO] * n
    A, b, labels = [], [], []
    for i, acts in enumerate(model.actions):
        for a in acts:
            row = [ZERO] * (2 * n)
            row[i] += ONE
            for j, x in enumerate(a.row):
                if x:
                    row[j] -= a.discount * x
            A.append(row)
            b.append(ZERO)
            labels.append(f"rho[{model.states[i]}|{a.name}]")
            row = [ZERO] * (2 * n)
            row[n + i] += ONE
            row[i] += a.time
            for j, x in enumerate(a.row):
                if x:
                    row[n + j] -= a.discount * x
            A.append(row)
            b.append(a.cost)
            labels.append(f"u[{model.states[i]}|{a.name}]")
    return c, A, b, labels


def lp_throughput(model, weights=None):
    c, A, b, _ = lp_problem(model, weights)
    res = linprog(c, A_ub=A, b_ub=b, free=True)
    if res.status != "optimal":
        raise SmdpError(f"throughput LP is {res.status}; model invariants are violated")
    return res.x[: model.n]


def lp_dump(model, weights=None):
    c, A, b, labels = lp_problem(model, weights)
    n = model.n
    names = [f"rho_{s}" for s in model.states] + [f"u_{s}" for s in model.states]

    def expr(row):
        parts = [f"{fraction_str(v)}*{names[j]}" for j, v in enumerate(row) if v]
        return " + ".join(parts) if parts else "0"

    lines = [f"max {expr(c)}", "s.t."]
    for row, rhs, lab in zip(A, b, labels):
        lines.append(f"  {lab}: {expr(row)} <= {fraction_str(rhs)}")
    lines.append("free " + " ".join(names[:2 * n]))
    return "\n".join(lines) + "\n"
