import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnfluid.casestudies import EmsAParams, build_ems_a, ems_a_closed_form
from pnfluid.petri_model import build_net
from pnfluid.smdp import (
    Action,
    SmdpError,
    SmdpModel,
    evaluate_policy,
    lp_dump,
    lp_throughput,
    petri_to_smdp,
    policy_iteration,
    satisfies_optimality,
    solve_average_cost,
)

F = Fraction


def ems_a_reference_e(p):
    return {"z0": 1, "z1": 1, "z2": 1 - p.pi, "z3": p.pi, "z4": p.pi, "z5": p.pi}


def test_ems_a_smdp_labels(ems_a_params):
    p = ems_a_params
    m = petri_to_smdp(build_ems_a(p), ems_a_reference_e(p))
    labels = {(s, a.name): (a.cost, a.time) for s, acts in zip(m.states, m.actions) for a in acts}
    assert labels == {
        ("z0", "src"): (p.lam, 1),
        ("z1", "inc"): (0, 0),
        ("z1", "NA"): (p.NA, 0),
        ("z2", "arr2"): (0, p.tau1),
        ("z3", "arr3"): (0, p.tau1),
        ("z3", "NP"): (p.NP / p.pi, 0),
        ("z4", "svc"): (0, p.tau2),
        ("z5", "con"): (0, p.tau3),
    }
    na = m.actions[1][m.action_index(1, "NA")]
    idx = {s: i for i, s in enumerate(m.states)}
    assert na.row[idx["z2"]] == 1 - p.pi and na.row[idx["z4"]] == p.pi
    assert m.undiscounted
    assert all(sum(a.row) == 1 for acts in m.actions for a in acts)


def test_trivial_net():
    net = build_net([("p", 1, 0)], ["q"], [("p", "q", 1), ("q", "p", 1)])
    m = petri_to_smdp(net, {"q": 1})
    assert m.n == 1 and len(m.actions[0]) == 1
    a = m.actions[0][0]
    assert (a.cost, a.row) == (0, (1,))


def test_discounted_row_with_weight_two():
    # place a: q2 --(3)--> a --(2)--> q1, plus q1 --(1)--> a
    net = build_net([("a", 1, 4), ("b", 1, 0)], ["q1", "q2"],
                    [("q2", "a", 3), ("q1", "a", 1), ("a", "q1", 2),
                     ("q1", "b", 1), ("b", "q2", 1)])
    m = petri_to_smdp(net)
    act = m.actions[0][0]
    # kappa = (1 + 3) / 2, beta = (1/4, 3/4), cost = 4 / 2
    assert act.discount == 2
    assert act.row == (F(1, 4), F(3, 4))
    assert act.cost == 2


def test_evaluate_single_state():
    m = SmdpModel(("s",), ((Action("a", F(3), F(2), F(1), (F(1),)),),))
    g, h = evaluate_policy(m, (0,))
    assert g == [F(3, 2)] and h == [0]


def test_evaluate_two_cycle():
    m = SmdpModel(("a", "b"), (
        (Action("x", F(1), F(1), F(1), (F(0), F(1))),),
        (Action("y", F(0), F(1), F(1), (F(1), F(0))),),
    ))
    g, _ = evaluate_policy(m, (0, 0))
    assert g == [F(1, 2), F(1, 2)]


def test_ems_a_policy_values(ems_a_params):
    p = ems_a_params
    e = ems_a_reference_e(p)
    m = petri_to_smdp(build_ems_a(p), e)
    i1, i3 = m.states.index("z1"), m.states.index("z3")
    base = [0] * m.n
    # assistants bind, calls reach z3 through the tau1 action:
    # hand-solved invariant measure on {z1, z2, z3, z4} gives N_A / (tau1 + pi tau2)
    pol = list(base)
    pol[i1] = m.action_index(i1, "NA")
    pol[i3] = m.action_index(i3, "arr3")
    g, _ = evaluate_policy(m, pol)
    assert g[i1] * e["z1"] == F(5)
    assert g[i1] == p.NA / (p.tau1 + p.pi * p.tau2)
    # physicians bind: z1 is absorbed in the z3 -> z5 -> z4 loop
    pol[i3] = m.action_index(i3, "NP")
    g, _ = evaluate_policy(m, pol)
    assert g[i1] == F(10, 3)
    assert g[i1] == p.NP / (p.pi * (p.tau2 + p.tau3))


def test_ems_a_optimum(ems_a_params):
    p = ems_a_params.__class__(**{**ems_a_params.__dict__, "NA": F(1)})
    m = petri_to_smdp(build_ems_a(p), ems_a_reference_e(p))
    for method in ("policy-iteration", "enumerate"):
        sol = solve_average_cost(m, method)
        assert sol.g[1] == F(1, 2) == ems_a_closed_form(p)["z1"]
        assert satisfies_optimality(m, sol.g, sol.h, sol.policy)
    assert lp_throughput(m)[1] == F(1, 2)


def test_single_action_model_equals_evaluation():
    rng = random.Random(3)
    m = random_model(rng, 4, 1)
    sol = solve_average_cost(m)
    assert (sol.g, sol.h) == tuple(evaluate_policy(m, (0,) * 4))


def test_lp_single_state():
    m = SmdpModel(("s",), ((Action("a", F(0), F(1), F(1), (F(1),)),),))
    assert lp_throughput(m) == [0]
    text = lp_dump(m)
    assert text.startswith("max ") and "s.t." in text


def test_zero_time_final_class():
    m = SmdpModel(("s",), ((Action("a", F(1), F(0), F(1), (F(1),)),),))
    with pytest.raises(SmdpError):
        evaluate_policy(m, (0,))
    assert m.zero_time_cycle() == [0]


def test_priority_net_has_no_smdp(ems_b):
    with pytest.raises(Exception):
        petri_to_smdp(ems_b)


def random_model(rng, n, k):
    actions = []
    for i in range(n):
        acts = []
        for a in range(rng.randint(1, k)):
            w = [rng.randint(0, 3) for _ in range(n)]
            if sum(w) == 0:
                w[rng.randrange(n)] = 1
            row = tuple(F(x, sum(w)) for x in w)
            acts.append(Action(f"a{a}", F(rng.randint(0, 8), rng.randint(1, 3)),
                               F(rng.randint(1, 3)), F(1), row))
        actions.append(tuple(acts))
    return SmdpModel(tuple(f"s{i}" for i in range(n)), tuple(actions))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_policy_iteration_matches_enumeration_and_lp(seed):
    m = random_model(random.Random(seed), 4, 2)
    pi = policy_iteration(m)
    en = solve_average_cost(m, "enumerate")
    assert pi.g == en.g
    assert satisfies_optimality(m, pi.g, pi.h, pi.policy)
    assert satisfies_optimality(m, en.g, en.h, en.policy)
    assert lp_throughput(m) == en.g


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 5))
def test_scaling_costs_and_times(seed, c):
    m = random_model(random.Random(seed), 3, 2)
    pol = (0, 0, 0)
    g, _ = evaluate_policy(m, pol)

    def rescale(cost_f, time_f):
        return SmdpModel(m.states, tuple(
            tuple(Action(a.name, a.cost * cost_f, a.time * time_f, a.discount, a.row) for a in acts)
            for acts in m.actions))

    assert evaluate_policy(rescale(c, 1), pol)[0] == [x * c for x in g]
    assert evaluate_policy(rescale(1, c), pol)[0] == [x / c for x in g]


def test_throughput_independent_of_invariant_scale(ems_a_params):
    p = EmsAParams(**{**ems_a_params.__dict__, "NP": F(2)})
    net = build_ems_a(p)
    e = ems_a_reference_e(p)
    rho = []
    for s in (1, 3, F(1, 7)):
        es = {q: s * v for q, v in e.items()}
        g = solve_average_cost(petri_to_smdp(net, es)).g
        rho.append([g[i] * es[q] for i, q in enumerate(net.transitions)])
    assert rho[0] == rho[1] == rho[2]


def test_parallel_enumeration_matches_serial():
    m = random_model(random.Random(11), 7, 2)
    assert solve_average_cost(m, "enumerate", jobs=2).g == solve_average_cost(m, "enumerate").g
