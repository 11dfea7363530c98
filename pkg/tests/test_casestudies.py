import random
from fractions import Fraction
from dataclasses import replace

import pytest

from pnfluid.casestudies import (
    EmsAParams,
    EmsBParams,
    build_ems_a,
    build_ems_b,
    ems_a_closed_form,
    ems_a_rho_star,
    ems_b_phase_table,
    ems_b_throughputs,
    paradox_check,
    paradox_params,
)
from pnfluid.petri_model import Priority, validate_net
from pnfluid.stationary import solve_germ_priority, solve_lex_priority_free

from conftest import random_ems_a

F = Fraction


def test_default_rho_star(ems_a_params):
    assert ems_a_rho_star(ems_a_params) == 1


def test_no_ambulances_no_throughput(ems_a_params):
    p = replace(ems_a_params, NA=F(0))
    assert ems_a_rho_star(p) == 0
    rho = solve_lex_priority_free(build_ems_a(p)).rho
    assert all(rho[q] == 0 for q in rho if q != "z0")


def test_single_ambulance(ems_a_params):
    p = replace(ems_a_params, NA=F(1))
    # 1 / (tau1 + pi tau2) = 1/2
    assert ems_a_rho_star(p) == F(1, 2)
    assert solve_lex_priority_free(build_ems_a(p)).rho["z1"] == F(1, 2)


@pytest.mark.parametrize("value", [0, 1, F(3, 2)])
def test_probabilities_are_open(value):
    with pytest.raises(ValueError):
        EmsAParams(pi=value)
    with pytest.raises(ValueError):
        EmsBParams(alpha=value)


def test_negative_parameter_rejected():
    with pytest.raises(ValueError):
        EmsAParams(NA=-1)


def test_aliases():
    p = EmsBParams.from_mapping({"lambda": "3/2", "tau_s": 5, "N_R": 2})
    assert (p.lam, p.tau2, p.taus, p.NR) == (F(3, 2), 5, 5, 2)
    with pytest.raises(KeyError):
        EmsAParams.from_mapping({"NR": 1})


def test_structures(ems_a, ems_b):
    assert list(ems_a.transitions) == [f"z{k}" for k in range(6)]
    assert ems_a.priority_free
    assert validate_net(ems_a).ok and validate_net(ems_b).ok
    assert ems_b.rule("NR") == Priority(("z5", "z5p", "z3"))
    assert ems_b.rule("NP") == Priority(("z5", "z5p"))
    for drawn in (build_ems_a(drawn=True), build_ems_b(drawn=True)):
        assert validate_net(drawn).ok


def test_drawn_and_split_agree(ems_a_params):
    a = solve_lex_priority_free(build_ems_a(ems_a_params)).rho
    b = solve_lex_priority_free(build_ems_a(ems_a_params, drawn=True)).rho
    # normal form splits z2, z3 into starred copies; originals must agree
    assert all(b[q] == v for q, v in a.items())
    assert b["z2*"] == b["z2"] and b["z3*"] == b["z3"]


def test_closed_form_on_random_parameters(rng):
    for _ in range(25):
        p = random_ems_a(rng)
        rho = solve_lex_priority_free(build_ems_a(p)).rho
        assert rho == ems_a_closed_form(p)
        assert rho["z3"] == p.pi * rho["z1"]


def test_phase_one(ems_b_params):
    v = ems_b_phase_table(ems_b_params)
    assert v.labels == ("1",)
    a = ems_b_params.alpha
    assert (v.z1, v.z5, v.z5p) == (1, F(1, 2) * a, F(1, 2) * (1 - a))


def test_phase_six_without_patients(ems_b_params):
    p = replace(ems_b_params, NR=F(1), NP=F(0))
    v = ems_b_phase_table(p)
    assert "6" in v.labels
    assert v.z5 == 0 and v.z5p == 0
    # all responders go to arrivals: z1 = N_R / (pi tau_s)
    assert v.z1 == p.NR / (p.pi * p.tau2)


def test_phase_4a(ems_b_params):
    # lambda congested, N_P between pi alpha lambda s and pi lambda s
    p = replace(ems_b_params, NP=F(2), NR=F(20))
    v = ems_b_phase_table(p)
    assert v.labels == ("4a",)
    s = p.tau2 + p.tau3
    assert v.z5 == p.pi * p.alpha * p.lam
    assert v.z5p == p.NP / s - p.pi * p.alpha * p.lam


def test_table_matches_germs_at_phase_points(ems_b_params):
    net = build_ems_b(ems_b_params)
    points = [dict(NA=10, NR=10, NP=10), dict(NA=1, NR=10, NP=10), dict(NA=10, NR=1, NP=10),
              dict(NA=10, NR=20, NP=2), dict(NA=10, NR=20, NP=1), dict(NA=10, NR=2, NP=1)]
    for pt in points:
        q = replace(ems_b_params, **{k: F(v) for k, v in pt.items()})
        sols = solve_germ_priority(net.with_markings(pt))
        assert sols
        ref = ems_b_throughputs(q)
        for s in sols:
            assert s.rho == ref


def test_paradox_regime():
    p = paradox_params(EmsBParams(NP=F(0)))
    assert p.NR < p.pi * p.lam * p.tau2
    xs = [F(k, 4) for k in range(0, 13)]
    rep = paradox_check(p, xs)
    assert rep.agree
    assert rep.decreasing is not None
    lo, hi = rep.decreasing
    assert lo < hi
    d = rep.to_dict()
    assert d["agree"] and len(d["NP"]) == len(xs)


def test_paradox_check_requires_positive_fleet():
    with pytest.raises(ValueError):
        paradox_check(EmsBParams(NA=F(0)), [0, 1])


def test_throughput_ratios_on_random_points():
    rng = random.Random(5)
    for _ in range(10):
        p = EmsBParams(NA=F(rng.randint(0, 20)), NR=F(rng.randint(0, 20)),
                       NP=F(rng.randint(0, 20)))
        r = ems_b_throughputs(p)
        assert r["z3"] == p.pi * r["z1"]
        assert r["z5"] + r["z5p"] <= r["z3"]
