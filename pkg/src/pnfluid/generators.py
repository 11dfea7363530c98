"""Random priority-free nets with a known positive stoichiometric invariant."""

import random
from fractions import Fraction

from .petri_model import NetError, build_net, validate_net


def random_priority_free_net(rng=None, max_transitions=8, max_tau=3, max_marking=6,
                             psel_prob=0.3, zero_tau_prob=0.15, attempts=100):
    """Return (net, e).  e is picked first; input weights are then solved
    from the balance equations so that e is an invariant by construction."""
    rng = rng or random.Random()
    for _ in range(attempts):
        n = rng.randint(2, max_transitions)
        qs = [f"q{i}" for i in range(n)]
        e = {q: Fraction(rng.randint(1, 3)) for q in qs}
        places, arcs, routing = [], [], {}
        covered = set()
        k = 0

        def new_place():
            nonlocal k
            k += 1
            tau = 0 if rng.random() < zero_tau_prob else rng.randint(1, max_tau)
            pid = f"p{k}"
            places.append((pid, tau, rng.randint(0, max_marking)))
            return pid

        def feed(pid):
            ups = rng.sample(qs, rng.randint(1, min(2, n)))
            total = Fraction(0)
            for q2 in ups:
                w = Fraction(rng.randint(1, 3))
                arcs.append((q2, pid, w))
                total += w * e[q2]
            return total

        if n >= 3 and rng.random() < psel_prob:
            group = rng.sample(qs, 2)
            pid = new_place()
            total = feed(pid)
            share = Fraction(rng.randint(1, 4), 5)
            pis = {group[0]: share, group[1]: 1 - share}
            for q in group:
                arcs.append((pid, q, pis[q] * total / e[q]))
            routing[pid] = {"pi": pis}
            covered.update(group)
        for q in qs:
            if q in covered:
                continue
            for _ in range(rng.randint(1, 2)):
                pid = new_place()
                total = feed(pid)
                arcs.append((pid, q, total / e[q]))
        try:
            net = build_net(places, qs, arcs, routing)
        except NetError:
            continue
        if validate_net(net).ok:
            return net, e
    raise RuntimeError("could not draw a valid random net")
