"""pnfluid command line.

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 analysis failure.
"""

import argparse
import csv
import io
import json
import random
import sys

from . import __version__
from .casestudies import EmsAParams, EmsBParams, build_ems_a, build_ems_b
from .dynamics import InitialCondition, detect_period, estimate_slope, simulate
from .exact import fraction_str, to_fraction
from .petri_model import NetError, load_net, stoichiometric_invariant, validate_net
from .simplex import LPError
from .smdp import SmdpError, lp_dump, lp_throughput, petri_to_smdp, solve_average_cost
from .stationary import (
    cells_json,
    make_params,
    sample_phase_diagram,
    samples_csv,
    solve_germ_priority,
    solve_lex_priority_free,
    throughput_complex,
)

MODELS = {"ems-a": (EmsAParams, build_ems_a), "ems-b": (EmsBParams, build_ems_b)}


class UsageError(Exception):
    pass


class AnalysisError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_sets(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects name=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = to_fraction(v.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise UsageError(f"bad value for {k}: {v}") from exc
    return out


def load_input(args):
    """Net from a file or a built-in model, with --set overrides."""
    sets = _parse_sets(args.set)
    if bool(args.net) == bool(args.model):
        raise UsageError("give exactly one of a net file or --model")
    if args.model:
        cls, build = MODELS[args.model]
        try:
            params = cls.from_mapping(sets)
        except (KeyError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
        return build(params, drawn=getattr(args, "drawn", False))
    net = load_net(args.net)
    if sets:
        try:
            net = net.with_markings(sets)
        except NetError as exc:
            raise UsageError(str(exc)) from exc
    return net


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands

def cmd_validate(args):
    try:
        net = load_input(args)
    except NetError as exc:
        print(f"invalid net: {exc}", file=sys.stderr)
        return 2
    report = validate_net(net)
    if args.format == "json":
        text = json.dumps(report.to_dict(), indent=2) + "\n"
    else:
        lines = []
        for c in report.checks:
            line = f"{'ok  ' if c.passed else 'FAIL'} {c.name}"
            if c.message:
                line += f": {c.message}"
            if c.witness:
                line += f" [{' -> '.join(map(str, c.witness))}]"
            lines.append(line)
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return 0 if report.ok else 2


def _init_from_args(args):
    if not args.init:
        return None
    with open(args.init, encoding="utf-8") as fh:
        data = json.load(fh)
    mode = data.get("mode", "zero")
    conv = lambda d: {k: to_fraction(v) for k, v in d.items()}  # noqa: E731
    if mode == "affine":
        return InitialCondition.affine(conv(data["rho"]), conv(data["u"]))
    if mode == "sampled":
        return InitialCondition.sampled({k: [to_fraction(x) for x in v]
                                         for k, v in data["values"].items()})
    return InitialCondition.zero()


def cmd_simulate(args):
    net = load_input(args)
    traj = simulate(net, _init_from_args(args), args.horizon, args.dt, args.mode)
    _emit(traj.to_csv(args.every), args.out)
    try:
        est = estimate_slope(traj, args.tail, net.max_tau)
    except ValueError as exc:
        print(f"slope: {exc}", file=sys.stderr)
        return 0
    for q in net.transitions:
        print(f"slope {q} {est.rho[q]:.9g}", file=sys.stderr)
    print(f"residual {est.residual:.3g}", file=sys.stderr)
    if args.period:
        res = detect_period(traj, est.rho if not args.exact_rho else _exact_rho(net), args.c_max)
        if res.converged:
            print(f"period {res.period} residual {res.residual:.3g}", file=sys.stderr)
        else:
            print(f"period not converged (best residual {res.residual:.3g})", file=sys.stderr)
    return 0


def _exact_rho(net):
    if net.priority_free:
        return solve_lex_priority_free(net).rho
    sols = solve_germ_priority(net)
    if not sols:
        raise AnalysisError("no stationary regime")
    return sols[0].rho


def _throughput(net, method, jobs=1):
    """Returns (rho, u or None)."""
    if method == "lp":
        e = _invariant(net)
        g = lp_throughput(petri_to_smdp(net, e))
        return {q: e[q] * v for q, v in zip(net.transitions, g)}, None
    if method in ("policy-iteration", "enumerate"):
        e = _invariant(net)
        sol = solve_average_cost(petri_to_smdp(net, e), method, jobs)
        return ({q: e[q] * v for q, v in zip(net.transitions, sol.g)},
                {q: e[q] * v for q, v in zip(net.transitions, sol.h)})
    if method == "germ":
        if net.priority_free:
            s = solve_lex_priority_free(net)
            return s.rho, s.u
        sols = solve_germ_priority(net)
        if not sols:
            raise AnalysisError("no solution of the germ equations")
        rhos = {tuple(s.rho[q] for q in net.transitions) for s in sols}
        if len(rhos) > 1:
            print(f"note: {len(rhos)} distinct stationary throughputs; first shown",
                  file=sys.stderr)
        return sols[0].rho, sols[0].u
    if method == "simulate":
        dt = _common_dt(net)
        horizon = max(2000 * net.max_tau, 1000)
        traj = simulate(net, None, horizon, dt)
        return estimate_slope(traj, 0.25, net.max_tau).rho, None
    raise UsageError(f"unknown method {method}")


def _invariant(net):
    if not net.priority_free:
        raise UsageError("this method needs a priority-free net")
    e = stoichiometric_invariant(net)
    if e is None:
        raise AnalysisError("net has no positive stoichiometric invariant")
    return e


def _common_dt(net):
    from math import gcd
    taus = [p.tau for p in net.places if p.tau > 0]
    if not taus:
        return to_fraction(1)
    num = 0
    den = 1
    for t in taus:
        num = gcd(num, t.numerator)
        den = den * t.denominator // gcd(den, t.denominator)
    return to_fraction(num) / den


def cmd_throughput(args):
    net = load_input(args)
    method = args.method or ("policy-iteration" if net.priority_free else "germ")
    if args.lp_dump:
        _emit(lp_dump(petri_to_smdp(net, _invariant(net))), args.out)
        return 0
    rho, u = _throughput(net, method, args.jobs)
    if args.check:
        others = ["lp", "policy-iteration", "enumerate", "germ"] if net.priority_free else ["germ"]
        for m in others:
            if m == method:
                continue
            r2, _ = _throughput(net, m, args.jobs)
            if r2 != rho:
                print(f"check failed: {method} and {m} disagree", file=sys.stderr)
                return 3
        print(f"check passed against {', '.join(m for m in others if m != method)}",
              file=sys.stderr)

    def fmt(v):
        return fraction_str(v) if not isinstance(v, float) else repr(v)

    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["transition", "rho"] + (["u"] if u is not None else []))
        for q in net.transitions:
            w.writerow([q, fmt(rho[q])] + ([fmt(u[q])] if u is not None else []))
        text = buf.getvalue()
    else:
        data = {"method": method, "rho": {q: fmt(rho[q]) for q in net.transitions}}
        if u is not None:
            data["u"] = {q: fmt(u[q]) for q in net.transitions}
        text = json.dumps(data, indent=2) + "\n"
    _emit(text, args.out)
    return 0


def _param_specs(args):
    names = [s.strip() for s in args.params.split(",") if s.strip()]
    if not names:
        raise UsageError("--params needs at least one place name")
    ranges = {}
    for item in args.range or []:
        try:
            k, span = item.split("=", 1)
            lo, hi = span.split(":", 1)
            ranges[k] = (to_fraction(lo), to_fraction(hi))
        except ValueError as exc:
            raise UsageError(f"--range expects name=lo:hi, got {item!r}") from exc
    specs = []
    for nm in names:
        lo, hi = ranges.get(nm, (0, None))
        specs.append((nm, lo, hi))
    return specs


def cmd_phases(args):
    net = load_input(args)
    specs = _param_specs(args)
    if args.sample:
        grid = [int(g) for g in args.grid.split(",")]
        if len(grid) == 1:
            grid = grid * len(specs)
        if any(hi is None for _, _, hi in specs):
            raise UsageError("sampling needs --range for every parameter")
        rows = sample_phase_diagram(net, specs, grid)
        _emit(samples_csv(rows, specs, net.transitions), args.out)
        return 0
    cells = throughput_complex(net, make_params(specs), method=args.method, jobs=args.jobs)
    _emit(cells_json(cells) + "\n", args.out)
    return 0


def cmd_selftest(args):
    from .generators import random_priority_free_net
    rng = random.Random(args.seed)
    failures = 0
    for k in range(args.count):
        net, e = random_priority_free_net(rng)
        model = petri_to_smdp(net, e)
        pi = solve_average_cost(model, "policy-iteration").g
        en = solve_average_cost(model, "enumerate").g
        lp = lp_throughput(model)
        ok = pi == en == list(lp)
        if not ok:
            failures += 1
        print(f"net {k}: {len(net.transitions)} transitions {'ok' if ok else 'MISMATCH'}")
    print(f"{args.count - failures}/{args.count} passed")
    return 0 if failures == 0 else 3


# ---------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="pnfluid", description="Timed Petri net throughput analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, fmt=("json", "text")):
        p.add_argument("net", nargs="?", help="net description (JSON)")
        p.add_argument("--model", choices=sorted(MODELS), help="built-in model")
        p.add_argument("--drawn", action="store_true",
                       help="build the model with its preselection places")
        p.add_argument("--set", action="append", metavar="NAME=VALUE",
                       help="parameter or marking override (p/q accepted)")
        p.add_argument("--out", help="write output to this file")
        p.add_argument("--format", choices=fmt, default=fmt[0])

    p = sub.add_parser("validate", help="structural checks")
    common(p, ("text", "json"))
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="grid simulation, trajectory as CSV")
    common(p, ("csv",))
    p.add_argument("--horizon", type=to_fraction, default=to_fraction(100))
    p.add_argument("--dt", type=to_fraction, default=to_fraction(1))
    p.add_argument("--mode", choices=("fluid", "discrete"), default="fluid")
    p.add_argument("--init", help="initial condition (JSON)")
    p.add_argument("--every", type=int, default=1, help="keep one row in k")
    p.add_argument("--tail", type=float, default=0.25, help="tail fraction for slopes")
    p.add_argument("--period", action="store_true", help="also detect the asymptotic period")
    p.add_argument("--exact-rho", action="store_true",
                   help="use the exact stationary throughput for period detection")
    p.add_argument("--c-max", type=int, default=64)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("throughput", help="asymptotic throughputs")
    common(p, ("json", "csv"))
    p.add_argument("--method", choices=("lp", "policy-iteration", "enumerate", "germ", "simulate"))
    p.add_argument("--check", action="store_true", help="cross-check against the other exact methods")
    p.add_argument("--lp-dump", action="store_true", help="print the linear program")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_throughput)

    p = sub.add_parser("phases", help="throughput complex over marking parameters")
    common(p, ("json", "csv"))
    p.add_argument("--params", required=True, help="comma separated place names")
    p.add_argument("--range", action="append", metavar="NAME=LO:HI")
    p.add_argument("--method", choices=("policy", "germ"))
    p.add_argument("--sample", action="store_true", help="sample a grid instead (CSV)")
    p.add_argument("--grid", default="20", help="points per axis, e.g. 50 or 40,60")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_phases)

    p = sub.add_parser("selftest", help="randomized cross-method check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=20)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pnfluid: error: {exc}", file=sys.stderr)
        return 1
    except NetError as exc:
        print(f"pnfluid: invalid net: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"pnfluid: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"pnfluid: error: {exc}", file=sys.stderr)
        return 1
    except (AnalysisError, SmdpError, LPError, RuntimeError) as exc:
        print(f"pnfluid: analysis failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
