"""Counter dynamics on a time grid of step dt.

History covers [-T, 0] (T the largest holding time, at least one step) and
the min-plus recursion runs for t > 0.  Reads at t- are taken at t - dt.
"""

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .exact import to_fraction
from .petri_model import NetError, Preselection, Priority, require_valid, resolution_order

FLUID = "fluid"
DISCRETE = "discrete"


@dataclass(frozen=True)
class InitialCondition:
    """mode "zero", "affine" (rho, u dicts) or "sampled" (values dict of
    sequences over the history grid, oldest first)."""

    mode: str = "zero"
    rho: dict | None = None
    u: dict | None = None
    values: dict | None = None

    def __post_init__(self):
        if self.mode not in ("zero", "affine", "sampled"):
            raise ValueError(f"unknown initial condition {self.mode!r}")
        if self.mode == "affine":
            if self.rho is None or self.u is None:
                raise ValueError("affine initial condition needs rho and u")
            if any(v < 0 for v in self.rho.values()):
                raise ValueError("affine initial condition needs rho >= 0")
        if self.mode == "sampled":
            if self.values is None:
                raise ValueError("sampled initial condition needs values")
            for q, seq in self.values.items():
                if any(b < a for a, b in zip(seq, seq[1:])):
                    raise ValueError(f"history of {q} is not non-decreasing")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def affine(cls, rho, u):
        return cls("affine", rho=dict(rho), u=dict(u))

    @classmethod
    def sampled(cls, values):
        return cls("sampled", values={q: list(v) for q, v in values.items()})

    def history(self, transitions, times, integer=False):
        rows = []
        for q in transitions:
            if self.mode == "zero":
                row = [0] * len(times)
            elif self.mode == "affine":
                r, u = self.rho.get(q, 0), self.u.get(q, 0)
                row = [r * t + u for t in times]
            else:
                row = list(self.values.get(q, [0] * len(times)))
                if len(row) != len(times):
                    raise ValueError(f"history of {q} needs {len(times)} samples")
            if integer:
                if any(int(v) != v for v in row):
                    raise ValueError("discrete mode needs integer initial counters")
                rows.append([int(v) for v in row])
            else:
                rows.append([float(v) for v in row])
        return rows


@dataclass
class CounterTrajectory:
    dt: Fraction
    history: int  # number of grid steps before t = 0
    times: np.ndarray
    z: dict
    x: dict
    mode: str = FLUID
    meta: dict = field(default_factory=dict)

    @property
    def transitions(self):
        return list(self.z)

    @property
    def places(self):
        return list(self.x)

    def index_of(self, t):
        k = (to_fraction(t) / self.dt) + self.history
        if k.denominator != 1:
            raise ValueError("time is not on the grid")
        return int(k)

    def matrix(self):
        return np.vstack([self.z[q] for q in self.z])

    def to_csv(self, every=1):
        if every < 1:
            raise ValueError("every must be positive")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"z_{q}" for q in self.z] + [f"x_{p}" for p in self.x])
        cols = [self.z[q] for q in self.z] + [self.x[p] for p in self.x]
        for k in range(0, len(self.times), every):
            w.writerow([_fmt(self.times[k])] + [_fmt(c[k]) for c in cols])
        return buf.getvalue()


def _fmt(v):
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def check_grid(net, dt):
    dt = to_fraction(dt)
    if dt <= 0:
        raise ValueError("dt must be positive")
    for p in net.places:
        if p.tau > 0 and (p.tau / dt).denominator != 1:
            raise ValueError(f"dt={dt} does not divide the holding time of {p.id}")
    return dt


def _schedule_count(n, L, J):
    """card({1..n} intersected with J + L N)."""
    if n <= 0:
        return 0
    full, rest = divmod(n, L)
    return full * len(J) + sum(1 for j in J if j <= rest)


def _compile(net, dt, mode):
    qs = net.transitions
    idx = {q: i for i, q in enumerate(qs)}
    integer = mode == DISCRETE
    out = []
    for q in qs:
        branches = []
        for p in net.q_in[q]:
            d = int(net.tau(p) / dt)
            a = net.alpha_in[(p, q)]
            m = net.marking(p)
            ins = [(net.alpha_out[(q2, p)], idx[q2], d) for q2 in net.p_in[p]]
            outs = []
            r = net.rule(p)
            sched = None
            scale = 1 / a
            if isinstance(r, Priority):
                low = set(r.lower(q))
                outs = [(net.alpha_in[(p, q2)], idx[q2], 1 if q2 in low else 0)
                        for q2 in net.p_out[p] if q2 != q]
            elif isinstance(r, Preselection):
                if integer:
                    if r.schedule is None:
                        raise NetError(f"discrete mode needs a periodic schedule on {p}")
                    L, parts = r.schedule
                    sched = (L, sorted(dict(parts)[q]))
                else:
                    scale = r.share(q) / a
            if integer:
                branches.append((int(m), int(a), [(int(w), j, dd) for w, j, dd in ins],
                                 [(int(w), j, lag) for w, j, lag in outs], sched))
            else:
                branches.append((float(m), float(scale), [(float(w), j, dd) for w, j, dd in ins],
                                 [(float(w), j, lag) for w, j, lag in outs], None))
        out.append(branches)
    order = [idx[q] for q in resolution_order(net)]
    return out, order


def _check_integer(net):
    for p in net.places:
        if p.marking.denominator != 1:
            raise ValueError(f"discrete mode needs an integer marking on {p.id}")
    for _, _, w in net.pre + net.post:
        if w.denominator != 1:
            raise ValueError("discrete mode needs integer arc weights")


def simulate(net, init=None, horizon=100, dt=1, mode=FLUID):
    mode = mode.lower()
    if mode not in (FLUID, DISCRETE):
        raise ValueError(f"unknown mode {mode!r}")
    require_valid(net)
    horizon = to_fraction(horizon)
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    dt = check_grid(net, dt)
    integer = mode == DISCRETE
    if integer:
        _check_integer(net)
    init = init or InitialCondition.zero()
    K = max(int(net.max_tau / dt), 1)
    H = math.ceil(horizon / dt)
    hist_times = [(k - K) * dt for k in range(K + 1)]
    z = init.history(net.transitions, hist_times, integer)
    comp, order = _compile(net, dt, mode)

    for k in range(K + 1, K + H + 1):
        for i in order:
            best = None
            for m, a, ins, outs, sched in comp[i]:
                v = m
                for w, j, d in ins:
                    v += w * z[j][k - d]
                if integer:
                    if sched is not None:
                        v = _schedule_count(v, *sched)
                    for w, j, lag in outs:
                        v -= w * z[j][k - lag]
                    v = v // a
                else:
                    for w, j, lag in outs:
                        v -= w * z[j][k - lag]
                    v *= a
                if best is None or v < best:
                    best = v
            z[i].append(best)
    times = np.array([float((k - K) * dt) for k in range(K + H + 1)])
    zd = {q: np.array(z[i], dtype=float) for i, q in enumerate(net.transitions)}
    xd = {}
    for p in net.places:
        acc = np.full(len(times), float(p.marking))
        for q2 in net.p_in[p.id]:
            acc = acc + float(net.alpha_out[(q2, p.id)]) * zd[q2]
        xd[p.id] = acc
    return CounterTrajectory(dt, K, times, zd, xd, mode)


def stationary_init(net, rho, u, dt):
    """Affine initial condition which stays affine on the dt-grid, or None."""
    from .stationary import stationary_offset
    t0 = stationary_offset(net, rho, u, dt)
    if t0 is None:
        return None
    return InitialCondition.affine(rho, {q: u[q] + rho[q] * t0 for q in rho})


# ---------------------------------------------------------------------------
# asymptotics

@dataclass
class SlopeEstimate:
    rho: dict
    residual: float  # largest absolute least-squares residual on the window


def estimate_slope(traj, tail_fraction=0.25, max_tau=None):
    if not 0 < tail_fraction <= 0.5:
        raise ValueError("tail_fraction must lie in (0, 1/2]")
    t = traj.times[traj.history:]
    span = t[-1] - t[0]
    T = float(max_tau) if max_tau is not None else traj.history * float(traj.dt)
    if span < 10 * T or len(t) < 4:
        raise ValueError("horizon too short for a slope estimate")
    n = max(int(len(t) * tail_fraction), 2)
    tt = t[-n:]
    A = np.vstack([tt - tt.mean(), np.ones(n)]).T
    rho = {}
    worst = 0.0
    for q, series in traj.z.items():
        y = series[-n:]
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        res = y - A @ coef
        worst = max(worst, float(np.max(np.abs(res))))
        rho[q] = float(coef[0])
    return SlopeEstimate(rho, worst)


@dataclass
class PeriodResult:
    period: int | None
    residual: float

    @property
    def converged(self):
        return self.period is not None


def detect_period(traj, rho, c_max=64, tol=1e-6, window=None):
    """Smallest c with |d(t+c) - d(t)| <= tol on the tail, d = z - rho t."""
    if traj.dt != 1:
        raise ValueError("period detection works on unit grids")
    t = traj.times
    d = np.vstack([traj.z[q] - float(rho[q]) * t for q in traj.z])
    n = d.shape[1] - traj.history
    w = window or max(n // 4, 2 * c_max)
    if w + c_max > n:
        raise ValueError("trajectory too short for the requested window")
    best = math.inf
    for c in range(1, c_max + 1):
        a = d[:, -w:]
        b = d[:, -w - c:-c]
        r = float(np.max(np.abs(a - b)))
        best = min(best, r)
        if r <= tol:
            return PeriodResult(c, r)
    return PeriodResult(None, best)
