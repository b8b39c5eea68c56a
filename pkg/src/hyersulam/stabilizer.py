"""Hyers approximants H_n of the limit homomorphism and their verification.

Expanding:   H_n(x) = f(2^n x) / 2^n
Contracting: H_n(x) = 2^n f(x / 2^n)

Iterates are evaluated in extended precision (``clongdouble``).  Cauchy
increments such as ``H_{n+1}(x) - H_n(x)`` shrink like ``2^-n`` while
``f(2^n x)`` grows like ``2^n``, so in double precision the increment
loses roughly ``n`` bits to cancellation; the extra 11 mantissa bits keep
the increments accurate to ~1e-8 relative at ``n = 30``.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .control import (
    ControlFunction,
    Direction,
    bound_constant,
    first_step_constant,
    phi_eval,
)
from .cstar import adjoint
from .maps import CertificationReport, mu_palette
from .module import inner_product, module_action, norm_of

WORK_DTYPE = np.clongdouble
MAX_STEPS = 60
OVERFLOW_GUARD = 1e100
REL_HEADROOM = 1e-9
ABS_FLOOR = 1e-12
BURN_IN = 3

CSV_COLUMNS = ("n", "sup_cauchy_increment", "sup_additive_defect", "sup_triple_defect",
               "sup_star_defect", "sup_distance_to_f", "envelope")


class ScaleError(ValueError):
    """The iteration would leave the safe floating-point range."""


def approximant(f, n: int, direction, x) -> np.ndarray:
    """H_n(x); ``x`` may be a single element or a batch."""
    direction = Direction(direction)
    if not 0 <= n <= MAX_STEPS:
        raise ScaleError(f"iteration index n={n} outside [0, {MAX_STEPS}]")
    x = np.asarray(x, dtype=WORK_DTYPE)
    s = 2.0 ** n
    if direction is Direction.EXPAND:
        norms = np.atleast_1d(norm_of(x))
        bad = np.flatnonzero(s * norms > OVERFLOW_GUARD)
        if bad.size:
            i = int(bad[0])
            raise ScaleError(f"probe {i} (norm {norms[i]:.3g}) overflows the guard at n={n}")
        return f(x * s) / s
    return f(x / s) * s


@dataclass
class IterationRecord:
    n: int
    sup_cauchy_increment: float
    sup_additive_defect: float
    sup_triple_defect: float
    sup_star_defect: float
    sup_distance_to_f: float
    envelope: float

    def row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


@dataclass
class StabilizerResult:
    direction: Direction
    N: int
    lipschitz: float
    records: list
    probes: np.ndarray
    f_values: np.ndarray
    final_values: np.ndarray
    final: object
    bound_constant: float
    # Per-probe arrays indexed [n, i] (n = 0..N).
    increments: np.ndarray
    additive: np.ndarray
    additive_control: np.ndarray
    triple: np.ndarray
    star: np.ndarray
    triple_control: np.ndarray
    triple_gate: np.ndarray
    star_gate: np.ndarray
    pairs: tuple
    triples: np.ndarray
    probe_control: np.ndarray  # phi(x, x) per probe, the weight in the error bound
    gates: dict = field(default_factory=dict)

    def to_summary(self) -> dict:
        return {
            "direction": self.direction.value,
            "N": self.N,
            "lipschitz": self.lipschitz,
            "bound_constant": self.bound_constant,
            "probes": int(len(self.probes)),
            "triples": int(len(self.triples)),
            "gates": dict(self.gates),
            "final": {k: _num(v) for k, v in vars(self.records[-1]).items()},
        }


def _num(v):
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else None


def _as_batch(items) -> np.ndarray:
    a = np.asarray(items)
    return a[None] if a.ndim == 3 else a


def _ratio_ok(value, limit):
    return value <= limit * (1 + REL_HEADROOM) + ABS_FLOOR


def stabilize(f, phi: ControlFunction, N: int, probes, triple_probes=None, seed: int = 0,
              certificate: CertificationReport | None = None) -> StabilizerResult:
    """Run the Hyers iteration for n = 0..N and record every diagnostic.

    ``probes`` has shape ``(m, n, k, k)``.  Additive pairs are
    ``(x_i, x_{i+1}, mu_i)`` with ``mu_i`` from :func:`mu_palette`; triples
    default to ``(x_i, x_{i+1}, x_{i+2})``.  Triple and star defects use the
    aligned form ``||H_{3n}(<x,y> z) - <H_n x, H_n y> H_n z||`` and are
    recorded (NaN otherwise) while ``3n <= MAX_STEPS`` and the overflow
    guard allows it.
    """
    direction = phi.direction
    if not 1 <= N <= MAX_STEPS:
        raise ValueError(f"N must lie in [1, {MAX_STEPS}]")
    P = np.asarray(_as_batch(probes), dtype=WORK_DTYPE)
    m = len(P)
    if m == 0:
        raise ValueError("stabilize needs probes")
    idx = np.arange(m)
    mus = mu_palette(m, seed)
    X, Y = P, P[(idx + 1) % m]
    if triple_probes is None:
        T = np.stack([P, P[(idx + 1) % m], P[(idx + 2) % m]], axis=1)
    else:
        T = np.asarray(triple_probes, dtype=WORK_DTYPE)
    tx, ty, tz = T[:, 0], T[:, 1], T[:, 2]
    L = phi.lipschitz
    mu_b = mus[:, None, None, None]

    H = [approximant(f, n, direction, P) for n in range(min(N + 1, MAX_STEPS) + 1)]
    F = H[0]
    add_ctrl = np.asarray(phi_eval(phi, X, Y), dtype=float)
    tri_ctrl = np.asarray(phi_eval(phi, tx, ty, tz), dtype=float)
    W = module_action(inner_product(tx, ty), tz)
    Ws = module_action(adjoint(inner_product(tx, ty)), tz)
    w_norm = max(float(np.max(norm_of(W))), float(np.max(norm_of(Ws))))

    nan_m = np.full(m, np.nan)
    nan_t = np.full(len(T), np.nan)
    incs, adds, tris, stars, tgate, sgate, records = [], [], [], [], [], [], []
    for n in range(N + 1):
        Hn = H[n]
        inc = norm_of(H[n + 1] - Hn) if n + 1 < len(H) else nan_m
        Hsum = approximant(f, n, direction, mu_b * X + Y)
        add = np.asarray(norm_of(Hsum - mu_b * Hn - Hn[(idx + 1) % m]), dtype=float)
        dist = np.asarray(norm_of(F - Hn), dtype=float)

        feasible = 3 * n <= MAX_STEPS and (
            direction is Direction.CONTRACT or 2.0 ** (3 * n) * w_norm <= OVERFLOW_GUARD)
        if feasible:
            if triple_probes is None:
                hx, hy, hz = Hn, Hn[(idx + 1) % m], Hn[(idx + 2) % m]
            else:
                hx, hy, hz = (approximant(f, n, direction, v) for v in (tx, ty, tz))
            gram = inner_product(hx, hy)
            tri = np.asarray(norm_of(approximant(f, 3 * n, direction, W)
                                     - module_action(gram, hz)), dtype=float)
            st = np.asarray(norm_of(approximant(f, 3 * n, direction, Ws)
                                    - module_action(adjoint(gram), hz)), dtype=float)
            # The same quantities measured for f at the scaled triple: s^3 * defect.
            s = direction.factor ** n
            scaled_ctrl = np.asarray(phi_eval(phi, s * tx, s * ty, s * tz), dtype=float)
            tg = _ratio_ok(s ** 3 * tri, scaled_ctrl)
            sg = _ratio_ok(s ** 3 * st, scaled_ctrl)
        else:
            tri, st = nan_t, nan_t
            tg = sg = np.zeros(len(T), dtype=bool)

        worst = int(np.argmax(add))
        records.append(IterationRecord(
            n=n,
            sup_cauchy_increment=float(np.max(inc)),
            sup_additive_defect=float(add[worst]),
            sup_triple_defect=float(np.max(tri)),
            sup_star_defect=float(np.max(st)),
            sup_distance_to_f=float(np.max(dist)),
            envelope=float(L ** n * add_ctrl[worst]),
        ))
        incs.append(np.asarray(inc, dtype=float))
        adds.append(add)
        tris.append(tri)
        stars.append(st)
        tgate.append(tg)
        sgate.append(sg)

    gates = {"additive": True, "product": True, "star": True}
    if certificate is not None:
        gates = {"additive": certificate.additive_passed,
                 "product": certificate.product_passed,
                 "star": certificate.star_passed}
    return StabilizerResult(
        direction=direction, N=N, lipschitz=L, records=records, probes=P,
        f_values=F, final_values=H[N].copy(),
        final=functools.partial(approximant, f, N, direction),
        bound_constant=bound_constant(phi),
        increments=np.array(incs), additive=np.array(adds), additive_control=add_ctrl,
        triple=np.array(tris), star=np.array(stars), triple_control=tri_ctrl,
        triple_gate=np.array(tgate), star_gate=np.array(sgate),
        pairs=(X, Y, mus), triples=T,
        probe_control=np.asarray(phi_eval(phi, P, P), dtype=float), gates=gates,
    )


def write_csv(result: StabilizerResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in result.records:
            w.writerow([str(rec.n)] + [format(v, ".17g") for v in rec.row()[1:]])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "n" else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


@dataclass
class BoundReport:
    passed: bool
    distances: np.ndarray
    bounds: np.ndarray
    worst_margin: float
    worst_probe: int
    tightness: float  # max distance / bound over probes with a positive bound

    def to_dict(self) -> dict:
        return {"passed": self.passed, "worst_margin": self.worst_margin,
                "worst_probe": self.worst_probe, "tightness": self.tightness,
                "margin_factor": self.margin_factor,
                "max_distance": float(np.max(self.distances))}

    @property
    def margin_factor(self) -> float:
        """How many times the measured worst distance fits under the bound."""
        return 1.0 / self.tightness if self.tightness > 0 else math.inf


def verify_error_bound(result: StabilizerResult, phi: ControlFunction,
                       factor: float = 1 + REL_HEADROOM) -> BoundReport:
    """Compare ||f(x) - H_N(x)|| with the stability bound at every probe.

    A probe passes iff ``distance <= factor * bound + 1e-12``.
    """
    dist = np.asarray(norm_of(result.f_values - result.final_values), dtype=float)
    bounds = bound_constant(phi) * np.asarray(phi_eval(phi, result.probes, result.probes), float)
    margin = factor * bounds + ABS_FLOOR - dist
    i = int(np.argmin(margin))
    pos = bounds > 0
    tight = float(np.max(dist[pos] / bounds[pos])) if pos.any() else 0.0
    return BoundReport(passed=bool(np.all(margin >= 0)), distances=dist, bounds=bounds,
                       worst_margin=float(bounds[i] - dist[i]), worst_probe=i, tightness=tight)


def _defect_floor(result: StabilizerResult) -> float:
    return ABS_FLOOR * max(1.0, float(np.max(norm_of(result.probes))))


def _rate(seq, floor: float, burn_in: int) -> float:
    """Geometric-mean step ratio of ``seq[burn_in:]`` while above ``floor``.

    A sequence that drops to the floor counts as decayed (rate 0 past that
    point); too few points above the floor gives 0.
    """
    vals = [v for v in seq[burn_in:]]
    live = [i for i, v in enumerate(vals) if math.isfinite(v) and v > floor]
    if len(live) < 2:
        return 0.0
    a, b = live[0], live[-1]
    if b - a == 0:
        return 0.0
    return (vals[b] / vals[a]) ** (1.0 / (b - a))


@dataclass
class DecayReport:
    additive_ok: bool
    triple_ok: bool
    star_ok: bool
    cauchy_ok: bool
    telescoping_ok: bool
    rate: float
    lipschitz: float
    rate_ok: bool
    worst_ratios: dict
    gated_checks: dict

    @property
    def passed(self) -> bool:
        return (self.additive_ok and self.triple_ok and self.cauchy_ok
                and self.telescoping_ok and self.rate_ok)

    def to_dict(self, star: bool = False) -> dict:
        d = dict(vars(self))
        d["passed"] = self.passed and (self.star_ok or not star)
        return d


def defect_decay(result: StabilizerResult, phi: ControlFunction, slack: float = 0.05,
                 burn_in: int = BURN_IN) -> DecayReport:
    """Check every defect against its L^n envelope and estimate the decay rate."""
    L = phi.lipschitz
    Ln = L ** np.arange(result.N + 1)[:, None]
    floor = _defect_floor(result)

    def check(vals, ctrl, gate):
        env = Ln * ctrl[None, :]
        with np.errstate(invalid="ignore"):
            ok = vals <= env * (1 + REL_HEADROOM) + floor
            ratio = np.where(env > 0, vals / np.where(env > 0, env, 1), 0.0)
        ok = np.where(gate & np.isfinite(vals), ok, True)
        r = np.where(gate & np.isfinite(vals), ratio, 0.0)
        return bool(np.all(ok)), float(np.max(r)) if r.size else 0.0, int(np.sum(gate))

    add_gate = np.full(result.additive.shape, bool(result.gates.get("additive", True)))
    a_ok, a_r, a_n = check(result.additive, result.additive_control, add_gate)
    # Triple and star envelopes are gated per point: the hypothesis must hold
    # for f at the scaled triple the n-th step visits.
    t_ok, t_r, t_n = check(result.triple, result.triple_control, result.triple_gate)
    s_ok, s_r, s_n = check(result.star, result.triple_control, result.star_gate)

    # Telescoping: ||H_{n+1} - H_n|| <= d0 L^n phi(x, x); summing gives the bound.
    d0 = first_step_constant(phi)
    pc = result.probe_control
    inc = result.increments
    c_ok = bool(np.all(~np.isfinite(inc) | (inc <= d0 * Ln * pc[None, :] * (1 + REL_HEADROOM) + floor)))
    total = np.nansum(inc, axis=0)
    tel_ok = bool(np.all(total <= bound_constant(phi) * pc + 1e-9))

    rate = _rate([r.sup_additive_defect for r in result.records], floor, burn_in)
    return DecayReport(
        additive_ok=a_ok, triple_ok=t_ok, star_ok=s_ok, cauchy_ok=c_ok, telescoping_ok=tel_ok,
        rate=rate, lipschitz=L, rate_ok=rate <= L + slack,
        worst_ratios={"additive": a_r, "triple": t_r, "star": s_r},
        gated_checks={"additive": a_n, "triple": t_n, "star": s_n},
    )


@dataclass
class LinearityReport:
    max_defect: float
    worst_ratio: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(vars(self))


def check_linearity(H, probes, mus, phi: ControlFunction, n: int) -> LinearityReport:
    """max ||H(mu x + y) - mu H(x) - H(y)|| over probe pairs and the mu palette,
    against L^n phi(x, y)."""
    P = np.asarray(_as_batch(probes), dtype=WORK_DTYPE)
    mus = np.atleast_1d(np.asarray(mus))
    m = len(P)
    X = np.repeat(P, len(mus), axis=0)
    Y = np.repeat(P[(np.arange(m) + 1) % m], len(mus), axis=0)
    M = np.tile(mus, m)[:, None, None, None]
    d = np.asarray(norm_of(H(M * X + Y) - M * H(X) - H(Y)), dtype=float)
    env = phi.lipschitz ** n * np.asarray(phi_eval(phi, X, Y), dtype=float)
    floor = ABS_FLOOR * max(1.0, float(np.max(norm_of(P))))
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(env > 0, d / np.where(env > 0, env, 1), np.where(d > floor, np.inf, 0.0))
    return LinearityReport(max_defect=float(np.max(d)), worst_ratio=float(np.max(ratio)),
                           passed=bool(np.all(d <= env * (1 + REL_HEADROOM) + floor)))
