"""Fixed-point alternative for strict contractions on a generalized metric space.

Points are maps g: Xi -> Xi.  The distance between two of them is the
smallest c with ||g(x) - h(x)|| <= c phi(x, x) for all x, which may be
infinite.  Here the infimum is realized on a finite probe set, so every
statement is scoped to that set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import ControlFunction, Direction, phi_eval
from .module import norm_of
from .stabilizer import WORK_DTYPE

RATE_SLACK = 0.05
BURN_IN = 3


class MapPoint:
    """A point of the function space, evaluated in the working precision.

    Evaluations are memoized per input array, so repeated distance
    computations over one probe set cost a single evaluation.
    """

    def __init__(self, fn, tag: str = "map"):
        self._fn = fn
        self.tag = tag
        self._memo = {}

    def __call__(self, x):
        x = np.asarray(x, dtype=WORK_DTYPE)
        key = (x.shape, x.tobytes())
        hit = self._memo.get(key)
        if hit is None:
            hit = np.asarray(self._fn(x))
            hit.flags.writeable = False
            self._memo[key] = hit
        return hit

    def __repr__(self):
        return f"MapPoint({self.tag})"


@dataclass(frozen=True)
class ContractionOperator:
    """(Jg)(x) = g(2x)/2 when expanding, 2 g(x/2) when contracting."""

    direction: Direction
    lipschitz: float

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        if not 0 <= self.lipschitz < 1:
            raise ValueError("a strict contraction needs L in [0, 1)")

    @classmethod
    def for_control(cls, phi: ControlFunction) -> "ContractionOperator":
        return cls(phi.direction, phi.lipschitz)

    def __call__(self, g: MapPoint) -> MapPoint:
        return apply_contraction(self, g)


def apply_contraction(J: ContractionOperator, g: MapPoint) -> MapPoint:
    if J.direction is Direction.EXPAND:
        fn = lambda x: g(x * 2.0) / 2.0
    else:
        fn = lambda x: g(x * 0.5) * 2.0
    return MapPoint(fn, tag=f"J({g.tag})")


def probe_distance(g, h, phi: ControlFunction, probes) -> float:
    """max over probes of ||g(x) - h(x)|| / phi(x, x); 0/0 = 0, c/0 = inf."""
    P = np.asarray(probes)
    if P.ndim == 3:
        P = P[None]
    if len(P) == 0:
        raise ValueError("probe_distance needs probes")
    num = np.asarray(norm_of(np.asarray(g(P)) - np.asarray(h(P))), dtype=float)
    den = np.asarray(phi_eval(phi, P, P), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1), np.where(num > 0, np.inf, 0.0))
    return float(np.max(r))


def scaled_closure(probes, depth: int, direction) -> np.ndarray:
    """``probes`` together with their images under ``depth`` steps of J's argument scaling."""
    P = np.asarray(probes)
    s = Direction(direction).factor
    return np.concatenate([P * s ** k for k in range(depth + 1)])


@dataclass
class FixedPointDiagnostics:
    start: MapPoint
    fixed_point: MapPoint
    operator: ContractionOperator
    distances: list  # d(J^n x0, J^{n+1} x0), n = 0, 1, ...
    converged: bool
    iterations: int
    tol: float
    first_finite: int | None  # the n_0 of the alternative; None if every step is infinite
    first_step: float  # d(x0, J x0)
    certificate_bound: float  # d(x0, J x0) / (1 - L)
    measured: float  # d(x0, y*)
    probes: np.ndarray = field(repr=False, default=None)
    phi: ControlFunction = field(repr=False, default=None)

    def to_dict(self) -> dict:
        fin = lambda v: v if math.isfinite(v) else None
        return {
            "distances": [fin(d) for d in self.distances],
            "converged": self.converged,
            "iterations": self.iterations,
            "tol": self.tol,
            "first_finite": self.first_finite,
            "first_step": fin(self.first_step),
            "certificate_bound": fin(self.certificate_bound),
            "measured": fin(self.measured),
            "probes": int(len(self.probes)),
        }


def dm_iterate(x0: MapPoint, J: ContractionOperator, phi: ControlFunction, probes,
               max_iter: int = 100, tol: float = 1e-10,
               closure_depth: int = 0) -> FixedPointDiagnostics:
    """Iterate J from ``x0`` until d(J^n x0, J^{n+1} x0) <= tol.

    Distances are taken over ``probes`` closed under ``closure_depth`` steps
    of J's argument scaling.  On a closed set J is an exact L-contraction
    except for the outermost layer, so a few layers are enough to see
    geometric decay for perturbations with compact support.

    If no step distance is ever finite the run stops at ``max_iter`` with
    ``first_finite=None``, the infinite branch of the alternative.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if closure_depth < 0:
        raise ValueError("closure_depth must be nonnegative")
    probes = scaled_closure(probes, closure_depth, J.direction)
    cur, nxt = x0, J(x0)
    distances = []
    first_finite = None
    converged = False
    for n in range(max_iter):
        d = probe_distance(cur, nxt, phi, probes)
        distances.append(d)
        if first_finite is None and math.isfinite(d):
            first_finite = n
        if d <= tol:
            converged = True
            break
        cur, nxt = nxt, J(nxt)
    y_star = nxt
    first = distances[0]
    L = J.lipschitz
    return FixedPointDiagnostics(
        start=x0, fixed_point=y_star, operator=J, distances=distances, converged=converged,
        iterations=len(distances), tol=tol, first_finite=first_finite, first_step=first,
        certificate_bound=first / (1 - L) if math.isfinite(first) else math.inf,
        measured=probe_distance(x0, y_star, phi, probes), probes=probes, phi=phi,
    )


@dataclass
class FixedPointReport:
    rate_ok: bool
    max_rate: float
    residual_ok: bool
    residual: float
    certificate_ok: bool
    uniqueness_ok: bool | None
    uniqueness_distance: float | None  # d(y*, y*') in the probe metric
    uniqueness_limit: float | None  # L/(1-L) times the two final step distances
    uniqueness_gap: float | None  # max ||y*(x) - y*'(x)|| / max(1, ||x||)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (self.rate_ok and self.residual_ok and self.certificate_ok
                and self.uniqueness_ok is not False)

    def to_dict(self) -> dict:
        d = dict(vars(self))
        d["passed"] = self.passed
        return d


def verify_dm_conclusions(diag: FixedPointDiagnostics, other: FixedPointDiagnostics | None = None,
                          unique_tol: float = 1e-9, burn_in: int = BURN_IN) -> FixedPointReport:
    """Check geometric decay, the fixed-point residual, the a-priori certificate
    and (with ``other``) that a second start reaches the same fixed point.

    Each returned iterate lies within ``L/(1-L)`` times its last step distance
    of the true fixed point, so two starts agree iff ``d(y*, y*')`` is within
    the sum of those radii.  ``unique_tol`` only absorbs rounding.  The
    scale-relative gap ``max ||y*(x) - y*'(x)|| / max(1, ||x||)`` is reported
    alongside.
    """
    L = diag.operator.lipschitz
    notes = []
    ds = diag.distances
    ratios = [ds[i + 1] / ds[i] for i in range(burn_in, len(ds) - 1)
              if 0 < ds[i] < math.inf and ds[i + 1] > 0]
    max_rate = max(ratios) if ratios else 0.0
    if not diag.converged:
        notes.append(f"not converged after {diag.iterations} steps; last distance {ds[-1]!r}")

    y = diag.fixed_point
    residual = probe_distance(y, diag.operator(y), diag.phi, diag.probes)
    cert_ok = diag.measured <= diag.certificate_bound * (1 + 1e-9)

    u_ok = gap = u_dist = u_lim = None
    if other is not None:
        P = diag.probes
        yo = other.fixed_point
        diff = np.asarray(norm_of(np.asarray(y(P)) - np.asarray(yo(P))), float)
        gap = float(np.max(diff / np.maximum(1.0, np.asarray(norm_of(P), float))))
        u_dist = probe_distance(y, yo, diag.phi, P)
        u_lim = L / (1 - L) * (ds[-1] + other.distances[-1])
        u_ok = u_dist <= u_lim * (1 + 1e-9) + unique_tol
    return FixedPointReport(
        rate_ok=max_rate <= L + RATE_SLACK, max_rate=max_rate,
        residual_ok=diag.converged and residual <= diag.tol, residual=residual,
        certificate_ok=bool(cert_ok), uniqueness_ok=u_ok, uniqueness_distance=u_dist,
        uniqueness_limit=u_lim, uniqueness_gap=gap, notes=notes,
    )
