"""Exact module homomorphisms, certified perturbations of them, and defect meters.

The catalog maps are ``x -> phase * (x_{sigma(1)} u, ..., x_{sigma(n)} u)``
for a permutation ``sigma``, a unitary ``u`` and ``|phase| = 1``, plus the
zero map.  Since ``<Hx, Hy> = sum_i x_i u u^* y_i^* = <x, y>`` and
``H(a z) = a H(z)``, every such map satisfies both
``H(<x,y> z) = <Hx, Hy> Hz`` and its starred form exactly.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .control import ControlFunction, Direction, _ratio, phi_eval
from .cstar import adjoint, operator_norm, random_unitary, rng
from .module import (
    ModuleDescriptor,
    inner_product,
    module_action,
    norm_of,
    probe_set,
    random_unit_element,
)

UNITARY_TOL = 1e-12
CERT_HEADROOM = 1e-9
ROUNDING_ULPS = 64
_EPS = float(np.finfo(np.longdouble).eps)

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
MU_ANGLES = (0.0, math.pi / 4, math.pi / 2, math.pi, 3 * math.pi / 2,
             2 * math.pi / 3, 1.0, GOLDEN_ANGLE)


class ConfigError(ValueError):
    """Incompatible map / control pairing."""


def mu_palette(count: int, seed: int = 0) -> np.ndarray:
    """Unit scalars: the fixed angles first, then seeded uniform angles."""
    angles = list(MU_ANGLES[:count])
    if count > len(angles):
        angles += list(rng(seed, 0x3C).uniform(0, 2 * math.pi, count - len(angles)))
    return np.exp(1j * np.asarray(angles, dtype=float))


@dataclass(frozen=True, eq=False)
class HomomorphismSpec:
    permutation: tuple | None = None  # None: identity
    right_unitary: np.ndarray | None = None  # None: identity matrix
    phase: float = 0.0  # angle of the unit scalar
    zero: bool = False

    def to_dict(self) -> dict:
        d = {"zero": self.zero, "phase": self.phase,
             "permutation": None if self.permutation is None else list(self.permutation)}
        if self.right_unitary is not None:
            u = np.asarray(self.right_unitary)
            d["right_unitary"] = {"re": u.real.tolist(), "im": u.imag.tolist()}
        return d


def random_homomorphism_spec(desc: ModuleDescriptor, seed: int) -> HomomorphismSpec:
    g = rng(seed, 0x40)
    return HomomorphismSpec(
        permutation=tuple(int(i) for i in g.permutation(desc.rank)),
        right_unitary=random_unitary(desc.algebra, seed),
        phase=float(g.uniform(0, 2 * math.pi)),
    )


@dataclass(frozen=True, eq=False)
class ConstantShift:
    """f(x) = H(x) + c.  Pairs with the p = 0 power control."""

    shift: np.ndarray


@dataclass(frozen=True, eq=False)
class Bump:
    """f(x) = H(x) + amplitude * rho(||x||) * d, with rho compactly supported.

    rho(r) = min(r, radius/4)^p on [0, radius/2], a cubic taper to zero on
    [radius/2, radius], and zero beyond.  ``amplitude=None`` selects the
    largest amplitude for which the additive hypothesis holds analytically.
    """

    amplitude: float | None = None
    radius: float = 1.0
    direction: np.ndarray | None = None
    seed: int = 0


@dataclass(frozen=True, eq=False)
class Homogeneous:
    """f(x) = H(x) + amplitude * ||x||^p * d, for contracting controls with p > 3."""

    amplitude: float | None = None
    p: float | None = None
    direction: np.ndarray | None = None
    seed: int = 0


def bump_profile(r, radius: float, p: float):
    r = np.asarray(r, dtype=float)
    core = np.minimum(r, radius / 4)
    core = np.where(r > 0, core ** p if p else 1.0, 0.0)
    t = np.clip((r - radius / 2) / (radius / 2), 0.0, 1.0)
    return core * (1.0 - t * t * (3.0 - 2.0 * t))


def additive_amplitude_cap(theta: float, p: float) -> float:
    """Largest a with ||eps(mu x + y) - mu eps(x) - eps(y)|| <= theta(||x||^p + ||y||^p)
    whenever ||eps(w)|| <= a ||w||^p.

    Uses (s + t)^p <= C_p (s^p + t^p) with C_p = max(1, 2^(p-1)).
    """
    return theta / (max(1.0, 2.0 ** (p - 1)) + 1.0)


class ApproxMap:
    """An evaluatable map f = H + eps between copies of the same module.

    Evaluation broadcasts over leading batch axes and preserves the input
    dtype (complex128 or clongdouble).
    """

    def __init__(self, descriptor: ModuleDescriptor, base: HomomorphismSpec,
                 perturbation=None, p: float | None = None):
        self.descriptor = descriptor
        self.base = base
        self.perturbation = perturbation
        self.p = p
        rank = descriptor.rank
        perm = tuple(range(rank)) if base.permutation is None else tuple(base.permutation)
        if sorted(perm) != list(range(rank)):
            raise ConfigError(f"permutation {perm} is not a bijection on {rank} components")
        self._perm = None if perm == tuple(range(rank)) else np.array(perm)
        u = base.right_unitary
        if u is not None:
            u = np.array(u, dtype=complex)
            if u.shape != descriptor.algebra.shape:
                raise ConfigError(f"right_unitary has shape {u.shape}")
            dev = operator_norm(u @ adjoint(u) - np.eye(descriptor.dim))
            if dev > UNITARY_TOL:
                raise ConfigError("right_unitary is not unitary within 1e-12")
            u.flags.writeable = False
        # ||u u^* - I|| of the stored unitary: <Hx, Hy> differs from <x, y>
        # by at most this times ||x|| ||y||.
        self.unitarity_defect = 0.0 if u is None or base.zero else float(dev)
        self._u = u
        self._phase = complex(math.cos(base.phase), math.sin(base.phase))

    def base_map(self, x):
        x = np.asarray(x)
        if self.base.zero:
            return np.zeros_like(x)
        if self._perm is not None:
            x = x[..., self._perm, :, :]
        if self._u is not None:
            x = x @ self._u
        return x * self._phase if self._phase != 1 else x

    def perturbation_map(self, x):
        pert = self.perturbation
        x = np.asarray(x)
        if pert is None:
            return np.zeros_like(x)
        if isinstance(pert, ConstantShift):
            return np.broadcast_to(pert.shift, x.shape)
        r = np.asarray(norm_of(x))
        if isinstance(pert, Bump):
            w = pert.amplitude * bump_profile(r, pert.radius, self.p)
        else:
            w = pert.amplitude * r ** pert.p
        return w[..., None, None, None] * pert.direction

    def __call__(self, x):
        x = np.asarray(x)
        if self.perturbation is None:
            return self.base_map(x)
        return self.base_map(x) + self.perturbation_map(x)

    def describe(self) -> dict:
        d = {"base": self.base.to_dict(), "perturbation": None}
        pert = self.perturbation
        if isinstance(pert, ConstantShift):
            d["perturbation"] = {"kind": "constant_shift", "norm": norm_of(pert.shift)}
        elif isinstance(pert, Bump):
            d["perturbation"] = {"kind": "bump", "amplitude": pert.amplitude,
                                 "radius": pert.radius, "p": self.p, "seed": pert.seed}
        elif isinstance(pert, Homogeneous):
            d["perturbation"] = {"kind": "homogeneous", "amplitude": pert.amplitude,
                                 "p": pert.p, "seed": pert.seed}
        return d


def build_homomorphism(spec: HomomorphismSpec, descriptor: ModuleDescriptor) -> ApproxMap:
    return ApproxMap(descriptor, spec)


def _direction_elem(pert, desc: ModuleDescriptor) -> np.ndarray:
    if pert.direction is None:
        return random_unit_element(desc, pert.seed, 0xD1)
    d = np.array(pert.direction, dtype=complex)
    if d.shape != desc.shape:
        raise ConfigError(f"direction element has shape {d.shape}, expected {desc.shape}")
    n = norm_of(d)
    if abs(n - 1.0) > 1e-12:
        raise ConfigError(f"direction element must have unit norm, got {n}")
    return d


def _resolve_amplitude(amplitude, cap: float, kind: str) -> float:
    if amplitude is None:
        return cap
    if amplitude < 0:
        raise ConfigError(f"{kind} amplitude must be nonnegative")
    if amplitude > cap * (1 + 1e-12):
        raise ConfigError(f"{kind} amplitude {amplitude} exceeds the additive cap {cap}")
    return float(amplitude)


def build_perturbed(base: HomomorphismSpec, pert, phi: ControlFunction,
                    descriptor: ModuleDescriptor) -> ApproxMap:
    """Attach ``pert`` to ``base`` so that the additive hypothesis holds for ``phi``.

    The returned map carries the resolved perturbation (amplitude and
    direction filled in).
    """
    if pert is None:
        return build_homomorphism(base, descriptor)
    if phi.kind != "power":
        raise ConfigError("perturbations are calibrated against power controls only")
    theta, p = phi.theta, phi.p
    if isinstance(pert, ConstantShift):
        if p != 0:
            raise ConfigError("CONSTANT_SHIFT requires a power control with p=0")
        c = np.array(pert.shift, dtype=complex)
        if c.shape != descriptor.shape:
            raise ConfigError(f"shift has shape {c.shape}, expected {descriptor.shape}")
        if norm_of(c) > 2 * theta * (1 + 1e-12):
            raise ConfigError(f"shift norm {norm_of(c)} exceeds 2*theta = {2 * theta}")
        c.flags.writeable = False
        return ApproxMap(descriptor, base, ConstantShift(c), p=p)
    if isinstance(pert, Bump):
        if phi.direction is not Direction.EXPAND:
            raise ConfigError("BUMP requires direction=expand")
        if not pert.radius > 0:
            raise ConfigError("BUMP radius must be positive")
        amp = _resolve_amplitude(pert.amplitude, additive_amplitude_cap(theta, p), "BUMP")
        resolved = dataclasses.replace(pert, amplitude=amp,
                                       direction=_direction_elem(pert, descriptor))
        return ApproxMap(descriptor, base, resolved, p=p)
    if isinstance(pert, Homogeneous):
        if phi.direction is not Direction.CONTRACT or not p > 3:
            raise ConfigError("HOMOGENEOUS requires direction=contract and p>3")
        if pert.p is not None and pert.p != p:
            raise ConfigError(f"HOMOGENEOUS p={pert.p} does not match control p={p}")
        amp = _resolve_amplitude(pert.amplitude, additive_amplitude_cap(theta, p), "HOMOGENEOUS")
        resolved = dataclasses.replace(pert, amplitude=amp, p=p,
                                       direction=_direction_elem(pert, descriptor))
        return ApproxMap(descriptor, base, resolved, p=p)
    raise ConfigError(f"unknown perturbation {pert!r}")


def _mu(mu):
    return np.asarray(mu)[..., None, None, None]


def additive_defect(f, x, y, mu=1.0):
    """||f(mu x + y) - mu f(x) - f(y)||."""
    m = _mu(mu)
    return norm_of(f(m * x + y) - m * f(x) - f(y))


def triple_defect(f, x, y, z):
    """||f(<x,y> z) - <f x, f y> f z||."""
    w = module_action(inner_product(x, y), z)
    return norm_of(f(w) - module_action(inner_product(f(x), f(y)), f(z)))


def star_defect(f, x, y, z):
    """||f(<x,y>^* z) - <f x, f y>^* f z||."""
    w = module_action(adjoint(inner_product(x, y)), z)
    return norm_of(f(w) - module_action(adjoint(inner_product(f(x), f(y))), f(z)))


@dataclass
class CertificationReport:
    additive_ratio: float
    product_ratio: float
    star_ratio: float
    per_scale: dict
    region: dict
    suggested_amplitude: float | None = None
    notes: list = field(default_factory=list)

    @property
    def additive_passed(self) -> bool:
        return self.additive_ratio <= 1 + CERT_HEADROOM

    @property
    def product_passed(self) -> bool:
        return self.product_ratio <= 1 + CERT_HEADROOM

    @property
    def star_passed(self) -> bool:
        return self.star_ratio <= 1 + CERT_HEADROOM

    @property
    def passed(self) -> bool:
        return self.additive_passed and self.product_passed and self.star_passed

    def to_dict(self) -> dict:
        return {
            "additive_ratio": self.additive_ratio,
            "product_ratio": self.product_ratio,
            "star_ratio": self.star_ratio,
            "additive_passed": self.additive_passed,
            "product_passed": self.product_passed,
            "star_passed": self.star_passed,
            "per_scale": self.per_scale,
            "region": self.region,
            "suggested_amplitude": self.suggested_amplitude,
            "notes": list(self.notes),
        }


def _sweep(defect, slack, control) -> float:
    excess = np.maximum(np.asarray(defect, float) - slack, 0.0)
    return float(np.max(_ratio(excess, control)))


def certify(f: ApproxMap, phi: ControlFunction, probes=None, n_iter: int = 0,
            seed: int = 0, scales=(0.01, 0.1, 1.0, 10.0), count: int = 24) -> CertificationReport:
    """Worst defect/phi ratio for each hypothesis over a probe region.

    The region is the base probes (``probes`` or a seeded set at ``scales``)
    multiplied by ``factor**n`` for ``n = 0..n_iter``, where ``factor`` is 2
    when expanding and 1/2 when contracting: the points the Hyers iteration
    evaluates ``f`` at.  Evaluation runs in extended precision and each
    defect is reduced by a rounding allowance of ``ROUNDING_ULPS`` units of
    that precision times the magnitude of the terms being cancelled, plus,
    for the product identities, the stored unitary's distance from exact
    unitarity.
    """
    desc = f.descriptor
    if probes is None:
        probes = probe_set(desc, count, scales, seed=seed, include_zero=True)
    probes = np.asarray(probes)
    m = len(probes)
    if m == 0:
        raise ValueError("certification needs probes")
    idx = np.arange(m)
    mus = mu_palette(m, seed)
    x, y, z = probes, probes[(idx + 1) % m], probes[(idx + 2) % m]
    factor = phi.direction.factor
    per = {"additive": [], "product": [], "star": []}
    wx, wy, wz = (np.asarray(v, dtype=np.clongdouble) for v in (x, y, z))
    for n in range(n_iter + 1):
        s = factor ** n
        xs, ys, zs = s * wx, s * wy, s * wz
        nx, ny, nz = (np.asarray(norm_of(v), float) for v in (xs, ys, zs))
        # Rounding allowance: the defects are differences of terms of size
        # ~||x|| + ||y|| (or ||x|| ||y|| ||z||), each carrying a few ulps.
        nsum = np.asarray(norm_of(mus[:, None, None, None] * xs + ys), float)
        add_slack = ROUNDING_ULPS * _EPS * (nx + ny + nsum)
        tri_slack = (ROUNDING_ULPS * _EPS + 2 * f.unitarity_defect) * (nx * ny * nz)
        per["additive"].append(_sweep(additive_defect(f, xs, ys, mus), add_slack,
                                      phi_eval(phi, xs, ys)))
        tri = phi_eval(phi, xs, ys, zs)
        per["product"].append(_sweep(triple_defect(f, xs, ys, zs), tri_slack, tri))
        per["star"].append(_sweep(star_defect(f, xs, ys, zs), tri_slack, tri))
    rep = CertificationReport(
        additive_ratio=max(per["additive"]),
        product_ratio=max(per["product"]),
        star_ratio=max(per["star"]),
        per_scale=per,
        region={"probes": m, "probe_norms": sorted({round(float(v), 12) for v in norm_of(probes)}),
                "scale_factor": factor, "n_max": n_iter},
    )
    amp = getattr(f.perturbation, "amplitude", None)
    worst = max(rep.additive_ratio, rep.product_ratio, rep.star_ratio)
    if not rep.passed:
        if amp is not None and math.isfinite(worst):
            rep.suggested_amplitude = amp / worst
        for name in ("additive", "product", "star"):
            bad = [n for n, r in enumerate(per[name]) if r > 1 + CERT_HEADROOM]
            if bad:
                rep.notes.append(f"{name} hypothesis fails at scale steps {bad[0]}..{bad[-1]}")
    return rep
