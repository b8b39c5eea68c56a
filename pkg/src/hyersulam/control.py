"""Control functions phi: Xi^3 -> [0, inf) and their domination hypotheses.

Two scaling regimes are supported.  ``EXPAND`` controls satisfy
``phi(x, y, z) <= 2 L phi(x/2, y/2, z/2)`` and drive the iteration
``f(2^n x) / 2^n``; ``CONTRACT`` controls satisfy
``phi(x, y, z) <= (L/8) phi(2x, 2y, 2z)`` and drive ``2^n f(x / 2^n)``.

Calling a control with two arguments, ``phi(x, y)``, evaluates the additive
control ``theta (||x||^p + ||y||^p)``.  For ``p > 0`` this is just
``phi(x, y, 0)``; at ``p = 0`` it keeps the additive bound at ``2 theta``
rather than counting a phantom third term.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .module import norm_of

RATIO_HEADROOM = 1e-12


class Direction(str, enum.Enum):
    EXPAND = "expand"
    CONTRACT = "contract"

    @property
    def factor(self) -> float:
        """Argument scaling applied by one step of the iteration."""
        return 2.0 if self is Direction.EXPAND else 0.5


class ContractViolation(ValueError):
    """A control function returned a value outside [0, inf)."""


def _pow2(e: float) -> float:
    return math.exp(e * math.log(2.0))


def power_lipschitz(p: float, direction: Direction | str) -> float:
    direction = Direction(direction)
    if direction is Direction.EXPAND:
        if not 0 <= p < 1:
            raise ValueError(f"expanding power control needs p in [0, 1), got p={p}")
        return _pow2(p - 1)
    if not p > 3:
        raise ValueError(f"contracting power control needs p > 3, got p={p}")
    return _pow2(3 - p)


def _powered_norm(x, p: float):
    r = norm_of(x)
    if p == 0:
        return np.ones_like(r) if np.ndim(r) else 1.0
    return np.power(r, p)


@dataclass(frozen=True)
class ControlFunction:
    """A control with its declared Lipschitz constant.

    Build with :func:`power_control` or :func:`custom_control`.
    """

    direction: Direction
    lipschitz: float
    theta: float | None = None
    p: float | None = None
    evaluator: Callable | None = None

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        if not 0 <= self.lipschitz < 1:
            raise ValueError(f"Lipschitz constant must lie in [0, 1), got {self.lipschitz}")
        if self.evaluator is None:
            if self.theta is None or self.p is None:
                raise ValueError("power control needs theta and p")
            if self.theta < 0:
                raise ValueError("theta must be nonnegative")
            power_lipschitz(self.p, self.direction)  # range check only

    @property
    def kind(self) -> str:
        return "custom" if self.evaluator is not None else "power"

    def __call__(self, x, y, z=None):
        return phi_eval(self, x, y, z)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "direction": self.direction.value, "lipschitz": self.lipschitz}
        if self.kind == "power":
            d.update(theta=self.theta, p=self.p)
        return d


def power_control(theta: float, p: float, direction: Direction | str = Direction.EXPAND,
                  lipschitz: float | None = None) -> ControlFunction:
    """theta (||x||^p + ||y||^p + ||z||^p), with ||x||^0 := 1 for every x."""
    direction = Direction(direction)
    if lipschitz is None:
        lipschitz = power_lipschitz(p, direction)
    return ControlFunction(direction=direction, lipschitz=lipschitz, theta=theta, p=p)


def custom_control(evaluator: Callable, lipschitz: float,
                   direction: Direction | str = Direction.EXPAND) -> ControlFunction:
    """Wrap ``evaluator(x, y, z) -> float``; ``z`` is the zero element for the additive form.

    The Lipschitz constant is taken on trust; :func:`check_domination` is
    the only validation.
    """
    return ControlFunction(direction=Direction(direction), lipschitz=lipschitz, evaluator=evaluator)


def phi_eval(phi: ControlFunction, x, y, z=None):
    """Evaluate ``phi`` on single elements or on aligned batches."""
    if phi.evaluator is None:
        total = _powered_norm(x, phi.p) + _powered_norm(y, phi.p)
        if z is not None:
            total = total + _powered_norm(z, phi.p)
        return phi.theta * total
    x, y = np.asarray(x), np.asarray(y)
    z = np.zeros_like(x) if z is None else np.asarray(z)
    if x.ndim == 3:
        return _checked(phi.evaluator(x, y, z))
    flat = [_checked(phi.evaluator(a, b, c)) for a, b, c in
            zip(x.reshape(-1, *x.shape[-3:]), y.reshape(-1, *y.shape[-3:]),
                z.reshape(-1, *z.shape[-3:]))]
    return np.array(flat).reshape(x.shape[:-3])


def _checked(v) -> float:
    v = float(v)
    if not v >= 0 or not math.isfinite(v):
        raise ContractViolation(f"control function returned {v}")
    return v


def decay_envelope(phi: ControlFunction, n: int, x, y, z=None):
    """L^n phi(x, y, z): the per-step envelope of the stability estimate."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return phi.lipschitz ** n * phi_eval(phi, x, y, z)


def power_rate(phi: ControlFunction) -> float:
    """Exact per-step scaling of a power control under the Hyers iteration.

    Expanding: (1/2) phi(2x) = 2^(p-1) phi(x), equal to L.  Contracting:
    2 phi(x/2) = 2^(1-p) phi(x), strictly below L = 2^(3-p).
    """
    if phi.kind != "power":
        raise ValueError("rate is only defined for power controls")
    return _pow2(phi.p - 1) if phi.direction is Direction.EXPAND else _pow2(1 - phi.p)


def bound_constant(phi: ControlFunction) -> float:
    """Constant K in ||f(x) - H(x)|| <= K phi(x, x)."""
    L = phi.lipschitz
    if phi.direction is Direction.EXPAND:
        return 1.0 / (2.0 - 2.0 * L)
    return L / (8.0 - 8.0 * L)


def first_step_constant(phi: ControlFunction) -> float:
    """Bound on d(f, Jf): 1/2 when expanding, L/8 when contracting."""
    return 0.5 if phi.direction is Direction.EXPAND else phi.lipschitz / 8.0


def power_bound_coefficient(theta: float, p: float, direction: Direction | str) -> float:
    """Coefficient C in ||f(x) - H(x)|| <= C ||x||^p for power controls."""
    direction = Direction(direction)
    power_lipschitz(p, direction)
    if direction is Direction.EXPAND:
        return 2.0 * theta / (2.0 - _pow2(p))
    return 2.0 * theta / (_pow2(p) - 8.0)


@dataclass
class DominationReport:
    worst_ratio: float
    worst_index: int
    count: int

    @property
    def passed(self) -> bool:
        return self.worst_ratio <= 1.0 + RATIO_HEADROOM

    def to_dict(self) -> dict:
        return {"worst_ratio": self.worst_ratio, "worst_index": self.worst_index,
                "count": self.count, "passed": self.passed}


def _ratio(lhs, rhs):
    lhs, rhs = np.asarray(lhs, float), np.asarray(rhs, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1), np.where(lhs > 0, np.inf, 0.0))
    return r


def check_domination(phi: ControlFunction, probes) -> DominationReport:
    """Test the direction's domination inequality on probe triples.

    ``probes`` is a sequence of ``(x, y, z)`` triples or an array of shape
    ``(m, 3, n, k, k)``.
    """
    t = np.asarray(probes)
    if t.ndim != 5 or t.shape[1] != 3 or len(t) == 0:
        raise ValueError("probes must be a nonempty list of (x, y, z) triples")
    x, y, z = t[:, 0], t[:, 1], t[:, 2]
    lhs = phi_eval(phi, x, y, z)
    L = phi.lipschitz
    if phi.direction is Direction.EXPAND:
        rhs = 2.0 * L * phi_eval(phi, x / 2, y / 2, z / 2)
    else:
        rhs = L / 8.0 * phi_eval(phi, 2 * x, 2 * y, 2 * z)
    r = _ratio(lhs, rhs)
    i = int(np.argmax(r))
    return DominationReport(worst_ratio=float(r[i]), worst_index=i, count=len(r))
