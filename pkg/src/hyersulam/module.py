"""The free Hilbert C*-module A^n over A = M_k(C).

A module element is an array of shape ``(..., n, k, k)``: ``n`` components,
each a k-by-k matrix.  The inner product is

    <x, y> = sum_i x_i y_i^*

which is A-linear in the first slot for the left action ``(a x)_i = a x_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cstar import (
    AlgebraDescriptor,
    ShapeError,
    adjoint,
    is_positive,
    operator_norm,
    random_matrix,
    rng,
)

MAX_RANK = 8

# Fixed scalars the axiom checker always visits before random draws.
SCALAR_PALETTE = (0.0, 1.0, -1.0, 1j, 0.5 - 0.5j)


@dataclass(frozen=True)
class ModuleDescriptor:
    dim: int
    rank: int

    def __post_init__(self):
        AlgebraDescriptor(self.dim)
        if not isinstance(self.rank, (int, np.integer)) or self.rank < 1:
            raise ValueError(f"module rank must be a positive integer, got {self.rank!r}")
        if self.rank > MAX_RANK:
            raise ValueError(f"module rank {self.rank} exceeds desk-scale guard {MAX_RANK}")

    @property
    def algebra(self) -> AlgebraDescriptor:
        return AlgebraDescriptor(self.dim)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.rank, self.dim, self.dim)


def zeros(desc: ModuleDescriptor) -> np.ndarray:
    return np.zeros(desc.shape, dtype=complex)


def element(components, desc: ModuleDescriptor | None = None) -> np.ndarray:
    x = np.asarray(components)
    if not np.iscomplexobj(x):
        x = x.astype(complex)
    if x.ndim != 3 or x.shape[1] != x.shape[2]:
        raise ShapeError(f"module element must have shape (n, k, k), got {x.shape}")
    if desc is not None and x.shape != desc.shape:
        raise ShapeError(f"expected shape {desc.shape}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("module element has non-finite entries")
    return x


def _check_pair(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape[-3:] != y.shape[-3:]:
        raise ShapeError(f"descriptor mismatch: {x.shape[-3:]} vs {y.shape[-3:]}")


def inner_product(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    _check_pair(x, y)
    return np.einsum("...iab,...icb->...ac", x, np.conj(y))


def module_action(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Left action, componentwise ``a @ x_i``; ``a`` may carry batch axes."""
    if a.shape[-2:] != x.shape[-2:]:
        raise ShapeError(f"algebra mismatch: {a.shape[-2:]} vs {x.shape[-2:]}")
    return np.asarray(a)[..., None, :, :] @ x


def norm_of(x: np.ndarray) -> np.ndarray | float:
    """Induced norm ||<x, x>||^(1/2).

    Computed on ``x`` rescaled by its largest entry, so that powers of two
    pass through exactly: ``norm_of(x / 2) == norm_of(x) / 2``.
    """
    x = np.asarray(x)
    s = np.max(np.abs(x), axis=(-3, -2, -1))
    safe = np.where(s > 0, s, 1)
    u = x / np.asarray(safe)[..., None, None, None]
    out = np.sqrt(operator_norm(inner_product(u, u))) * np.asarray(s, dtype=np.float64)
    return float(out) if np.ndim(out) == 0 else out


def random_element(desc: ModuleDescriptor, scale: float, seed: int, *stream: int) -> np.ndarray:
    """Gaussian element, entry standard deviation ``scale / sqrt(n k)``.

    With that normalization ``E <x, x> = scale**2 * I``, so the norm is close
    to ``scale``.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    std = scale / math.sqrt(desc.rank * desc.dim)
    return np.stack([
        random_matrix(desc.algebra, seed, std, *stream, i) for i in range(desc.rank)
    ])


def random_unit_element(desc: ModuleDescriptor, seed: int, *stream: int) -> np.ndarray:
    x = random_element(desc, 1.0, seed, *stream)
    return x / norm_of(x)


def probe_set(desc: ModuleDescriptor, count: int, scales=(0.01, 0.1, 1.0, 10.0),
              seed: int = 0, include_zero: bool = True) -> np.ndarray:
    """``count`` probes cycling through ``scales`` at exact norm, zero first.

    Returns an array of shape ``(count, n, k, k)``.
    """
    if count < 1:
        raise ValueError("probe count must be positive")
    out = []
    if include_zero:
        out.append(zeros(desc))
    i = 0
    while len(out) < count:
        s = scales[i % len(scales)]
        out.append(s * random_unit_element(desc, seed, 0xB0B, i))
        i += 1
    return np.stack(out)


def _random_scalars(g: np.random.Generator, m: int) -> np.ndarray:
    out = np.empty(m, dtype=complex)
    k = min(m, len(SCALAR_PALETTE))
    out[:k] = SCALAR_PALETTE[:k]
    out[k:] = g.standard_normal(m - k) + 1j * g.standard_normal(m - k)
    return out


@dataclass
class AxiomReport:
    samples: int
    tol: float
    # Worst violation divided by max(1, product of participating norms).
    violations: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.violations.values())

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "tol": self.tol,
            "violations": dict(sorted(self.violations.items())),
            "raw": dict(sorted(self.raw.items())),
            "passed": self.passed,
        }


def check_axioms(desc: ModuleDescriptor, samples: int, seed: int, tol: float = 1e-10,
                 form=inner_product) -> AxiomReport:
    """Sample the inner-product axioms and the action compatibility identity.

    ``form`` lets a different sesquilinear candidate be audited; it must
    accept batched elements like :func:`inner_product`.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    g = rng(seed, 0xA1)
    m = samples
    # Norms spread over four decades so the relative scaling gets exercised.
    scales = 10.0 ** g.uniform(-2, 1, size=(3, m))
    x, y, z = (
        np.stack([random_element(desc, scales[j, s], seed, 0xA2, j, s) for s in range(m)])
        for j in range(3)
    )
    x[0] = 0  # definiteness edge: <0, 0> = 0
    a = np.stack([random_matrix(desc.algebra, seed, 1.0, 0xA3, s) for s in range(m)])
    alpha = _random_scalars(g, m)
    beta = _random_scalars(g, m)[::-1].copy()
    lam = _random_scalars(g, m)

    nx, ny, nz = norm_of(x), norm_of(y), norm_of(z)
    na = operator_norm(a)
    c = lambda v: np.asarray(v)[:, None, None, None]

    viol, raw = {}, {}

    def record(name, err, scale):
        raw[name] = float(np.max(err))
        viol[name] = float(np.max(err / np.maximum(1.0, scale)))

    lhs = form(c(alpha) * x + c(beta) * y, z)
    rhs = alpha[:, None, None] * form(x, z) + beta[:, None, None] * form(y, z)
    record("i_linearity", operator_norm(lhs - rhs), (np.abs(alpha) * nx + np.abs(beta) * ny) * nz)

    lhs = form(module_action(a, x), y)
    rhs = a @ form(x, y)
    record("ii_module_linearity", operator_norm(lhs - rhs), na * nx * ny)

    record("iii_conjugate_symmetry",
           operator_norm(adjoint(form(x, y)) - form(y, x)), nx * ny)

    gram = form(x, x)
    herm = (gram + adjoint(gram)) / 2
    neg = np.maximum(0.0, -np.linalg.eigvalsh(herm.astype(np.complex128))[:, 0])
    skew = operator_norm(gram - adjoint(gram))
    # tr<x,x> = sum |x_ij|^2 witnesses <x,x> = 0 only at x = 0.
    trace_gap = np.abs(np.trace(gram, axis1=-2, axis2=-1)
                       - np.sum(np.abs(x) ** 2, axis=(-3, -2, -1)))
    record("iv_positivity", neg + skew + trace_gap, nx ** 2)

    ax = module_action(a, x)
    exact = np.abs(c(lam) * ax - module_action(lam[:, None, None] * a, x))
    swap = np.abs(module_action(lam[:, None, None] * a, x) - module_action(a, c(lam) * x))
    record("compatibility",
           np.max(exact, axis=(-3, -2, -1)) + np.max(swap, axis=(-3, -2, -1)),
           np.abs(lam) * na * nx)

    return AxiomReport(samples=m, tol=tol, violations=viol, raw=raw)


def axiom_iv_holds(x: np.ndarray, tol: float = 1e-10) -> bool:
    return is_positive(inner_product(x, x), tol)
