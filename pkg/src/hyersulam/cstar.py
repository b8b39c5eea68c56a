"""The matrix C*-algebra M_k(C).

Elements are plain ``numpy`` arrays of shape ``(..., k, k)``; every function
broadcasts over leading batch axes.  Arithmetic keeps the input dtype, so the
same code runs in ``complex128`` and in extended ``clongdouble`` precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_DIM = 16
_SEED_MASK = (1 << 64) - 1


class ShapeError(ValueError):
    """Operands do not share a descriptor."""


@dataclass(frozen=True)
class AlgebraDescriptor:
    """The algebra M_k(C) for ``dim = k``."""

    dim: int

    def __post_init__(self):
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 1:
            raise ValueError(f"algebra dim must be a positive integer, got {self.dim!r}")
        if self.dim > MAX_DIM:
            raise ValueError(f"algebra dim {self.dim} exceeds desk-scale guard {MAX_DIM}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.dim, self.dim)


def rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for ``(seed, *stream)``; no global state is touched."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & _SEED_MASK, *stream]))


def unit(angle: float) -> complex:
    """The point e^{i angle} of the unit circle."""
    return complex(math.cos(angle), math.sin(angle))


def identity(desc: AlgebraDescriptor) -> np.ndarray:
    return np.eye(desc.dim, dtype=complex)


def zero(desc: AlgebraDescriptor) -> np.ndarray:
    return np.zeros(desc.shape, dtype=complex)


def matrix_unit(desc: AlgebraDescriptor, i: int, j: int) -> np.ndarray:
    """The matrix unit e_ij (zero-based indices)."""
    e = zero(desc)
    e[i, j] = 1.0
    return e


def element(entries, desc: AlgebraDescriptor | None = None) -> np.ndarray:
    """Validate ``entries`` as an algebra element and return a complex array."""
    a = np.asarray(entries)
    if not np.iscomplexobj(a):
        a = a.astype(complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"algebra element must be square, got shape {a.shape}")
    if desc is not None and a.shape != desc.shape:
        raise ShapeError(f"expected shape {desc.shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("algebra element has non-finite entries")
    return a


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-2:] != b.shape[-2:]:
        raise ShapeError(f"descriptor mismatch: {a.shape[-2:]} vs {b.shape[-2:]}")


def adjoint(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return np.conj(np.swapaxes(a, -1, -2))


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a @ b


def lin_comb(alpha: complex, a: np.ndarray, beta: complex, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return alpha * a + beta * b


def operator_norm(a: np.ndarray) -> np.ndarray | float:
    """Largest singular value, as the square root of the top eigenvalue of a*a.

    The input is rescaled by its largest entry first so that squaring cannot
    underflow; the eigensolve itself runs in double precision.
    """
    a = np.asarray(a)
    s = np.max(np.abs(a), axis=(-2, -1), keepdims=True)
    safe = np.where(s > 0, s, 1)
    b = (a / safe).astype(np.complex128)
    top = np.linalg.eigvalsh(adjoint(b) @ b)[..., -1]
    out = np.sqrt(np.maximum(top, 0.0)) * np.asarray(s[..., 0, 0], dtype=np.float64)
    return float(out) if out.ndim == 0 else out


def is_positive(a: np.ndarray, tol: float = 1e-10) -> bool:
    """True iff ``a`` is Hermitian and positive semidefinite up to ``tol``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    a = np.asarray(a, dtype=np.complex128)
    scale = max(1.0, operator_norm(a))
    if operator_norm(a - adjoint(a)) > tol * scale:
        return False
    return bool(np.linalg.eigvalsh((a + adjoint(a)) / 2)[0] >= -tol * scale)


def random_matrix(desc: AlgebraDescriptor, seed: int, std: float = 1.0, *stream: int) -> np.ndarray:
    """Complex Gaussian matrix whose entries have standard deviation ``std``."""
    g = rng(seed, *stream)
    z = g.standard_normal(desc.shape) + 1j * g.standard_normal(desc.shape)
    return z * (std / math.sqrt(2))


def random_unitary(desc: AlgebraDescriptor, seed: int) -> np.ndarray:
    """Haar-distributed unitary from QR of a seeded Gaussian matrix."""
    q, r = np.linalg.qr(random_matrix(desc, seed, 1.0, 0x5EED))
    d = np.diagonal(r)
    return q * (d / np.abs(d))
