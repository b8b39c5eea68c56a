import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hyersulam.cstar import (
    AlgebraDescriptor,
    ShapeError,
    adjoint,
    element,
    identity,
    is_positive,
    lin_comb,
    matrix_unit,
    mul,
    operator_norm,
    random_matrix,
    random_unitary,
)

from conftest import svd_norm

dims = st.integers(1, 5)
seeds = st.integers(0, 2**63 - 1)


def test_descriptor_guards():
    assert AlgebraDescriptor(16).shape == (16, 16)
    with pytest.raises(ValueError):
        AlgebraDescriptor(0)
    with pytest.raises(ValueError):
        AlgebraDescriptor(17)


def test_adjoint_examples():
    d = element(np.diag([1, 2]))
    assert np.array_equal(adjoint(d), d)
    a = element([[0, 1j], [0, 0]])
    assert np.array_equal(adjoint(a), np.array([[0, 0], [-1j, 0]]))


@given(dims, seeds)
def test_involution_exact(k, seed):
    a = random_matrix(AlgebraDescriptor(k), seed)
    assert np.array_equal(adjoint(adjoint(a)), a)


def test_mul_examples():
    A = AlgebraDescriptor(2)
    a = random_matrix(A, 1)
    assert np.array_equal(mul(identity(A), a), a)
    assert np.array_equal(mul(matrix_unit(A, 0, 1), matrix_unit(A, 1, 0)), matrix_unit(A, 0, 0))


def test_mul_shape_error():
    with pytest.raises(ShapeError):
        mul(np.eye(2), np.eye(3))
    with pytest.raises(ShapeError):
        lin_comb(1, np.eye(2), 1, np.eye(3))


def _dense_product(a, b):
    k = a.shape[0]
    return np.array([[sum(a[i, t] * b[t, j] for t in range(k)) for j in range(k)]
                     for i in range(k)])


@given(dims, seeds)
def test_associativity_against_loop_oracle(k, seed):
    A = AlgebraDescriptor(k)
    a, b, c = (random_matrix(A, seed, 1.0, i) for i in range(3))
    ref = _dense_product(_dense_product(a, b), c)
    scale = svd_norm(a) * svd_norm(b) * svd_norm(c)
    assert svd_norm(mul(mul(a, b), c) - ref) <= 1e-13 * scale
    assert svd_norm(mul(a, mul(b, c)) - ref) <= 1e-13 * scale


def test_lin_comb_examples():
    A = AlgebraDescriptor(2)
    a, b = random_matrix(A, 3), random_matrix(A, 4)
    assert np.array_equal(lin_comb(1, a, 0, b), a)
    assert np.array_equal(lin_comb(1, a, -1, a), np.zeros((2, 2)))
    assert np.array_equal(lin_comb(1j, np.eye(2), 1, np.eye(2)), (1 + 1j) * np.eye(2))


def test_operator_norm_examples():
    assert operator_norm(np.eye(4)) == pytest.approx(1.0, abs=1e-15)
    d = element(np.diag([3, 4j]))
    assert operator_norm(d) == pytest.approx(svd_norm(d), rel=1e-14)
    assert operator_norm(d) == pytest.approx(4.0, rel=1e-14)
    assert operator_norm(element([[0, 1], [0, 0]])) == pytest.approx(1.0, rel=1e-14)
    assert operator_norm(np.zeros((3, 3))) == 0.0


def test_operator_norm_batches():
    A = AlgebraDescriptor(3)
    batch = np.stack([random_matrix(A, s) for s in range(5)])
    out = operator_norm(batch)
    assert out.shape == (5,)
    assert np.allclose(out, [svd_norm(b) for b in batch], rtol=1e-13)


def test_operator_norm_extreme_scales():
    a = random_matrix(AlgebraDescriptor(3), 9)
    for s in (1e-150, 1e150):
        assert operator_norm(s * a) == pytest.approx(s * svd_norm(a), rel=1e-12)


@given(dims, seeds, st.floats(-3, 3))
def test_norm_matches_svd_oracle(k, seed, logscale):
    a = random_matrix(AlgebraDescriptor(k), seed, 10.0 ** logscale)
    assert operator_norm(a) == pytest.approx(svd_norm(a), rel=1e-12)


def _pairs(k, n=1000, seed=0):
    A = AlgebraDescriptor(k)
    a = np.stack([random_matrix(A, seed, 1.0, 1, i) for i in range(n)])
    b = np.stack([random_matrix(A, seed, 1.0, 2, i) for i in range(n)])
    return a, b


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_cstar_identities_on_1000_draws(k):
    a, b = _pairs(k)
    na, nb = operator_norm(a), operator_norm(b)
    # anti-multiplicativity
    assert np.all(operator_norm(adjoint(a @ b) - adjoint(b) @ adjoint(a)) <= 1e-13 * na * nb)
    # C*-identity
    assert np.all(np.abs(operator_norm(a @ adjoint(a)) - na ** 2) <= 1e-10 * na ** 2)
    # submultiplicativity
    assert np.all(operator_norm(a @ b) <= na * nb + 1e-12)


def test_is_positive_examples():
    assert is_positive(np.eye(3))
    assert not is_positive(-np.eye(3))
    assert not is_positive(np.array([[0, 1], [0, 0]], dtype=complex))  # not Hermitian
    with pytest.raises(ValueError):
        is_positive(np.eye(2), -1.0)


@pytest.mark.parametrize("k", [1, 2, 4])
def test_positivity_soundness(k):
    a, _ = _pairs(k, 200)
    for ai in a:
        p = ai @ adjoint(ai)
        assert is_positive(p, 1e-10)
        # Hermitian eigenvalue oracle
        assert np.linalg.eigvalsh(p)[0] >= -1e-12 * svd_norm(p)
        assert not is_positive(p - (operator_norm(p) + 1) * np.eye(k), 1e-10)


def test_random_unitary_examples():
    u1 = random_unitary(AlgebraDescriptor(1), 5)
    assert u1.shape == (1, 1)
    assert abs(abs(u1[0, 0]) - 1) <= 1e-15
    for k in (2, 3, 8, 16):
        u = random_unitary(AlgebraDescriptor(k), 42)
        assert operator_norm(u @ adjoint(u) - np.eye(k)) <= 1e-12
        assert operator_norm(u) == pytest.approx(1.0, abs=1e-12)
    a = random_unitary(AlgebraDescriptor(4), 7)
    assert a.tobytes() == random_unitary(AlgebraDescriptor(4), 7).tobytes()
    assert not np.array_equal(a, random_unitary(AlgebraDescriptor(4), 8))


def test_element_validation():
    with pytest.raises(ShapeError):
        element(np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        element(np.eye(2), AlgebraDescriptor(3))
    with pytest.raises(ValueError):
        element([[np.nan, 0], [0, 0]])
