import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nhscore.operator_core import (
    BasisMismatchError,
    NormConvergenceError,
    Operator,
    adjoint,
    frobenius_norm,
    operator_norm,
)

from conftest import random_complex


def test_construction_rejects_nonfinite_and_nonsquare():
    with pytest.raises(ValueError):
        Operator([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(ValueError):
        Operator(np.ones((2, 3)))


def test_operator_is_immutable():
    a = Operator(np.eye(2))
    with pytest.raises(ValueError):
        a.matrix[0, 0] = 5.0


def test_basis_tag_mismatch_is_loud():
    a = Operator(np.eye(2), "qubit1")
    b = Operator(np.eye(2), "fock:N=2,k=1")
    with pytest.raises(BasisMismatchError):
        a + b
    with pytest.raises(BasisMismatchError):
        a @ b


def test_adjoint_examples():
    A = Operator([[0, 2], [0, 0]])
    np.testing.assert_array_equal(adjoint(A).matrix, [[0, 0], [2, 0]])
    B = Operator(1j * np.eye(2))
    np.testing.assert_array_equal(adjoint(B).matrix, -1j * np.eye(2))


def test_adjoint_of_hermitian(rng):
    b = random_complex(rng, 5)
    A = Operator(b + b.conj().T)
    np.testing.assert_array_equal(adjoint(A).matrix, A.matrix)


def test_norm_examples():
    sz = Operator(np.diag([1.0, -1.0]))
    assert operator_norm(sz) == pytest.approx(1.0, abs=1e-14)
    A = Operator([[0, 2], [0, 0]])
    assert operator_norm(A) == pytest.approx(2.0, abs=1e-14)
    assert frobenius_norm(A) == pytest.approx(2.0, abs=1e-14)
    assert frobenius_norm(Operator.identity(4)) == pytest.approx(2.0, abs=1e-14)
    assert operator_norm(Operator(np.zeros((3, 3)))) == 0.0


def test_operator_norm_against_svd(rng):
    m = random_complex(rng, 8)
    ref = np.linalg.svd(m, compute_uv=False)[0]
    for method in ("dense", "power", "auto"):
        assert operator_norm(m, method=method) == pytest.approx(ref, rel=1e-10)


def test_frobenius_against_trace(rng):
    m = random_complex(rng, 7)
    ref = np.sqrt(np.trace(m.conj().T @ m).real)
    assert abs(frobenius_norm(Operator(m)) - ref) < 1e-12


@pytest.mark.parametrize("dim", [100, 300])
def test_large_matrices_use_iterative_path(rng, dim):
    # above the dense cutoff; a real non-normal matrix like the sweep models
    m = rng.standard_normal((dim, dim)) + np.diag(np.linspace(0, 5, dim))
    ref = np.linalg.svd(m, compute_uv=False)[0]
    assert operator_norm(m) == pytest.approx(ref, rel=1e-9)


def test_power_iteration_budget_raises():
    # two nearly equal top singular values converge slowly
    m = np.diag([1.0, 1.0 - 1e-9, 0.1])
    m[0, 1] = 1e-3
    with pytest.raises(NormConvergenceError) as exc:
        operator_norm(m, method="power", max_iter=2, tol=1e-16)
    assert exc.value.iterations == 2


def test_unknown_method():
    with pytest.raises(ValueError):
        operator_norm(np.eye(2), method="lanczos")


def test_algebra():
    a = Operator([[1, 2], [3, 4]])
    b = Operator([[0, 1], [1, 0]])
    np.testing.assert_array_equal((a @ b).matrix, [[2, 1], [4, 3]])
    np.testing.assert_array_equal((a - a).matrix, np.zeros((2, 2)))
    np.testing.assert_array_equal((2 * a).matrix, (a + a).matrix)
    assert a.trace() == 5
    assert b.is_hermitian()
    assert not a.is_hermitian()


matrices = st.integers(min_value=1, max_value=6).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(min_value=0, max_value=2**32 - 1))
)


@settings(max_examples=40, deadline=None)
@given(matrices)
def test_norm_properties(arg):
    n, seed = arg
    r = np.random.default_rng(seed)
    A = Operator(random_complex(r, n))
    B = Operator(random_complex(r, n))
    na, nb = operator_norm(A), operator_norm(B)
    assert operator_norm(A @ B) <= na * nb + 1e-9
    fa = frobenius_norm(A)
    assert na <= fa + 1e-12
    assert fa <= np.sqrt(n) * na + 1e-12
    assert operator_norm(adjoint(A)) == pytest.approx(na, rel=1e-12)
    assert frobenius_norm(adjoint(A)) == pytest.approx(fa, rel=1e-12)
