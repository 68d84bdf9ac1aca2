import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nhscore.analysis import hn_operator
from nhscore.measures import (
    FlaggedScoreError,
    ScoreVector,
    ZeroNormError,
    aggregate,
    cross_term,
    frobenius_distance_overlap,
    hamiltonian_nonhermiticity,
    score,
    score_spectrum,
)
from nhscore.models import BellModelParams, bell_vectors, build_bell_hamiltonian, build_sector_basis
from nhscore.observables import DensityMatrix, magnetization, occupation, pauli_z, qubit_entropy
from nhscore.operator_core import Operator
from nhscore.spectral import diagonalize

from conftest import random_complex, random_unitary

VARIANTS = ("operator", "frobenius", "unnormalized_operator")


def vec(*vals, flags=None):
    v = np.array(vals, float)
    return ScoreVector("F", v, np.zeros(v.size, bool) if flags is None else np.array(flags))


@pytest.mark.parametrize("norm", VARIANTS)
def test_hermitian_is_zero(rng, norm):
    b = random_complex(rng, 6)
    assert hamiltonian_nonhermiticity(Operator(b + b.conj().T), norm) == 0.0


def test_zero_hamiltonian():
    with pytest.raises(ZeroNormError):
        hamiltonian_nonhermiticity(Operator(np.zeros((2, 2))))


def test_invariances(rng):
    H = Operator(random_complex(rng, 5))
    U = Operator(random_unitary(rng, 5))
    d = hamiltonian_nonhermiticity(H)
    df = hamiltonian_nonhermiticity(H, "frobenius")
    assert 0 <= d <= 2
    for c in (-3.0, 0.2):
        assert hamiltonian_nonhermiticity(H * c) == pytest.approx(d, rel=1e-9)
    G = U @ H @ U.dag()
    assert hamiltonian_nonhermiticity(G) == pytest.approx(d, rel=1e-9)
    assert hamiltonian_nonhermiticity(G, "frobenius") == pytest.approx(df, rel=1e-9)


def test_antihermitian_hits_upper_bound():
    assert hamiltonian_nonhermiticity(Operator(1j * np.eye(3))) == pytest.approx(2.0)


def test_hn_nonhermiticity_saturates():
    assert hamiltonian_nonhermiticity(hn_operator(12, 5.0, 0.0)) == pytest.approx(2.0, abs=0.05)


def test_unnormalised_is_interaction_independent():
    vals = [hamiltonian_nonhermiticity(hn_operator(8, 1.4, V), "unnormalized_operator") for V in (0, 1, 100)]
    np.testing.assert_allclose(vals, vals[0], rtol=1e-9)


def test_frobenius_overlap_formula():
    H = build_bell_hamiltonian(BellModelParams(0.5, (1, 2, 3, 4)))
    direct = np.linalg.norm(H.matrix - H.matrix.conj().T)
    assert frobenius_distance_overlap(diagonalize(H)) == pytest.approx(direct, rel=1e-9)
    H = hn_operator(8, 1.0, 1.0)
    direct = np.linalg.norm(H.matrix - H.matrix.conj().T)
    assert frobenius_distance_overlap(diagonalize(H)) == pytest.approx(direct, rel=1e-8)
    b = random_complex(np.random.default_rng(3), 4)
    assert frobenius_distance_overlap(diagonalize(Operator(b + b.conj().T))) == pytest.approx(0, abs=1e-6)


def test_complex_spectrum_overlap(rng):
    m = random_complex(rng, 6)
    direct = np.linalg.norm(m - m.conj().T)
    assert frobenius_distance_overlap(diagonalize(Operator(m))) == pytest.approx(direct, rel=1e-8)


def test_bell_magnetisation_scores():
    a = 0.5
    sys = diagonalize(build_bell_hamiltonian(BellModelParams(a, (1, 2, 3, 4))))
    v = score_spectrum(magnetization(), sys)
    k3 = (1 - a) ** 2 / (2 + (1 - a) ** 2)
    np.testing.assert_allclose(v.values, [0.6 + 11 / 21, 0.6 + 11 / 21, k3, k3], atol=1e-12)
    assert v.values[0] == pytest.approx(1.1238, abs=1e-4)
    np.testing.assert_allclose(v.right_values[:2], 0.6, atol=1e-12)
    np.testing.assert_allclose(v.left_values[:2], -11 / 21, atol=1e-12)
    R, L = bell_vectors(a)
    s = score(magnetization(), DensityMatrix.pure(R[:, 2], "qubit2"),
              DensityMatrix.pure(L[2].conj(), "qubit2"))
    assert s == pytest.approx(0.25 / 2.25, abs=1e-12)


def test_hermitian_models_score_zero(rng):
    sys = diagonalize(build_bell_hamiltonian(BellModelParams.random(1.0, rng)))
    assert np.all(score_spectrum(magnetization(), sys).values < 1e-9)
    assert np.all(score_spectrum(qubit_entropy(), sys).values < 1e-9)
    b = build_sector_basis(8, 4)
    sys = diagonalize(hn_operator(8, 0.0, 3.0))
    assert np.all(score_spectrum(occupation(b, 1), sys).values < 1e-9)


def test_score_phase_invariance(rng):
    R, L = bell_vectors(0.3)
    for m in range(4):
        p, q = np.exp(1j * rng.uniform(0, 2 * np.pi, 2))
        a = score(magnetization(), DensityMatrix.pure(R[:, m], "qubit2"), DensityMatrix.pure(L[m].conj(), "qubit2"))
        b = score(magnetization(), DensityMatrix.pure(p * R[:, m], "qubit2"),
                  DensityMatrix.pure(q * L[m].conj(), "qubit2"))
        assert a == pytest.approx(b, abs=1e-13)


def test_cross_term_is_biorthogonal_expectation():
    sys = diagonalize(build_bell_hamiltonian(BellModelParams(0.5, (1, 2, 3, 4))))
    ct = cross_term(pauli_z(1), sys)
    ref = [sys.left[k] @ pauli_z(1).matrix @ sys.right[:, k] for k in range(4)]
    np.testing.assert_allclose(ct, ref, atol=1e-14)


def test_aggregate_examples():
    v = vec(0.2, 0.0, 0.5)
    assert aggregate(v, "infinity") == 0.5
    assert aggregate(v, "p_norm", p=2) == pytest.approx(np.sqrt(0.29))
    assert aggregate(v, "threshold_count", threshold=0.1) == 2
    assert aggregate(v, "threshold_count", threshold=0.1, scaled=True) == pytest.approx(2 / 3)
    assert aggregate(vec(0.0, 0.0), "p_norm") == 0.0


def test_aggregate_ep_policies():
    v = vec(0.2, 0.9, 0.5, flags=[False, True, False])
    assert aggregate(v, "infinity") == 0.9
    assert aggregate(v, "infinity", ep_policy="exclude") == 0.5
    with pytest.raises(FlaggedScoreError):
        aggregate(v, "infinity", ep_policy="error")
    with pytest.raises(ValueError):
        aggregate(v, "median")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=20), st.floats(1, 8))
def test_infinity_below_p_norm(vals, p):
    v = vec(*vals)
    assert aggregate(v, "infinity") <= aggregate(v, "p_norm", p=p) * (1 + 1e-12)
