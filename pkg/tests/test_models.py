import itertools

import numpy as np
import pytest

from nhscore.models import (
    BellModelParams,
    HNParams,
    bell_vectors,
    bond_hopping,
    build_bell_hamiltonian,
    build_hatano_nelson,
    build_jump_operators,
    build_sector_basis,
    effective_hamiltonian,
    interaction_diagonal,
    single_particle_hamiltonian,
    werner_state,
)
from nhscore.operator_core import adjoint


def word(*sites):
    return sum(1 << (s - 1) for s in sites)


# ---------------------------------------------------------------- Bell


def test_perfect_bell_states():
    R, L = bell_vectors(1.0)
    s = 1 / np.sqrt(2)
    expect = np.array([[s, s, 0, 0], [0, 0, s, s], [0, 0, s, -s], [s, -s, 0, 0]])
    np.testing.assert_allclose(R, expect, atol=1e-15)
    np.testing.assert_allclose(L, R.conj().T, atol=1e-15)


def test_imperfect_bell_alpha_half():
    R, L = bell_vectors(0.5)
    assert abs(L[0] @ R[:, 1]) < 1e-12
    assert L[2] @ R[:, 2] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(R[:, 0], np.array([2, 0, 0, 1]) / np.sqrt(5), atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(R, axis=0), 1.0, atol=1e-14)
    np.testing.assert_allclose(L @ R, np.eye(4), atol=1e-12)


@pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
def test_alpha_out_of_range(alpha):
    with pytest.raises(ValueError):
        bell_vectors(alpha)


def test_bell_hamiltonian_examples():
    H = build_bell_hamiltonian(BellModelParams(1.0, (1, 1, 1, 1)))
    np.testing.assert_allclose(H.matrix, np.eye(4), atol=1e-14)
    H = build_bell_hamiltonian(BellModelParams(0.5, (0.1, 0.2, 0.3, 0.4)))
    assert H.trace() == pytest.approx(1.0, abs=1e-12)


def test_bell_alpha_one_is_hermitian(rng):
    for _ in range(100):
        H = build_bell_hamiltonian(BellModelParams.random(1.0, rng))
        np.testing.assert_allclose(H.matrix, adjoint(H).matrix, atol=1e-12)


def test_werner_purity_endpoints():
    np.testing.assert_allclose(werner_state(0.0).matrix, np.eye(4) / 4)
    rho = werner_state(1.0).matrix
    np.testing.assert_allclose(rho @ rho, rho, atol=1e-15)


# ---------------------------------------------------------------- sector basis


def test_sector_basis_small():
    b = build_sector_basis(4, 2)
    assert list(b.states) == [0b0011, 0b0101, 0b0110, 0b1001, 0b1010, 0b1100]
    assert b.index_of(0b1010) == 4
    assert 0b0111 not in b


@pytest.mark.parametrize("N, dim", [(8, 70), (12, 924)])
def test_sector_dimension(N, dim):
    assert build_sector_basis(N, N // 2).dim == dim


def test_sector_basis_bad_args():
    with pytest.raises(ValueError):
        build_sector_basis(4, 5)


# ---------------------------------------------------------------- Hatano-Nelson


def test_boundary_phase():
    assert HNParams(4, 0, 0).boundary_phase == -1
    assert HNParams(6, 0, 0).boundary_phase == 1
    assert HNParams(12, 0, 0).boundary_phase == -1


def test_free_fermion_ground_state_n4():
    b = build_sector_basis(4, 2)
    w = np.sort(np.linalg.eigvalsh(build_hatano_nelson(HNParams(4, 0.0, 0.0), b).matrix))
    # fill two of the anti-periodic levels -2 cos(pi m / 2 + pi / 4)
    levels = -2 * np.cos(np.pi * np.arange(4) / 2 + np.pi / 4)
    fills = sorted(levels[list(c)].sum() for c in itertools.combinations(range(4), 2))
    np.testing.assert_allclose(w, fills, atol=1e-12)
    assert w[0] == pytest.approx(-2 * np.sqrt(2))
    assert w[1] - w[0] == pytest.approx(2 * np.sqrt(2))


@pytest.mark.parametrize("N", [4, 6, 8])
def test_many_body_matches_single_particle_at_v0(N):
    p = HNParams(N, 0.7, 0.0)
    b = build_sector_basis(N, N // 2)
    w = np.linalg.eigvals(build_hatano_nelson(p, b).matrix)
    e = np.linalg.eigvals(single_particle_hamiltonian(p))
    fills = np.array([e[list(c)].sum() for c in itertools.combinations(range(N), N // 2)])
    # compare as multisets
    w = w[np.lexsort((w.imag.round(8), w.real.round(8)))]
    fills = fills[np.lexsort((fills.imag.round(8), fills.real.round(8)))]
    np.testing.assert_allclose(w, fills, atol=1e-9)


def test_interaction_diagonal_examples():
    b = build_sector_basis(4, 2)
    H = build_hatano_nelson(HNParams(4, 0.0, 10.0), b)
    d = np.diag(H.matrix).real
    assert d[b.index_of(word(1, 3))] == 0.0
    assert d[b.index_of(word(1, 2))] == 10.0
    # the ring pair (4, 1)
    assert d[b.index_of(word(1, 4))] == 10.0
    assert interaction_diagonal(b, wrap=False)[b.index_of(word(1, 4))] == 0.0


@pytest.mark.parametrize("chi, V", [(0.3, 0.0), (1.2, 5.0), (2.5, 100.0)])
def test_antihermitian_part_pattern(chi, V):
    b = build_sector_basis(6, 3)
    p = HNParams(6, chi, V)
    d = build_hatano_nelson(p, b).matrix - adjoint(build_hatano_nelson(p, b)).matrix
    assert not np.any(np.diag(d))
    fwd, bwd = bond_hopping(b, p.boundary_phase)
    np.testing.assert_allclose(d, -2 * np.sinh(chi) * (fwd - bwd), atol=1e-12)
    h0 = build_hatano_nelson(HNParams(6, 0.0, 0.0), b).matrix
    np.testing.assert_allclose(np.abs(d), 2 * np.sinh(chi) * np.abs(h0), atol=1e-12)


def test_spectrum_closed_under_conjugation(rng):
    b = build_sector_basis(8, 4)
    for chi, V in zip(rng.uniform(0, 5.4, 10), 10 ** rng.uniform(-1, 4, 10)):
        w = np.linalg.eigvals(build_hatano_nelson(HNParams(8, chi, V), b).matrix)
        wc = np.sort_complex(w.conj())
        w = np.sort_complex(w)
        # pair each eigenvalue with the nearest conjugate
        dist = np.abs(w[:, None] - wc[None, :]).min(axis=1)
        scale = max(1.0, np.abs(w).max())
        assert dist.max() < 1e-8 * scale


def test_translation_invariance_at_v0():
    # relabel i -> i+1 with the boundary phase: spectra agree
    N = 4
    p = HNParams(N, 0.8, 0.0)
    b = build_sector_basis(N, 2)
    H = build_hatano_nelson(p, b).matrix
    perm = np.zeros((b.dim, b.dim))
    for a, w in enumerate(b.states):
        shifted = ((w << 1) | (w >> (N - 1))) & ((1 << N) - 1)
        perm[b.index_of(shifted), a] = 1.0
    H2 = perm @ H @ perm.T
    w1 = np.sort_complex(np.linalg.eigvals(H).round(10))
    w2 = np.sort_complex(np.linalg.eigvals(H2).round(10))
    np.testing.assert_allclose(w1, w2, atol=1e-9)


def test_hn_validation():
    with pytest.raises(ValueError):
        HNParams(5, 1.0, 1.0)
    with pytest.raises(ValueError):
        build_hatano_nelson(HNParams(4, 1.0, 1.0), build_sector_basis(4, 1))


# ---------------------------------------------------------------- jump operators


@pytest.mark.parametrize("N", [4, 6])
@pytest.mark.parametrize("chi", [0.5, 1.0, 2.5])
@pytest.mark.parametrize("sign", [-1, 1])
def test_jump_identities(N, chi, sign):
    p = HNParams(N, chi, 1.3)
    b = build_sector_basis(N, N // 2)
    herm, jumps, g = build_jump_operators(p, b, sign)
    Heff = effective_hamiltonian(herm, jumps, g).matrix
    H = build_hatano_nelson(p, b).matrix
    target = H if sign == -1 else H.conj().T
    target = target - 2j * np.sinh(chi) * (N // 2) * np.eye(b.dim)
    assert np.linalg.norm(Heff - target) < 1e-10
    assert len(jumps) == N
    assert np.allclose(herm.matrix, herm.matrix.conj().T)


def test_jumps_vanish_without_asymmetry():
    p = HNParams(4, 0.0, 2.0)
    b = build_sector_basis(4, 2)
    herm, jumps, g = build_jump_operators(p, b)
    assert g == 0.0
    np.testing.assert_allclose(effective_hamiltonian(herm, jumps, g).matrix,
                               build_hatano_nelson(p, b).matrix, atol=1e-14)


def test_jump_sign_validation():
    b = build_sector_basis(4, 2)
    with pytest.raises(ValueError):
        build_jump_operators(HNParams(4, 1.0, 0.0), b, sign=2)
