"""Model Hamiltonians: the imperfect-Bell construction and the interacting
Hatano-Nelson ring of spinless fermions.

Conventions
-----------
Two-qubit states use the computational basis ``|q1 q2>`` with index
``2*q1 + q2`` (qubit 1 is the most significant, ``np.kron`` order).

Fermionic sector states are occupation words: bit ``i-1`` of the word is the
occupation of site ``i`` (sites are numbered ``1..N``).  Modes are ordered by
site index for the Jordan-Wigner signs, so ``c_i^dagger c_j`` acting on a word
picks up ``(-1)`` to the number of occupied sites strictly between ``i`` and
``j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .operator_core import Operator

QUBIT2 = "qubit2"
MAX_SITES = 24


# --------------------------------------------------------------------------
# imperfect Bell model


@dataclass(frozen=True)
class BellModelParams:
    alpha: float
    lambdas: tuple[float, float, float, float]

    def __post_init__(self):
        _check_alpha(self.alpha)
        lam = tuple(float(x) for x in self.lambdas)
        if len(lam) != 4 or not all(np.isfinite(lam)):
            raise ValueError("lambdas must be four finite reals")
        object.__setattr__(self, "lambdas", lam)

    @classmethod
    def random(cls, alpha: float, rng: np.random.Generator) -> "BellModelParams":
        """Eigenvalues drawn i.i.d. from the standard normal distribution."""
        return cls(alpha, tuple(rng.standard_normal(4)))


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")


def bell_vectors(alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Right kets and left bras of the imperfect Bell basis.

    Returns
    -------
    right : ndarray, shape (4, 4)
        Column ``m`` is ``|R_{m+1}>``; unit norm.
    left : ndarray, shape (4, 4)
        Row ``m`` is the bra ``<L_{m+1}|``, with ``left @ right = I``.
    """
    _check_alpha(alpha)
    a = float(alpha)
    r = np.zeros((4, 4))
    n12 = np.sqrt(1.0 + 1.0 / a**2)
    n34 = np.sqrt((1.0 - a) ** 2 + 2.0)
    for m, s in enumerate((1.0, -1.0)):
        r[0, m] = 1.0 / a / n12  # (1/a - 1) + 1 on |00>
        r[3, m] = s / n12
        r[0, m + 2] = (1.0 - a) / n34
        r[1, m + 2] = 1.0 / n34
        r[2, m + 2] = s / n34
    lk = np.zeros((4, 4))
    c12 = np.sqrt(1.0 + a**2) / 2.0
    c34 = n34 / 2.0
    for m, s in enumerate((1.0, -1.0)):
        lk[0, m] = c12
        lk[1, m] = c12 * (a - 1.0)
        lk[3, m] = c12 * s / a
        lk[1, m + 2] = c34
        lk[2, m + 2] = c34 * s
    # real vectors: the bra is the transpose of the ket
    return r.astype(np.complex128), lk.T.astype(np.complex128)


def build_bell_hamiltonian(p: BellModelParams) -> Operator:
    """``H = sum_m lambda_m |R_m><L_m|`` in the two-qubit basis."""
    right, left = bell_vectors(p.alpha)
    return Operator((right * np.asarray(p.lambdas)) @ left, QUBIT2)


def werner_state(delta: float) -> Operator:
    """``delta |Psi^-><Psi^-| + (1 - delta) I/4`` with ``|Psi^-> = (|01> - |10>)/sqrt2``."""
    psi = np.array([0.0, 1.0, -1.0, 0.0]) / np.sqrt(2.0)
    rho = delta * np.outer(psi, psi) + (1.0 - delta) * np.eye(4) / 4.0
    return Operator(rho, QUBIT2)


# --------------------------------------------------------------------------
# spinless fermions at fixed filling


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Occupation words of ``n_sites`` modes with ``n_particles`` particles, ascending."""

    n_sites: int
    n_particles: int
    states: np.ndarray = field(repr=False)
    _index: dict = field(repr=False)

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    @property
    def tag(self) -> str:
        return f"fock:N={self.n_sites},k={self.n_particles}"

    def index_of(self, word: int) -> int:
        return self._index[int(word)]

    def __contains__(self, word: int) -> bool:
        return int(word) in self._index

    def occupations(self) -> np.ndarray:
        """Array ``occ[a, i-1]`` = occupation of site ``i`` in basis state ``a``."""
        return ((self.states[:, None] >> np.arange(self.n_sites)) & 1).astype(np.int8)


def build_sector_basis(N: int, k: int) -> SectorBasis:
    if not (0 <= k <= N <= MAX_SITES):
        raise ValueError(f"need 0 <= k <= N <= {MAX_SITES}, got N={N}, k={k}")
    words = np.arange(1 << N, dtype=np.int64)
    pop = np.zeros_like(words)
    for i in range(N):
        pop += (words >> i) & 1
    states = words[pop == k]
    assert states.shape[0] == comb(N, k)
    return SectorBasis(N, k, states, {int(w): a for a, w in enumerate(states)})


@dataclass(frozen=True)
class HNParams:
    n_sites: int
    chi: float
    V: float
    J: float = 1.0
    wrap_interaction: bool = True

    def __post_init__(self):
        if self.n_sites < 2 or self.n_sites % 2:
            raise ValueError("n_sites must be even and >= 2")
        if self.J <= 0 or self.chi < 0 or self.V < 0:
            raise ValueError("need J > 0, chi >= 0, V >= 0")

    @property
    def boundary_phase(self) -> int:
        """-1 (anti-periodic) when N/2 is even, +1 (periodic) when N/2 is odd."""
        return -1 if (self.n_sites // 2) % 2 == 0 else 1


def _check_basis(p: HNParams, basis: SectorBasis) -> None:
    if basis.n_sites != p.n_sites:
        raise ValueError(f"basis has N={basis.n_sites}, params have N={p.n_sites}")
    if basis.n_particles != p.n_sites // 2:
        raise ValueError("Hatano-Nelson model is defined at half filling")


def _bonds(N: int, phase: int):
    """Nearest-neighbour bonds ``(i, j, boundary_factor)`` as 0-based bit positions, ``j = i+1 mod N``."""
    for i in range(N):
        j = (i + 1) % N
        yield i, j, (phase if j == 0 else 1)


def _between_mask(i: int, j: int) -> int:
    lo, hi = min(i, j), max(i, j)
    return ((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1)


def _popcount(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    c = np.zeros_like(x)
    while np.any(x):
        c += x & 1
        x >>= 1
    return c


def hopping_matrix(basis: SectorBasis, i: int, j: int) -> np.ndarray:
    """Sector matrix of ``c^dagger_{site i+1} c_{site j+1}`` (0-based bits ``i != j``)."""
    s = basis.states
    mask = ((s >> j) & 1).astype(bool) & ~((s >> i) & 1).astype(bool)
    src = s[mask]
    dst = src ^ ((1 << j) | (1 << i))
    sign = 1 - 2 * (_popcount(src & _between_mask(i, j)) & 1)
    out = np.zeros((basis.dim, basis.dim))
    rows = np.fromiter((basis.index_of(w) for w in dst), dtype=np.int64, count=dst.shape[0])
    cols = np.nonzero(mask)[0]
    out[rows, cols] = sign
    return out


def bond_hopping(basis: SectorBasis, phase: int) -> tuple[np.ndarray, np.ndarray]:
    """``(sum_i b_i c^dagger_i c_{i+1}, sum_i b_i c^dagger_{i+1} c_i)`` with boundary factors ``b_i``."""
    fwd = np.zeros((basis.dim, basis.dim))
    bwd = np.zeros((basis.dim, basis.dim))
    for i, j, b in _bonds(basis.n_sites, phase):
        fwd += b * hopping_matrix(basis, i, j)
        bwd += b * hopping_matrix(basis, j, i)
    return fwd, bwd


def interaction_diagonal(basis: SectorBasis, wrap: bool = True) -> np.ndarray:
    """Number of adjacent occupied pairs per basis word (ring pair ``(N, 1)`` iff ``wrap``)."""
    N = basis.n_sites
    occ = basis.occupations().astype(np.int64)
    pairs = np.sum(occ[:, :-1] * occ[:, 1:], axis=1)
    if wrap and N > 2:
        pairs = pairs + occ[:, -1] * occ[:, 0]
    return pairs.astype(float)


def build_hatano_nelson(p: HNParams, basis: SectorBasis) -> Operator:
    """``sum_i -J (e^chi c^dag_i c_{i+1} + e^-chi c^dag_{i+1} c_i) + V n_i n_{i+1}`` on the ring."""
    _check_basis(p, basis)
    fwd, bwd = bond_hopping(basis, p.boundary_phase)
    h = -p.J * (np.exp(p.chi) * fwd + np.exp(-p.chi) * bwd)
    h[np.diag_indices_from(h)] += p.V * interaction_diagonal(basis, p.wrap_interaction)
    return Operator(h, basis.tag)


def number_operator(basis: SectorBasis, site: int) -> Operator:
    """``n_site`` for a 1-based ``site``."""
    if not 1 <= site <= basis.n_sites:
        raise ValueError(f"site {site} out of range 1..{basis.n_sites}")
    d = ((basis.states >> (site - 1)) & 1).astype(float)
    return Operator(np.diag(d), basis.tag)


def single_particle_hamiltonian(p: HNParams) -> np.ndarray:
    """``N x N`` one-body hopping matrix with the same boundary phase; ``h[i, j]`` multiplies ``c^dag_i c_j``."""
    N = p.n_sites
    h = np.zeros((N, N))
    for i, j, b in _bonds(N, p.boundary_phase):
        h[i, j] += -p.J * np.exp(p.chi) * b
        h[j, i] += -p.J * np.exp(-p.chi) * b
    return h


# --------------------------------------------------------------------------
# dissipative realization


@dataclass(frozen=True, eq=False)
class SectorMap:
    """Rectangular operator from one particle-number sector to another.

    Jump operators remove a particle, so they cannot be square sector
    matrices; composing ``K^dagger K`` gives back a sector :class:`Operator`.
    """

    matrix: np.ndarray
    source: SectorBasis
    target: SectorBasis

    def dag(self) -> "SectorMap":
        return SectorMap(self.matrix.conj().T, self.target, self.source)

    def __matmul__(self, other: "SectorMap"):
        if other.target is not self.source and other.target.tag != self.source.tag:
            raise ValueError("sector maps do not compose")
        m = self.matrix @ other.matrix
        if self.target.tag == other.source.tag:
            return Operator(m, other.source.tag)
        return SectorMap(m, other.source, self.target)


def annihilation_matrix(source: SectorBasis, target: SectorBasis, i: int) -> np.ndarray:
    """``c_{site i+1}`` from the k-sector to the (k-1)-sector, Jordan-Wigner signed."""
    s = source.states
    mask = ((s >> i) & 1).astype(bool)
    src = s[mask]
    dst = src ^ (1 << i)
    below = (1 << i) - 1
    sign = 1 - 2 * (_popcount(src & below) & 1)
    out = np.zeros((target.dim, source.dim))
    rows = np.fromiter((target.index_of(w) for w in dst), dtype=np.int64, count=dst.shape[0])
    out[rows, np.nonzero(mask)[0]] = sign
    return out


def build_jump_operators(p: HNParams, basis: SectorBasis, sign: int = -1):
    """Hermitian part, jump operators and rate realising the HN model by loss.

    ``K_i = c_i + sign * 1j * c_{i+1}`` with ``c_{N+1}`` carrying the boundary
    phase, ``gamma = 2 J sinh(chi)``.  With ``sign = -1`` the no-jump
    Hamiltonian ``herm - (i/2) gamma sum K^dag K`` equals
    ``H_HN - 2i J sinh(chi) N``; with ``sign = +1`` it equals
    ``H_HN^dagger - 2i J sinh(chi) N``.

    Returns
    -------
    herm_part : Operator
    jumps : list of SectorMap
    gamma : float
    """
    if sign not in (-1, 1):
        raise ValueError("sign must be -1 or +1")
    _check_basis(p, basis)
    N, k = p.n_sites, basis.n_particles
    if k == 0:
        raise ValueError("no particles to remove")
    lower = build_sector_basis(N, k - 1)
    fwd, bwd = bond_hopping(basis, p.boundary_phase)
    herm = -p.J * np.cosh(p.chi) * (fwd + bwd)
    herm[np.diag_indices_from(herm)] += p.V * interaction_diagonal(basis, p.wrap_interaction)
    c = [annihilation_matrix(basis, lower, i) for i in range(N)]
    jumps = []
    for i, j, b in _bonds(N, p.boundary_phase):
        jumps.append(SectorMap(c[i] + sign * 1j * b * c[j], basis, lower))
    gamma = 2.0 * p.J * np.sinh(p.chi)
    return Operator(herm, basis.tag), jumps, float(gamma)


def effective_hamiltonian(herm_part: Operator, jumps, gamma: float) -> Operator:
    """No-jump Hamiltonian ``H - (i/2) gamma sum_m K_m^dagger K_m``."""
    acc = np.zeros((herm_part.dim, herm_part.dim), dtype=np.complex128)
    for K in jumps:
        acc += K.matrix.conj().T @ K.matrix
    return Operator(herm_part.matrix - 0.5j * gamma * acc, herm_part.basis_tag)
