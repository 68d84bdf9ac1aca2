"""State functionals: expectation values, partial traces, entropy and purity.

Reduced states of qubit registers follow ``np.kron`` order (qubit 1 most
significant).  Fermionic sector states are embedded into the full
``2**N`` occupation space and then treated as an ``N``-qubit register with
site 1 as the most significant factor; for a block of sites that is
contiguous in Jordan-Wigner order this embedding carries no extra signs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .models import QUBIT2, SectorBasis
from .operator_core import Operator

PSD_CLIP = 1e-10
NORM_TOL = 1e-10


class NotAStateError(ValueError):
    """Density matrix with a clearly negative eigenvalue or vanishing trace."""


class UnsupportedBipartitionError(ValueError):
    pass


class DensityMatrix(Operator):
    """An :class:`Operator` used as a (possibly unnormalised) state."""

    __slots__ = ()

    @classmethod
    def from_operator(cls, op: Operator) -> "DensityMatrix":
        return cls._wrap(op.matrix, op.basis_tag)

    @classmethod
    def pure(cls, vec, basis_tag: str = "generic") -> "DensityMatrix":
        """``|v><v| / <v|v>``."""
        v = np.asarray(vec, dtype=np.complex128).ravel()
        nv = np.vdot(v, v).real
        if nv <= 0:
            raise NotAStateError("zero vector")
        return cls._wrap(np.outer(v, v.conj()) / nv, basis_tag)

    @property
    def normalized(self) -> bool:
        return abs(self.trace() - 1.0) <= NORM_TOL

    def normalize(self) -> "DensityMatrix":
        tr = self.trace().real
        if not tr > 0:
            raise NotAStateError("vanishing trace")
        return DensityMatrix._wrap(self.matrix / tr, self.basis_tag)


def _as_dm(rho) -> DensityMatrix:
    if isinstance(rho, DensityMatrix):
        return rho
    if isinstance(rho, Operator):
        return DensityMatrix.from_operator(rho)
    return DensityMatrix(rho)


def qubit_tag(n: int) -> str:
    return QUBIT2 if n == 2 else f"qubit{n}"


def pauli_z(qubit: int = 1, n_qubits: int = 2) -> Operator:
    """``sigma_z`` on one qubit (1-based) of an ``n_qubits`` register."""
    if not 1 <= qubit <= n_qubits:
        raise ValueError("qubit index out of range")
    ops = [np.eye(2)] * n_qubits
    ops[qubit - 1] = np.diag([1.0, -1.0])
    m = ops[0]
    for o in ops[1:]:
        m = np.kron(m, o)
    return Operator(m, qubit_tag(n_qubits))


def staggered_magnetization(basis: SectorBasis) -> Operator:
    """Diagonal ``sum_i (-1)^i n_i`` with 1-based site index ``i``."""
    signs = np.array([(-1.0) ** i for i in range(1, basis.n_sites + 1)])
    return Operator(np.diag(basis.occupations() @ signs), basis.tag)


def expectation(O: Operator, rho, hermitian: bool | None = None, atol: float = 1e-9) -> float:
    """``Re Tr(O rho)`` for a normalised state.

    For Hermitian ``O`` the imaginary part of the trace must stay below
    ``atol``; a larger residual means ``rho`` is not a physical state.
    """
    rho = _as_dm(rho)
    O._check(rho)
    if not rho.normalized:
        raise NotAStateError(f"state not normalised (trace {rho.trace():.3e})")
    val = np.einsum("ij,ji->", O.matrix, rho.matrix)
    if hermitian is None:
        hermitian = O.is_hermitian()
    if hermitian and abs(val.imag) > atol:
        raise ValueError(f"imaginary residual {val.imag:.3e} for Hermitian observable")
    return float(val.real)


# --------------------------------------------------------------------------
# bipartitions


@dataclass(frozen=True)
class Bipartition:
    """Sites kept after tracing; 1-based, sorted."""

    kept_sites: tuple[int, ...]
    n_sites: int

    def __post_init__(self):
        kept = tuple(sorted(int(s) for s in self.kept_sites))
        if len(set(kept)) != len(kept) or any(not 1 <= s <= self.n_sites for s in kept):
            raise ValueError(f"invalid kept sites {self.kept_sites} for {self.n_sites} sites")
        object.__setattr__(self, "kept_sites", kept)

    @property
    def traced_sites(self) -> tuple[int, ...]:
        return tuple(s for s in range(1, self.n_sites + 1) if s not in self.kept_sites)

    @property
    def contiguous(self) -> bool:
        k = self.kept_sites
        return not k or k[-1] - k[0] + 1 == len(k)

    @classmethod
    def half_chain(cls, n_sites: int) -> "Bipartition":
        """Keep sites ``1..N/2``, trace ``N/2+1..N``."""
        return cls(tuple(range(1, n_sites // 2 + 1)), n_sites)


def kron_index(basis: SectorBasis) -> np.ndarray:
    """Position of every sector word in the ``2**N`` register with site 1 most significant."""
    N = basis.n_sites
    out = np.zeros(basis.dim, dtype=np.int64)
    for i in range(N):
        out |= ((basis.states >> i) & 1) << (N - 1 - i)
    return out


def embed(vectors: np.ndarray, basis: SectorBasis) -> np.ndarray:
    """Embed sector vectors (columns, or a single vector) into the full register."""
    v = np.asarray(vectors, dtype=np.complex128)
    single = v.ndim == 1
    v2 = v[:, None] if single else v
    out = np.zeros((1 << basis.n_sites, v2.shape[1]), dtype=np.complex128)
    out[kron_index(basis)] = v2
    return out[:, 0] if single else out


def _register_size(rho: DensityMatrix, basis: SectorBasis | None) -> int:
    if basis is not None:
        if rho.basis_tag != basis.tag:
            raise ValueError("state and sector basis do not match")
        return basis.n_sites
    n = rho.dim.bit_length() - 1
    if 1 << n != rho.dim:
        raise ValueError("state is not a qubit register; pass the sector basis")
    return n


def _check_part(part: Bipartition, n: int, fermionic: bool) -> None:
    if part.n_sites != n:
        raise ValueError(f"bipartition is for {part.n_sites} sites, state has {n}")
    if fermionic and not part.contiguous:
        raise UnsupportedBipartitionError(
            "fermionic partial trace needs a block contiguous in Jordan-Wigner order"
        )


def _trace_register(m: np.ndarray, n: int, kept: Sequence[int]) -> np.ndarray:
    axes_k = [s - 1 for s in kept]
    axes_t = [a for a in range(n) if a not in axes_k]
    t = m.reshape([2] * (2 * n))
    perm = axes_k + axes_t + [n + a for a in axes_k] + [n + a for a in axes_t]
    dk, dt = 1 << len(axes_k), 1 << len(axes_t)
    t = t.transpose(perm).reshape(dk, dt, dk, dt)
    return np.einsum("ajbj->ab", t)


def partial_trace(rho, part: Bipartition, basis: SectorBasis | None = None) -> DensityMatrix:
    """Reduced state on ``part.kept_sites``.

    Parameters
    ----------
    rho : DensityMatrix or Operator
        State on a qubit register, or on a fermionic sector if ``basis`` is given.
    part : Bipartition
    basis : SectorBasis, optional
        Needed for fermionic sector states; the block must be contiguous.
    """
    rho = _as_dm(rho)
    n = _register_size(rho, basis)
    _check_part(part, n, basis is not None)
    m = rho.matrix
    if basis is not None:
        idx = kron_index(basis)
        full = np.zeros((1 << n, 1 << n), dtype=np.complex128)
        full[np.ix_(idx, idx)] = m
        m = full
    red = _trace_register(m, n, part.kept_sites)
    tr = np.trace(red).real
    if tr <= 0:
        raise NotAStateError("vanishing trace")
    return DensityMatrix._wrap(red / tr, qubit_tag(len(part.kept_sites)))


def reduced_spectra(vectors: np.ndarray, part: Bipartition, basis: SectorBasis | None = None) -> list:
    """Eigenvalues of the reduced state of each column of ``vectors`` (pure states).

    Same numbers as ``eigvalsh(partial_trace(|v><v|, part))`` per column,
    obtained from Schmidt values.  For sector states the Schmidt matrix is
    block diagonal in the particle number of the kept block, so each block is
    decomposed separately; zero eigenvalues outside the blocks are omitted.

    Returns
    -------
    list of ndarray
        One array of shape ``(n_vectors, m)`` per block; the spectrum of
        column ``c`` is the concatenation of row ``c`` of every block.
    """
    v = np.asarray(vectors, dtype=np.complex128)
    if v.ndim == 1:
        v = v[:, None]
    nb = v.shape[1]
    if basis is not None:
        n = basis.n_sites
        _check_part(part, n, True)
        words = kron_index(basis)
    else:
        n = v.shape[0].bit_length() - 1
        _check_part(part, n, False)
        words = np.arange(v.shape[0])
    kept = [n - s for s in part.kept_sites]  # bit positions in the register word
    traced = [n - s for s in part.traced_sites]
    ka = np.zeros_like(words)
    tb = np.zeros_like(words)
    for j, bit in enumerate(reversed(kept)):
        ka |= ((words >> bit) & 1) << j
    for j, bit in enumerate(reversed(traced)):
        tb |= ((words >> bit) & 1) << j
    nk = np.zeros_like(words)
    for bit in kept:
        nk += (words >> bit) & 1
    groups = [np.nonzero(nk == g)[0] for g in np.unique(nk)] if basis is not None else [np.arange(words.size)]
    blocks = []
    total = np.zeros(nb)
    for rows in groups:
        ua, ia = np.unique(ka[rows], return_inverse=True)
        ub, ib = np.unique(tb[rows], return_inverse=True)
        M = np.zeros((nb, ua.size, ub.size), dtype=np.complex128)
        M[:, ia, ib] = v[rows].T
        p = np.linalg.svd(M, compute_uv=False) ** 2
        total += p.sum(axis=1)
        blocks.append(p)
    return [p / total[:, None] for p in blocks]


def entropy_from_spectrum(p: np.ndarray) -> np.ndarray:
    """``-sum p log2 p`` along the last axis, with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return np.sum(terms, axis=-1)


def von_neumann_entropy(rho) -> float:
    """``-Tr rho log2 rho`` of a normalised Hermitian PSD state."""
    rho = _as_dm(rho)
    if not rho.normalized:
        raise NotAStateError(f"state not normalised (trace {rho.trace():.6g})")
    m = rho.matrix
    p = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    if p[0] < -PSD_CLIP:
        raise NotAStateError(f"negative eigenvalue {p[0]:.3e}")
    return float(entropy_from_spectrum(np.clip(p, 0.0, None)))


def purity(rho) -> float:
    """``Tr(rho^2) / Tr(rho)^2``; accepts unnormalised states."""
    rho = _as_dm(rho)
    tr = rho.trace()
    if abs(tr) < 1e-300:
        raise NotAStateError("vanishing trace")
    m = rho.matrix
    return float((np.einsum("ij,ji->", m, m) / tr**2).real)


def biorthogonal_entropy(right: np.ndarray, left_bra: np.ndarray, part: Bipartition,
                         basis: SectorBasis | None = None) -> complex:
    """Diagnostic ``-sum mu log2 mu`` over eigenvalues of ``Tr_B |R><L|``.

    The eigenvalues are complex in general; the principal branch of the
    logarithm is used.  Not a certified entropy.
    """
    r = np.asarray(right, dtype=np.complex128).ravel()
    lb = np.asarray(left_bra, dtype=np.complex128).ravel()
    if basis is not None:
        n = basis.n_sites
        _check_part(part, n, True)
        r, lb = embed(r, basis), embed(lb, basis)
    else:
        n = r.shape[0].bit_length() - 1
    m = np.outer(r, lb)
    red = _trace_register(m, n, part.kept_sites)
    red = red / np.trace(red)
    mu = np.linalg.eigvals(red)
    mu = mu[np.abs(mu) > 1e-14]
    return complex(-np.sum(mu * np.log(mu)) / np.log(2.0))


# --------------------------------------------------------------------------
# functionals used by the scores


class StateFunctional:
    """A real function of a state, ``F[rho]``.

    Subclasses may override :meth:`on_pure` with a vectorised evaluation on
    normalised pure states stored as columns.
    """

    name = "F"

    def __call__(self, rho) -> float:
        raise NotImplementedError

    def on_pure(self, vectors: np.ndarray, basis_tag: str) -> np.ndarray:
        return np.array([self(DensityMatrix.pure(v, basis_tag)) for v in vectors.T])


class ExpectationFunctional(StateFunctional):
    def __init__(self, op: Operator, name: str):
        self.op = op
        self.name = name
        self._diag = np.diag(op.matrix).real.copy() if _is_real_diagonal(op.matrix) else None

    def __call__(self, rho) -> float:
        return expectation(self.op, rho, hermitian=True)

    def on_pure(self, vectors, basis_tag):
        if basis_tag != self.op.basis_tag:
            raise ValueError("basis mismatch")
        v = np.asarray(vectors)
        nrm = np.sum(np.abs(v) ** 2, axis=0)
        if self._diag is not None:
            return (self._diag @ (np.abs(v) ** 2)) / nrm
        return np.real(np.einsum("ik,ij,jk->k", v.conj(), self.op.matrix, v)) / nrm


def _is_real_diagonal(m: np.ndarray) -> bool:
    return not np.any(m - np.diag(np.diag(m))) and not np.any(np.diag(m).imag)


class EntropyFunctional(StateFunctional):
    """Von Neumann entropy (base 2) of the reduced state on ``part``."""

    def __init__(self, part: Bipartition, basis: SectorBasis | None = None, name: str = "vne"):
        self.part = part
        self.basis = basis
        self.name = name

    def __call__(self, rho) -> float:
        return von_neumann_entropy(partial_trace(rho, self.part, self.basis))

    def on_pure(self, vectors, basis_tag):
        return sum(entropy_from_spectrum(p) for p in reduced_spectra(vectors, self.part, self.basis))


class PurityFunctional(StateFunctional):
    name = "purity"

    def __call__(self, rho) -> float:
        return purity(rho)

    def on_pure(self, vectors, basis_tag):
        return np.ones(np.asarray(vectors).shape[1])


class GlobalEntropyFunctional(StateFunctional):
    """Entropy of the whole state (0 on pure states)."""

    name = "vne_global"

    def __call__(self, rho) -> float:
        return von_neumann_entropy(_as_dm(rho).normalize())

    def on_pure(self, vectors, basis_tag):
        return np.zeros(np.asarray(vectors).shape[1])


def magnetization(qubit: int = 1) -> ExpectationFunctional:
    """``m_z = Tr(sigma_z rho)`` on one qubit of the two-qubit register."""
    return ExpectationFunctional(pauli_z(qubit, 2), "m_z")


def occupation(basis: SectorBasis, site: int = 1) -> ExpectationFunctional:
    from .models import number_operator

    return ExpectationFunctional(number_operator(basis, site), f"n_{site}")


def staggered(basis: SectorBasis) -> ExpectationFunctional:
    return ExpectationFunctional(staggered_magnetization(basis), "staggered")


def half_chain_entropy(basis: SectorBasis) -> EntropyFunctional:
    return EntropyFunctional(Bipartition.half_chain(basis.n_sites), basis, "vne_half")


def qubit_entropy(kept_qubit: int = 1) -> EntropyFunctional:
    """Entanglement entropy of one qubit of the two-qubit register."""
    return EntropyFunctional(Bipartition((kept_qubit,), 2), None, "vne")


def as_functional(f) -> StateFunctional:
    if isinstance(f, StateFunctional):
        return f
    if callable(f):
        return _CallableFunctional(f)
    raise TypeError("functional must be a StateFunctional or a callable")


class _CallableFunctional(StateFunctional):
    def __init__(self, f: Callable):
        self._f = f
        self.name = getattr(f, "__name__", "F")

    def __call__(self, rho) -> float:
        return float(self._f(rho))
