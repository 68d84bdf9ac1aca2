"""Biorthogonal diagonalization and the spectral propagator.

The right eigenvectors come from a dense general eigensolver (LAPACK
``*geev``: Hessenberg reduction plus shifted QR).  Left eigenvectors are the
rows of the inverse of the right-eigenvector matrix, so the pairing
``<L_m|R_n> = delta_mn`` holds by construction and no eigenvalue matching
between two solver runs is ever needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .operator_core import Operator

EP_THRESHOLD = 1e8
# relative eigenvalue distance under which eigenvalues are treated as one cluster
CLUSTER_RTOL = 1e-9
# an orthonormalised cluster is kept only if it is still an eigenbasis to this
# relative residual.  Near exceptional points an exactly degenerate pair is
# split by rounding amplified by the eigenvalue condition number, so the
# residual of a correct orthonormal basis can sit well above machine epsilon.
CLUSTER_RESIDUAL = 1e-10
# eigenvalue condition numbers beyond this are treated as an exact defect
DEFECT_CONDITION = 1e13
OVERFLOW_LOG = 700.0


class DefectiveMatrixError(np.linalg.LinAlgError):
    """The right-eigenvector matrix is singular: an exceptional point.

    Attributes
    ----------
    cluster : list of complex
        The nearly coalescing eigenvalues.
    """

    def __init__(self, cluster, detail: str = ""):
        self.cluster = [complex(c) for c in cluster]
        msg = "defective matrix (exceptional point) near eigenvalues " + ", ".join(
            f"{c.real:.12g}{c.imag:+.12g}j" for c in self.cluster
        )
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class PropagatorOverflowError(OverflowError):
    pass


@dataclass(frozen=True, eq=False)
class BiorthogonalSystem:
    """Eigenvalues with paired right columns and left rows.

    ``right[:, m]`` is ``|R_m>`` (unit norm) and ``left[m, :]`` is ``<L_m|``,
    so ``left @ right`` is the identity.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    condition: float
    ep_flag: bool
    basis_tag: str = "generic"
    cluster_sizes: tuple = field(default=(), repr=False)

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def left_kets(self) -> np.ndarray:
        """Columns ``|L_m> = (<L_m|)^dagger``."""
        return self.left.conj().T

    def reconstruct(self) -> Operator:
        m = (self.right * self.eigenvalues) @ self.left
        return Operator._wrap(m, self.basis_tag)


def _sort_key(w: np.ndarray) -> np.ndarray:
    return np.lexsort((w.imag, w.real))


def _clusters(w: np.ndarray, scale: float) -> list[np.ndarray]:
    """Group indices of a sorted spectrum into near-degenerate clusters."""
    tol = CLUSTER_RTOL * max(scale, 1.0)
    n = w.shape[0]
    # union-find over pairs closer than tol; spectra are small enough that a
    # windowed scan over the real-sorted order suffices
    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        j = i + 1
        while j < n and w[j].real - w[i].real <= tol:
            if abs(w[j] - w[i]) <= tol:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
            j += 1
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [np.array(g) for g in groups.values()]


def _orthonormalize_cluster(mv, w, vr, idx, scale) -> bool:
    """Replace the solver's basis of a degenerate eigenspace by an orthonormal one.

    ``mv`` is ``H @ vr`` for the unmodified columns.  Skipped (returns False)
    when the block is rank deficient or when the orthonormal combination is
    no longer an eigenbasis, i.e. the cluster holds distinct eigenvalues that
    merely lie close together.
    """
    block = vr[:, idx]
    q, r = np.linalg.qr(block)
    sv = np.linalg.svd(r, compute_uv=False)
    if sv[-1] <= 1e-8 * sv[0]:
        return False
    rinv = np.linalg.inv(r)
    lam = np.mean(w[idx])
    # H q = (H block) r^-1, so the residual needs no further product with H
    res = np.linalg.norm(mv[:, idx] @ rinv - lam * q, axis=0)
    if np.max(res) > CLUSTER_RESIDUAL * max(scale, 1.0):
        return False
    vr[:, idx] = q
    return True


def _most_parallel(w, vr, k=None):
    g = np.abs(vr.conj().T @ vr)
    np.fill_diagonal(g, 0.0)
    if k is None:
        k = int(np.argmax(np.max(g, axis=1)))
    j = int(np.argmax(g[k]))
    return [w[k], w[j]]


def diagonalize(H, ep_threshold: float = EP_THRESHOLD) -> BiorthogonalSystem:
    """Biorthogonal eigendecomposition ``H = sum_m lambda_m |R_m><L_m|``.

    Eigenvalues are sorted by real part, ties by imaginary part.  Within a
    cluster of numerically degenerate eigenvalues the right vectors are
    orthonormalised (any basis of the eigenspace is valid; this one is
    canonical and makes normal matrices come out with ``L = R^dagger``).
    Exactly Hermitian input goes to the symmetric solver and gets
    ``L = R^dagger`` and ``condition = 1`` directly.

    Parameters
    ----------
    H : Operator or ndarray
    ep_threshold : float
        ``ep_flag`` is set when the eigenvalue condition number
        ``max_m ||L_m|| ||R_m|| / |<L_m|R_m>|`` exceeds this.

    Raises
    ------
    DefectiveMatrixError
        If the right eigenvectors are linearly dependent at working precision.
    """
    if ep_threshold <= 0:
        raise ValueError("ep_threshold must be positive")
    if isinstance(H, Operator):
        m, tag = H.matrix, H.basis_tag
    else:
        m, tag = np.asarray(H, dtype=np.complex128), "generic"
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("H must be square")
    n = m.shape[0]
    if np.array_equal(m, m.conj().T):
        # exactly Hermitian input: the symmetric solver returns an orthonormal
        # eigenbasis even inside near-degenerate clusters, so L = R^dagger
        w, vr = np.linalg.eigh(m)
        vr = vr.astype(np.complex128)
        order = _sort_key(w.astype(np.complex128))
        w, vr = w[order].astype(np.complex128), vr[:, order]
        return BiorthogonalSystem(
            eigenvalues=w, right=vr, left=vr.conj().T.copy(), condition=1.0,
            ep_flag=bool(1.0 > ep_threshold), basis_tag=tag,
            cluster_sizes=tuple(sorted((len(c) for c in _clusters(w, float(np.max(np.abs(w))))), reverse=True)),
        )
    a = m.real.copy() if not np.any(m.imag) else m
    w, vr = sla.eig(a, check_finite=False)
    w = w.astype(np.complex128)
    vr = vr.astype(np.complex128)
    order = _sort_key(w)
    w, vr = w[order], vr[:, order]

    vr /= np.linalg.norm(vr, axis=0)
    scale = float(np.max(np.abs(w))) if n else 1.0
    sizes = []
    mv = None
    for idx in _clusters(w, scale):
        sizes.append(len(idx))
        if len(idx) > 1:
            if mv is None:
                mv = m @ vr
            _orthonormalize_cluster(mv, w, vr, idx, scale)

    try:
        left = np.linalg.inv(vr)
    except np.linalg.LinAlgError:
        left = None
    if left is None or not np.all(np.isfinite(left)):
        raise DefectiveMatrixError(_most_parallel(w, vr), "right-eigenvector matrix is singular")
    # rows of the inverse already satisfy <L_m|R_m> = 1; rescale explicitly
    # so rounding in the inverse does not leak into the pairing
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        diag = np.einsum("ij,ji->i", left, vr)
        left /= diag[:, None]
        cond_m = np.linalg.norm(left, axis=1)
    cond_m = np.where(np.isfinite(cond_m), cond_m, np.inf)
    condition = float(np.max(cond_m))
    if condition > DEFECT_CONDITION:
        k = int(np.argmax(cond_m))
        raise DefectiveMatrixError(
            _most_parallel(w, vr, k), f"eigenvalue condition number {condition:.3e}"
        )
    return BiorthogonalSystem(
        eigenvalues=w,
        right=vr,
        left=left,
        condition=condition,
        ep_flag=bool(condition > ep_threshold),
        basis_tag=tag,
        cluster_sizes=tuple(sorted(sizes, reverse=True)),
    )


def eigen_order(eigenvalues) -> np.ndarray:
    """Permutation putting eigenvalues in canonical order (real, then imaginary part).

    Accepts a :class:`BiorthogonalSystem` or a plain array; for a system
    returned by :func:`diagonalize` the result is the identity permutation.
    """
    w = eigenvalues.eigenvalues if isinstance(eigenvalues, BiorthogonalSystem) else np.asarray(eigenvalues)
    return _sort_key(np.asarray(w, dtype=np.complex128))


def level_spacing(sys: BiorthogonalSystem) -> float:
    """``Re(lambda_1 - lambda_0)`` in canonical order."""
    w = sys.eigenvalues[eigen_order(sys)]
    return float((w[1] - w[0]).real)


def _phases(sys: BiorthogonalSystem, t: float) -> np.ndarray:
    growth = float(np.max(np.abs(sys.eigenvalues.imag))) * abs(t)
    if growth > OVERFLOW_LOG:
        raise PropagatorOverflowError("propagator overflow; rescale t or shift spectrum")
    return np.exp(-1j * sys.eigenvalues * t)


def propagator(sys: BiorthogonalSystem, t: float) -> Operator:
    """``U(t) = sum_m exp(-i lambda_m t) |R_m><L_m|``."""
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    u = (sys.right * _phases(sys, t)) @ sys.left
    return Operator._wrap(u, sys.basis_tag)


def adjoint_system(sys: BiorthogonalSystem) -> BiorthogonalSystem:
    """Biorthogonal system of ``H^dagger``: conjugate eigenvalues, R and L roles swapped.

    The right vectors of ``H^dagger`` are the kets ``|L_m>``; they are left
    unnormalised so that the pairing with ``<R_m|`` stays exact.
    """
    return BiorthogonalSystem(
        eigenvalues=sys.eigenvalues.conj(),
        right=sys.left.conj().T,
        left=sys.right.conj().T,
        condition=sys.condition,
        ep_flag=sys.ep_flag,
        basis_tag=sys.basis_tag,
        cluster_sizes=sys.cluster_sizes,
    )
