"""Dense complex operators with basis bookkeeping.

Every Hamiltonian, density matrix and observable in the package is an
:class:`Operator`: an immutable square complex matrix plus an opaque
``basis_tag``.  Binary operations refuse to mix operators with different tags,
so a two-qubit object cannot silently be combined with a fermionic sector one.
"""

from __future__ import annotations

import logging
from numbers import Number

import numpy as np

log = logging.getLogger(__name__)

DENSE_NORM_CUTOFF = 64


class BasisMismatchError(ValueError):
    """Raised when two operators living in different bases are combined."""


class NormConvergenceError(RuntimeError):
    """Power iteration did not reach the requested tolerance.

    Attributes
    ----------
    estimate : float
        Best singular-value estimate at the last iteration.
    residual : float
        Relative change of the estimate at the last iteration.
    """

    def __init__(self, estimate: float, residual: float, iterations: int):
        super().__init__(
            f"power iteration did not converge after {iterations} iterations "
            f"(estimate={estimate:.17g}, residual={residual:.3e})"
        )
        self.estimate = estimate
        self.residual = residual
        self.iterations = iterations


class Operator:
    """Immutable dense complex square matrix tagged with its basis.

    Parameters
    ----------
    entries : array_like
        Square matrix; copied and stored as ``complex128``.
    basis_tag : str
        Label of the basis, e.g. ``"qubit2"`` or ``"fock:N=12,k=6"``.
    """

    __slots__ = ("_m", "basis_tag")
    __array_priority__ = 1000

    def __init__(self, entries, basis_tag: str = "generic"):
        m = np.array(entries, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise ValueError(f"operator must be a non-empty square matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("operator entries must be finite")
        m.flags.writeable = False
        self._m = m
        self.basis_tag = str(basis_tag)

    @classmethod
    def _wrap(cls, m: np.ndarray, basis_tag: str) -> "Operator":
        # trusted constructor: skips the copy and finiteness scan
        obj = cls.__new__(cls)
        m = np.ascontiguousarray(m, dtype=np.complex128)
        m.flags.writeable = False
        obj._m = m
        obj.basis_tag = basis_tag
        return obj

    @classmethod
    def identity(cls, dim: int, basis_tag: str = "generic") -> "Operator":
        return cls._wrap(np.eye(dim, dtype=np.complex128), basis_tag)

    @property
    def matrix(self) -> np.ndarray:
        """Read-only view of the entries."""
        return self._m

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._m
        return self._m.astype(dtype)

    def __repr__(self) -> str:
        return f"Operator(dim={self.dim}, basis_tag={self.basis_tag!r})"

    def _check(self, other: "Operator") -> None:
        if not isinstance(other, Operator):
            raise TypeError(f"expected Operator, got {type(other).__name__}")
        if other.basis_tag != self.basis_tag:
            raise BasisMismatchError(
                f"basis mismatch: {self.basis_tag!r} vs {other.basis_tag!r}"
            )
        if other.dim != self.dim:
            raise BasisMismatchError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator._wrap(self._m + other._m, self.basis_tag)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator._wrap(self._m - other._m, self.basis_tag)

    def __neg__(self) -> "Operator":
        return Operator._wrap(-self._m, self.basis_tag)

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator._wrap(self._m @ other._m, self.basis_tag)

    def __mul__(self, c) -> "Operator":
        if not isinstance(c, Number):
            return NotImplemented
        return Operator._wrap(self._m * c, self.basis_tag)

    __rmul__ = __mul__

    def __truediv__(self, c) -> "Operator":
        if not isinstance(c, Number):
            return NotImplemented
        return Operator._wrap(self._m / c, self.basis_tag)

    def trace(self) -> complex:
        return complex(np.trace(self._m))

    def dag(self) -> "Operator":
        return adjoint(self)

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self._m, self._m.conj().T, rtol=0.0, atol=atol))


def adjoint(A: Operator) -> Operator:
    """Conjugate transpose, ``result[i, j] = conj(A[j, i])``."""
    return Operator._wrap(A.matrix.conj().T, A.basis_tag)


def frobenius_norm(A) -> float:
    """``sqrt(sum |A_ij|^2)``."""
    m = A.matrix if isinstance(A, Operator) else np.asarray(A)
    return float(np.sqrt(np.sum(m.real**2 + m.imag**2)))


def _dense_opnorm(m: np.ndarray) -> float:
    # largest eigenvalue of the Gram matrix of the smaller side
    g = m.conj().T @ m if m.shape[1] <= m.shape[0] else m @ m.conj().T
    top = np.linalg.eigvalsh(g)[-1]
    return float(np.sqrt(max(top, 0.0)))


def _real_view(m: np.ndarray) -> np.ndarray:
    return m.real.copy() if np.iscomplexobj(m) and not np.any(m.imag) else m


def _power_opnorm(m: np.ndarray, tol: float, max_iter: int, rng) -> float:
    n = m.shape[1]
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    if np.iscomplexobj(m):
        v = z
    else:
        # a complex start vector on a real matrix: carry its real and
        # imaginary parts as two real columns
        v = np.column_stack([z.real, z.imag])
    v /= np.linalg.norm(v)
    mh = m.conj().T
    est = 0.0
    residual = np.inf
    for it in range(1, max_iter + 1):
        w = mh @ (m @ v)
        lam = float(np.real(np.vdot(v, w)))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = np.sqrt(max(lam, 0.0))
        residual = abs(new - est) / new if new > 0 else 0.0
        est = new
        if residual < tol and it > 2:
            return est
    raise NormConvergenceError(est, residual, max_iter)


def operator_norm(
    A,
    *,
    method: str = "auto",
    tol: float = 1e-12,
    max_iter: int = 10_000,
    seed: int = 0,
) -> float:
    """Largest singular value ``sqrt(lambda_max(A^dagger A))``.

    Parameters
    ----------
    A : Operator or ndarray
    method : {"auto", "power", "dense"}
        ``"dense"`` solves the Hermitian eigenproblem of ``A^dagger A``.
        ``"power"`` runs power iteration and raises
        :class:`NormConvergenceError` if ``max_iter`` is reached.
        ``"auto"`` uses the dense solve for ``dim <= 64`` and power iteration
        otherwise, falling back to the dense solve once power iteration has
        spent about as much time as the dense solve would (``dim // 16``
        iterations but at least 50, at most ``max_iter``).
    tol : float
        Relative tolerance on successive singular-value estimates.
    seed : int
        Seed of the random complex start vector.
    """
    m = A.matrix if isinstance(A, Operator) else np.asarray(A, dtype=np.complex128)
    if not np.any(m):
        return 0.0
    m = _real_view(m)
    if method == "dense":
        return _dense_opnorm(m)
    rng = np.random.default_rng(seed)
    if method == "power":
        return _power_opnorm(m, tol, max_iter, rng)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    if m.shape[0] <= DENSE_NORM_CUTOFF:
        return _dense_opnorm(m)
    budget = min(max_iter, max(50, m.shape[0] // 16))
    try:
        return _power_opnorm(m, tol, budget, rng)
    except NormConvergenceError as exc:
        log.debug("power iteration stalled (%s); using dense solve", exc)
        return _dense_opnorm(m)
