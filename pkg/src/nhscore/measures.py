"""Distance of a Hamiltonian from its adjoint, and right-versus-left scores."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .observables import as_functional
from .operator_core import Operator, adjoint, frobenius_norm, operator_norm
from .spectral import BiorthogonalSystem

E_THRESHOLD = 0.1
NORM_VARIANTS = ("operator", "frobenius", "unnormalized_operator")
EP_POLICIES = ("include", "exclude", "error")


class ZeroNormError(ValueError):
    pass


class BrokenBiorthogonalityError(ArithmeticError):
    pass


class FlaggedScoreError(ValueError):
    """Aggregation with ``ep_policy="error"`` met an ep-flagged entry."""


def hamiltonian_nonhermiticity(H: Operator, norm: str = "operator") -> float:
    """Normalised distance between ``H`` and ``H^dagger``.

    ``norm="operator"`` gives ``||H - H^+|| / ||H||`` in the spectral norm
    (a value in ``[0, 2]``), ``"frobenius"`` the same ratio in the Frobenius
    norm, and ``"unnormalized_operator"`` just ``||H - H^+||``.
    """
    if not isinstance(H, Operator):
        H = Operator(H)
    diff = H - adjoint(H)
    if norm == "frobenius":
        den = frobenius_norm(H)
        if den == 0.0:
            raise ZeroNormError("zero Hamiltonian")
        return frobenius_norm(diff) / den
    if norm not in ("operator", "unnormalized_operator"):
        raise ValueError(f"unknown norm variant {norm!r}")
    num = operator_norm(diff)
    if norm == "unnormalized_operator":
        return num
    den = operator_norm(H)
    if den == 0.0:
        raise ZeroNormError("zero Hamiltonian")
    return num / den


def frobenius_distance_overlap(sys: BiorthogonalSystem, radicand_tol: float = 1e-8) -> float:
    """``||H - H^+||_F`` from eigenvalues and the right/left Gram matrices alone.

    With ``a[n, m] = <R_m|R_n>`` and ``b[n, m] = <L_m|L_n>``::

        F^2 = sum_{mn} (e_m^* e_n a_nm b_nm^* + e_n^* e_m b_nm a_nm^*)
              - sum_m (e_m^*^2 + e_m^2)
    """
    e = sys.eigenvalues
    R = sys.right
    Lk = sys.left_kets()
    a = (R.conj().T @ R).T  # a[n, m] = <R_m|R_n>
    b = (Lk.conj().T @ Lk).T
    cross = np.outer(e, e.conj())  # cross[n, m] = e_n e_m^*
    t1 = np.sum(cross * a * b.conj())
    t2 = np.sum(cross.T * b * a.conj())
    rad = (t1 + t2 - np.sum(e.conj() ** 2 + e**2)).real
    if rad < -radicand_tol * max(1.0, float(np.sum(np.abs(e) ** 2))):
        raise BrokenBiorthogonalityError(f"negative radicand {rad:.3e}")
    return float(np.sqrt(max(rad, 0.0)))


# --------------------------------------------------------------------------
# scores


@dataclass(frozen=True, eq=False)
class ScoreVector:
    functional_name: str
    values: np.ndarray
    ep_flags: np.ndarray = field(repr=False)
    right_values: np.ndarray | None = field(default=None, repr=False)
    left_values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.values.shape != self.ep_flags.shape:
            raise ValueError("values and ep_flags differ in length")

    def __len__(self):
        return self.values.shape[0]


def score(F, rho_R, rho_L) -> float:
    """``|F(rho_R) - F(rho_L)|``."""
    F = as_functional(F)
    if isinstance(rho_R, Operator) and isinstance(rho_L, Operator):
        rho_R._check(rho_L)
    return abs(F(rho_R) - F(rho_L))


def score_spectrum(F, sys: BiorthogonalSystem) -> ScoreVector:
    """Scores of every eigenstate, ``rho_R = |R_k><R_k|`` against ``rho_L = |L_k><L_k|``.

    Uses the functional's vectorised pure-state path, so no density matrices
    are built for the sweep-size models.
    """
    F = as_functional(F)
    fr = np.asarray(F.on_pure(sys.right, sys.basis_tag), dtype=float)
    fl = np.asarray(F.on_pure(sys.left_kets(), sys.basis_tag), dtype=float)
    flags = np.full(sys.dim, sys.ep_flag, dtype=bool)
    return ScoreVector(F.name, np.abs(fr - fl), flags, fr, fl)


def cross_term(O: Operator, sys: BiorthogonalSystem) -> np.ndarray:
    """Diagnostic biorthogonal expectation ``<L_k|O|R_k>`` (complex in general)."""
    return np.einsum("ki,ij,jk->k", sys.left, O.matrix, sys.right)


def aggregate(
    v: ScoreVector,
    mode: str = "infinity",
    *,
    p: float = 2.0,
    threshold: float = E_THRESHOLD,
    scaled: bool = False,
    ep_policy: str = "include",
) -> float:
    """Collapse a score vector into one number.

    Parameters
    ----------
    mode : {"p_norm", "infinity", "threshold_count"}
        p-norm over the whole spectrum, maximum, or the count of entries
        ``>= threshold``.
    scaled : bool
        Divide the threshold count by the vector length.
    ep_policy : {"include", "exclude", "error"}
        What to do with entries carrying an ep flag.
    """
    if ep_policy not in EP_POLICIES:
        raise ValueError(f"unknown ep policy {ep_policy!r}")
    vals = np.asarray(v.values, dtype=float)
    n_total = vals.shape[0]
    if n_total == 0:
        raise ValueError("empty score vector")
    if np.any(v.ep_flags):
        if ep_policy == "error":
            raise FlaggedScoreError(f"{int(np.sum(v.ep_flags))} ep-flagged entries")
        if ep_policy == "exclude":
            vals = vals[~v.ep_flags]
            if vals.size == 0:
                return float("nan")
    if mode == "infinity":
        return float(np.max(vals))
    if mode == "p_norm":
        if not p > 0:
            raise ValueError("p must be positive")
        m = np.max(vals)
        if m == 0:
            return 0.0
        return float(m * np.sum((vals / m) ** p) ** (1.0 / p))
    if mode == "threshold_count":
        if threshold < 0:
            raise ValueError("threshold must be nonnegative")
        c = float(np.count_nonzero(vals >= threshold))
        return c / n_total if scaled else c
    raise ValueError(f"unknown aggregation mode {mode!r}")
