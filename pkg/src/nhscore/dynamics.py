"""Right/left ensemble evolution and the ancilla dilation of the no-jump branch.

Conventions
-----------
``Gamma = i (H - H^+) / 2`` is the Hermitian decay matrix of ``H``.  The
dilation needs ``Gamma >= 0`` (every state decays); otherwise ``H`` is first
shifted to ``H - i c I`` with ``c = max(0, -lambda_min(Gamma))``, which only
rescales unnormalised states by ``exp(-2 c t)``.  The ancilla is the least
significant tensor factor, ``joint = system (x) ancilla``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .observables import DensityMatrix, _as_dm, as_functional
from .operator_core import Operator
from .spectral import BiorthogonalSystem, adjoint_system

TRACE_FLOOR = 1e-300
SQRT_CLIP = 1e-12
DT_WARN = 0.1
SIDES = ("right", "left")


class StateDecayedError(ArithmeticError):
    pass


class KrausSquareRootError(ArithmeticError):
    pass


@dataclass(frozen=True)
class EvolutionSpec:
    times: tuple
    initial: DensityMatrix
    side: str = "right"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("times must be a non-empty 1-d sequence")
        if t[0] < 0 or np.any(np.diff(t) < 0):
            raise ValueError("times must be nonnegative and ascending")
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")
        rho = _as_dm(self.initial)
        if not rho.normalized:
            raise ValueError("initial state must be normalised")
        object.__setattr__(self, "times", tuple(float(x) for x in t))
        object.__setattr__(self, "initial", rho)


@dataclass(frozen=True)
class DilationSpec:
    dt: float
    n_steps: int
    ancilla_dim: int = 2

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.ancilla_dim != 2:
            raise ValueError("only a qubit ancilla is supported")


def _stable_evolve(sys: BiorthogonalSystem, rho: np.ndarray, t: float) -> tuple[np.ndarray, float]:
    # exp(-i lam t) with the slowest decay factored out: all phases have
    # modulus <= 1, so long times cannot overflow.  The factor drops out on
    # normalisation; its log is returned for callers that want it back.
    lam = sys.eigenvalues
    top = float(np.max(lam.imag))
    ph = np.exp(-1j * (lam - 1j * top) * t)
    u = (sys.right * ph) @ sys.left
    out = u @ rho @ u.conj().T
    return out, 2.0 * top * t


def evolve_ensemble(sys: BiorthogonalSystem, spec: EvolutionSpec) -> list[DensityMatrix]:
    """``U rho U^+ / Tr`` at every time; ``side="left"`` evolves under ``H^+``."""
    s = sys if spec.side == "right" else adjoint_system(sys)
    if s.basis_tag != spec.initial.basis_tag:
        raise ValueError("state and Hamiltonian bases differ")
    rho0 = spec.initial.matrix
    out = []
    for t in spec.times:
        if t == 0.0:
            out.append(spec.initial)
            continue
        m, _ = _stable_evolve(s, rho0, t)
        tr = np.trace(m).real
        if not tr > TRACE_FLOOR:
            raise StateDecayedError(f"state fully decayed at t={t:g}")
        m = m / tr
        m = 0.5 * (m + m.conj().T)
        out.append(DensityMatrix._wrap(m, s.basis_tag))
    return out


def score_timeseries(F, sys: BiorthogonalSystem, times: Sequence[float], initial) -> list[tuple[float, float]]:
    """``[(t, |F(rho_RR(t)) - F(rho_LL(t))|), ...]``."""
    F = as_functional(F)
    rho = _as_dm(initial)
    right = evolve_ensemble(sys, EvolutionSpec(tuple(times), rho, "right"))
    left = evolve_ensemble(sys, EvolutionSpec(tuple(times), rho, "left"))
    return [(float(t), abs(F(r) - F(l))) for t, r, l in zip(times, right, left)]


# --------------------------------------------------------------------------
# dilation


def decay_matrix(H) -> np.ndarray:
    m = H.matrix if isinstance(H, Operator) else np.asarray(H, dtype=np.complex128)
    g = 0.5j * (m - m.conj().T)
    return 0.5 * (g + g.conj().T)


def decay_shift(H) -> float:
    """Smallest ``c >= 0`` such that ``H - i c I`` has a PSD decay matrix."""
    lo = float(np.linalg.eigvalsh(decay_matrix(H))[0])
    return max(0.0, -lo)


@dataclass(frozen=True, eq=False)
class KrausPair:
    K0: np.ndarray
    K1: np.ndarray
    shift: float
    dt: float
    basis_tag: str

    def completeness_residual(self) -> float:
        d = self.K0.shape[0]
        e = self.K0.conj().T @ self.K0 + self.K1.conj().T @ self.K1 - np.eye(d)
        return float(np.linalg.norm(e, 2))


def joint_tag(tag: str) -> str:
    return f"{tag}|anc2"


def kraus_operators(H: Operator, dt: float) -> KrausPair:
    """``K0 = (I - i H' dt) (x) I`` and ``K1 = sqrt(2 dt Gamma') (x) sigma_x``.

    ``H' = H - i c I`` with ``c`` from :func:`decay_shift`; then
    ``K0^+ K0 + K1^+ K1 = I + H'^+ H' dt^2`` exactly.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not isinstance(H, Operator):
        H = Operator(H)
    m = H.matrix
    d = m.shape[0]
    c = decay_shift(H)
    if c:
        m = m - 1j * c * np.eye(d)
    g = 2.0 * dt * decay_matrix(m)
    w, v = np.linalg.eigh(g)
    if w[0] < -SQRT_CLIP * max(1.0, float(np.max(np.abs(w)))):
        raise KrausSquareRootError(f"decay matrix not PSD (eigenvalue {w[0]:.3e})")
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    top = float(np.max(np.abs(np.linalg.eigvals(m).imag))) if d else 0.0
    if dt * top > DT_WARN:
        warnings.warn(f"dt * max|Im lambda| = {dt * top:.3g} is not small", RuntimeWarning, stacklevel=2)
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    K0 = np.kron(np.eye(d) - 1j * dt * m, np.eye(2))
    K1 = np.kron(root, sx)
    return KrausPair(K0, K1, c, float(dt), H.basis_tag)


def dilation_step(H: Operator, rho_joint, dt: float, kraus: KrausPair | None = None) -> DensityMatrix:
    """One step ``K0 rho K0^+ + K1 rho K1^+`` on system (x) ancilla."""
    kp = kraus or kraus_operators(H, dt)
    rho = _as_dm(rho_joint)
    if rho.dim != kp.K0.shape[0]:
        raise ValueError("joint state has the wrong dimension")
    r = rho.matrix
    out = kp.K0 @ r @ kp.K0.conj().T + kp.K1 @ r @ kp.K1.conj().T
    return DensityMatrix._wrap(out, rho.basis_tag)


def attach_ancilla(rho_s, ancilla_state: int = 0) -> DensityMatrix:
    rho_s = _as_dm(rho_s)
    a = np.zeros((2, 2))
    a[ancilla_state, ancilla_state] = 1.0
    return DensityMatrix._wrap(np.kron(rho_s.matrix, a), joint_tag(rho_s.basis_tag))


def ancilla_block(rho_joint, ancilla_state: int = 0) -> np.ndarray:
    """System block ``<a| rho_joint |a>`` (unnormalised)."""
    m = _as_dm(rho_joint).matrix
    d = m.shape[0] // 2
    return m.reshape(d, 2, d, 2)[:, ancilla_state, :, ancilla_state]


@dataclass
class TrajectoryResult:
    rho: DensityMatrix
    shift: float
    log_survival: float
    n_steps: int
    dt: float
    meta: dict = field(default_factory=dict)

    @property
    def survival(self) -> float:
        """Postselection probability of the flag staying in ``|0>``, for the shifted ``H``."""
        return float(np.exp(self.log_survival))


def postselected_trajectory(H: Operator, rho_in, spec: DilationSpec, project: str = "each") -> TrajectoryResult:
    """System state after ``n_steps`` dilation steps conditioned on the ancilla flag ``|0>``.

    ``project="each"`` projects the ancilla after every step (the default);
    ``"end"`` keeps the full joint evolution and projects once.  The joint
    state is rescaled each step and the logarithm of the removed factor
    is accumulated in ``log_survival``.
    """
    if project not in ("each", "end"):
        raise ValueError("project must be 'each' or 'end'")
    if not isinstance(H, Operator):
        H = Operator(H)
    rho_in = _as_dm(rho_in)
    if rho_in.basis_tag != H.basis_tag:
        raise ValueError("state and Hamiltonian bases differ")
    kp = kraus_operators(H, spec.dt)
    if spec.n_steps == 0:
        return TrajectoryResult(rho_in, kp.shift, 0.0, 0, spec.dt)
    joint = attach_ancilla(rho_in)
    d = H.dim
    p0 = np.kron(np.eye(d), np.diag([1.0, 0.0]))
    log_s = 0.0
    for _ in range(spec.n_steps):
        joint = dilation_step(H, joint, spec.dt, kp)
        m = joint.matrix
        if project == "each":
            m = p0 @ m @ p0
        tr = np.trace(m).real
        if not tr > TRACE_FLOOR:
            raise StateDecayedError("postselected branch fully decayed")
        log_s += np.log(tr)
        joint = DensityMatrix._wrap(m / tr, joint.basis_tag)
    block = ancilla_block(joint, 0)
    tr = np.trace(block).real
    if not tr > TRACE_FLOOR:
        raise StateDecayedError("postselected branch fully decayed")
    log_s += np.log(tr)
    block = block / tr
    block = 0.5 * (block + block.conj().T)
    return TrajectoryResult(DensityMatrix._wrap(block, H.basis_tag), kp.shift, float(log_s),
                            spec.n_steps, spec.dt)


def exact_right_state(H: Operator, rho_in, T: float) -> DensityMatrix:
    """``e^{-iHT} rho e^{iH^+T}`` normalised, via the dense matrix exponential (oracle path)."""
    from scipy.linalg import expm

    if not isinstance(H, Operator):
        H = Operator(H)
    u = expm(-1j * T * H.matrix)
    m = u @ _as_dm(rho_in).matrix @ u.conj().T
    return DensityMatrix._wrap(m / np.trace(m).real, H.basis_tag)
