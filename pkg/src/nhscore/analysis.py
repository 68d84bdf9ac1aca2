"""Parameter sweeps, transition markers and finite-size extrapolation.

Every grid cell is an independent work item.  Cells are evaluated with BLAS
and LAPACK pinned to a single thread, so results do not depend on how many
worker processes are used or in which order they finish.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from threadpoolctl import threadpool_limits

from .measures import (
    E_THRESHOLD,
    aggregate,
    hamiltonian_nonhermiticity,
    score_spectrum,
)
from .models import (
    BellModelParams,
    HNParams,
    build_bell_hamiltonian,
    build_sector_basis,
    bond_hopping,
    interaction_diagonal,
)
from .observables import half_chain_entropy, occupation, staggered
from .operator_core import Operator, operator_norm
from .spectral import EP_THRESHOLD, DefectiveMatrixError, diagonalize

log = logging.getLogger(__name__)

BELL_ALPHA_FLOOR = 1e-6
MAX_SWEEP_SITES = 14
DEGENERATE_GAP = 1e-10

HN_COLUMNS = (
    "chi", "V", "D_op", "D_frob", "D_unnorm", "SCn_max", "SCS_max", "SCI_max",
    "Gn_scaled", "GS_scaled", "delta01", "ep_flag",
)


class FitRefusedError(ValueError):
    pass


def cell_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for grid point ``index``; independent of execution order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


# --------------------------------------------------------------------------
# imperfect Bell ensemble


def alpha_from_alphabar(ab: float) -> float:
    return max(1.0 - float(ab), BELL_ALPHA_FLOOR)


def bell_ensemble_sweep(alphabar_grid, realizations: int = 1000, seed: int = 0):
    """Min and max of ``D`` over Gaussian eigenvalue draws at each ``alphabar = 1 - alpha``.

    ``alphabar = 1`` is evaluated at ``alpha = 1e-6``.

    Returns
    -------
    ndarray, shape (n, 3)
        Columns ``alphabar, D_min, D_max``.
    """
    if realizations < 1:
        raise ValueError("realizations must be >= 1")
    out = []
    for i, ab in enumerate(np.asarray(alphabar_grid, dtype=float)):
        a = alpha_from_alphabar(ab)
        rng = cell_rng(seed, i)
        ds = [
            hamiltonian_nonhermiticity(build_bell_hamiltonian(BellModelParams.random(a, rng)))
            for _ in range(realizations)
        ]
        out.append((ab, min(ds), max(ds)))
    return np.array(out)


# --------------------------------------------------------------------------
# Hatano-Nelson pieces


@lru_cache(maxsize=8)
def _hn_parts(N: int, wrap: bool):
    basis = build_sector_basis(N, N // 2)
    phase = HNParams(N, 0.0, 0.0).boundary_phase
    fwd, bwd = bond_hopping(basis, phase)
    for a in (fwd, bwd):
        a.flags.writeable = False
    diag = interaction_diagonal(basis, wrap)
    diag.flags.writeable = False
    return basis, fwd, bwd, diag


def hn_matrix(N: int, chi: float, V: float, J: float = 1.0, wrap: bool = True) -> np.ndarray:
    """Real sector matrix of the model from cached hopping pieces."""
    _, fwd, bwd, diag = _hn_parts(N, wrap)
    h = -J * (np.exp(chi) * fwd + np.exp(-chi) * bwd)
    h[np.diag_indices_from(h)] += V * diag
    return h


def hn_operator(N, chi, V, J=1.0, wrap=True) -> Operator:
    basis = _hn_parts(N, wrap)[0]
    return Operator._wrap(hn_matrix(N, chi, V, J, wrap), basis.tag)


def hn_eigenvalues(N, chi, V, J=1.0, wrap=True) -> np.ndarray:
    """Eigenvalues in canonical order (real part, then imaginary part)."""
    w = sla.eigvals(hn_matrix(N, chi, V, J, wrap), check_finite=False)
    return w[np.lexsort((w.imag, w.real))]


def delta01(eigs) -> float:
    return float((eigs[1] - eigs[0]).real)


def d_prime_curve(N: int, chi: float, V_grid, J: float = 1.0, wrap: bool = True) -> np.ndarray:
    """Frobenius non-Hermiticity ``D'`` along ``V`` without rebuilding the matrix.

    The hopping part has zero diagonal, so
    ``||H||_F^2 = ||T||_F^2 + V^2 ||d||^2`` and ``||H - H^+||_F`` does not
    depend on ``V``.
    """
    _, fwd, bwd, diag = _hn_parts(N, wrap)
    t = -J * (np.exp(chi) * fwd + np.exp(-chi) * bwd)
    num = np.linalg.norm(t - t.T)
    tt = np.sum(t * t)
    dd = np.sum(diag * diag)
    V = np.asarray(V_grid, dtype=float)
    return num / np.sqrt(tt + V**2 * dd)


@lru_cache(maxsize=64)
def _unnormalized_d(N: int, chi: float, J: float, wrap: bool) -> float:
    # ||H - H^+|| involves only the hopping, so it is shared by a whole chi column
    h = hn_matrix(N, chi, 0.0, J, wrap)
    return operator_norm(h - h.T)


# --------------------------------------------------------------------------
# (chi, V) sweep


@dataclass
class SweepConfig:
    N: int = 12
    chi: tuple = tuple(np.linspace(0.0, 5.4, 41))
    V: tuple = tuple(np.logspace(-1, 5, 49))
    J: float = 1.0
    wrap_interaction: bool = True
    threshold: float = E_THRESHOLD
    ep_threshold: float = EP_THRESHOLD
    ep_policy: str = "include"
    workers: int | None = None

    def cells(self):
        return [(c, v) for c in self.chi for v in self.V]


@dataclass
class SweepResult:
    """Rows in grid order (``chi`` outer, ``V`` inner).

    Cells whose diagonalisation failed keep their ``D`` columns, hold NaN in
    the spectral columns and have an entry in ``errors``.
    """

    columns: tuple
    rows: np.ndarray
    errors: dict = field(default_factory=dict)
    cell_times: np.ndarray | None = None
    config: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def grid(self, name: str, shape) -> np.ndarray:
        return self.column(name).reshape(shape)


def hn_cell(N, chi, V, J=1.0, wrap=True, threshold=E_THRESHOLD,
            ep_threshold=EP_THRESHOLD, ep_policy="include") -> dict:
    """All per-cell quantities of the sweep."""
    H = hn_operator(N, chi, V, J, wrap)
    basis = _hn_parts(N, wrap)[0]
    out = {
        "chi": chi,
        "V": V,
        "D_op": hamiltonian_nonhermiticity(H, "operator"),
        "D_frob": hamiltonian_nonhermiticity(H, "frobenius"),
        "D_unnorm": _unnormalized_d(N, float(chi), float(J), bool(wrap)),
    }
    try:
        sys = diagonalize(H, ep_threshold)
    except DefectiveMatrixError as exc:
        # the Hamiltonian-level measures stay valid at an exceptional point
        nan = float("nan")
        out.update({c: nan for c in HN_COLUMNS[5:11]}, ep_flag=1.0)
        out["error"] = f"{type(exc).__name__}: {exc}"
        return out
    sn = score_spectrum(occupation(basis, 1), sys)
    ss = score_spectrum(half_chain_entropy(basis), sys)
    si = score_spectrum(staggered(basis), sys)
    agg = dict(ep_policy=ep_policy)
    out.update(
        SCn_max=aggregate(sn, "infinity", **agg),
        SCS_max=aggregate(ss, "infinity", **agg),
        SCI_max=aggregate(si, "infinity", **agg),
        Gn_scaled=aggregate(sn, "threshold_count", threshold=threshold, scaled=True, **agg),
        GS_scaled=aggregate(ss, "threshold_count", threshold=threshold, scaled=True, **agg),
        delta01=delta01(sys.eigenvalues),
        ep_flag=float(sys.ep_flag),
    )
    return out


def _run_cell(args):
    idx, kw = args
    t0 = time.perf_counter()
    with threadpool_limits(1):
        try:
            res = hn_cell(**kw)
            err = res.pop("error", None)
        except (DefectiveMatrixError, np.linalg.LinAlgError, ArithmeticError, ValueError) as exc:
            res, err = None, f"{type(exc).__name__}: {exc}"
    return idx, res, err, time.perf_counter() - t0


def _pool_map(fn, items, workers):
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (8 * workers))))


def hn_sweep(config: SweepConfig | None = None, **overrides) -> SweepResult:
    """Evaluate :func:`hn_cell` on the ``chi x V`` grid of ``config``.

    A cell that fails (for instance at an exceptional point) is recorded in
    ``errors`` by its flat index and the sweep carries on.
    """
    cfg = config or SweepConfig()
    if overrides:
        cfg = SweepConfig(**{**asdict(cfg), **overrides})
    if cfg.N % 2 or cfg.N > MAX_SWEEP_SITES:
        raise ValueError(f"N must be even and <= {MAX_SWEEP_SITES}")
    if not len(cfg.chi) or not len(cfg.V):
        raise ValueError("empty grid")
    cells = cfg.cells()
    base = dict(N=cfg.N, J=cfg.J, wrap=cfg.wrap_interaction, threshold=cfg.threshold,
                ep_threshold=cfg.ep_threshold, ep_policy=cfg.ep_policy)
    items = [(i, {**base, "chi": float(c), "V": float(v)}) for i, (c, v) in enumerate(cells)]
    results = _pool_map(_run_cell, items, cfg.workers)
    rows = np.full((len(cells), len(HN_COLUMNS)), np.nan)
    times = np.zeros(len(cells))
    errors = {}
    for idx, res, err, dt in results:
        times[idx] = dt
        if err is not None:
            errors[idx] = err
        if res is None:
            rows[idx, :2] = cells[idx]
            continue
        rows[idx] = [res[c] for c in HN_COLUMNS]
    return SweepResult(HN_COLUMNS, rows, errors, times, asdict(cfg))


# --------------------------------------------------------------------------
# level-spacing kink


@dataclass
class KinkResult:
    V: np.ndarray
    delta01: np.ndarray
    kink_V: float
    kink_index: int
    log10_halfwidth: float
    dominance: float
    degenerate: bool


def second_difference(x, y) -> np.ndarray:
    """Divided second differences at interior points of a possibly uneven grid."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    h0 = x[1:-1] - x[:-2]
    h1 = x[2:] - x[1:-1]
    return 2.0 * (h0 * y[2:] - (h0 + h1) * y[1:-1] + h1 * y[:-2]) / (h0 * h1 * (h0 + h1))


def _dominance(d2: np.ndarray, i: int) -> float:
    """Ratio of the largest |d2| to the largest one outside its neighbourhood."""
    a = np.abs(d2)
    rest = np.delete(a, np.arange(max(i - 1, 0), min(i + 2, a.size)))
    return float(a[i] / rest.max()) if rest.size and rest.max() > 0 else float("inf")


def locate_kink(V_grid, d01) -> tuple[int, float]:
    """Grid index maximising |second difference of Delta01 over log10 V| and its dominance."""
    x = np.log10(np.asarray(V_grid, float))
    if x.size < 3:
        raise ValueError("need at least three grid points")
    d2 = second_difference(x, d01)
    i = int(np.argmax(np.abs(d2)))
    return i + 1, _dominance(d2, i)


def delta01_scan(V_grid, chi: float = 2.5, N: int = 12, J: float = 1.0, wrap: bool = True,
                 workers: int | None = None) -> KinkResult:
    """``Delta01`` along ``V`` at fixed ``chi`` and the dominant kink.

    The kink error bar is half a grid step in ``log10 V``; ``degenerate`` is
    set when ``lambda_0`` and ``lambda_1`` coincide to ``1e-10`` at the
    located point.
    """
    V = np.asarray(V_grid, float)
    if np.any(V <= 0):
        raise ValueError("V grid must be positive")
    eigs = _pool_map(_eig_task, [(N, chi, v, J, wrap) for v in V], workers)
    d = np.array([delta01(w) for w in eigs])
    k, dom = locate_kink(V, d)
    x = np.log10(V)
    hw = 0.5 * max(x[k] - x[k - 1], x[k + 1] - x[k])
    degen = abs(eigs[k][1] - eigs[k][0]) < DEGENERATE_GAP
    return KinkResult(V, d, float(V[k]), k, float(hw), dom, bool(degen))


def _eig_task(args):
    with threadpool_limits(1):
        return hn_eigenvalues(*args)


def refine_kink(fn, x_lo: float, x_hi: float, n_coarse: int = 11, rounds: int = 6):
    """Kink position in ``x`` by repeated halving of a second-difference stencil.

    ``fn(x)`` is the (expensive) scalar function.  A coarse uniform grid
    locates the kink; each round then evaluates two new points at half the
    spacing around the current maximum.

    Returns
    -------
    x_kink, halfwidth, samples : float, float, dict
    """
    xs = np.linspace(x_lo, x_hi, n_coarse)
    cache = {float(x): fn(float(x)) for x in xs}
    vals = np.array([cache[float(x)] for x in xs])
    d2 = np.abs(second_difference(xs, vals))
    xc = xs[1 + int(np.argmax(d2))]
    h = xs[1] - xs[0]
    for _ in range(rounds):
        h = h / 2
        pts = xc + h * np.arange(-2, 3)
        for p in pts:
            key = float(p)
            if key not in cache:
                cache[key] = fn(key)
        v = np.array([cache[float(p)] for p in pts])
        d2 = np.abs(second_difference(pts, v))
        xc = pts[1 + int(np.argmax(d2))]
    return float(xc), float(h / 2), cache


# --------------------------------------------------------------------------
# finite-size scaling


@dataclass
class LinearFit:
    intercept: float
    intercept_se: float
    slope: float
    slope_se: float
    form: str

    def distinct_from(self, other: "LinearFit", sigmas: float) -> bool:
        se = np.hypot(self.intercept_se, other.intercept_se)
        return bool(abs(self.intercept - other.intercept) > sigmas * se)


def fit_inverse_size(N_list, values, form: str = "1/N", errors=None) -> LinearFit:
    """Least-squares ``values = a + b * N^-1`` (or ``N^-2``) with standard errors.

    The parameter covariance is scaled by the residual variance; with
    ``errors`` given, each per-size uncertainty is added in quadrature to
    that scatter estimate.
    """
    N = np.asarray(N_list, float)
    y = np.asarray(values, float)
    if N.size < 3:
        raise FitRefusedError("at least three sizes are needed for an extrapolation")
    power = {"1/N": 1, "1/N2": 2, "1/N^2": 2}.get(form)
    if power is None:
        raise ValueError(f"unknown fit form {form!r}")
    X = np.column_stack([np.ones_like(N), N**-power])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = N.size - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = np.linalg.inv(X.T @ X) * s2
    if errors is not None:
        e = np.asarray(errors, float)
        xtx_inv = np.linalg.inv(X.T @ X)
        cov = cov + xtx_inv @ (X.T * e**2) @ X @ xtx_inv
    se = np.sqrt(np.diag(cov))
    return LinearFit(float(coef[0]), float(se[0]), float(coef[1]), float(se[1]), form)


def d_prime_critical(N: int, chi: float, V_grid, J: float = 1.0, wrap: bool = True):
    """Minimum of ``dD'/d(log V)`` by centered differences, parabola-refined.

    Returns ``(V_c, log10_halfwidth)``; the error estimate is the shift
    between the grid point and the refined vertex (at least 1e-6).
    """
    V = np.asarray(V_grid, float)
    x = np.log(V)
    g = np.gradient(d_prime_curve(N, chi, V, J, wrap), x)
    i = int(np.argmin(g))
    if 0 < i < g.size - 1:
        a, b, c = g[i - 1], g[i], g[i + 1]
        den = a - 2 * b + c
        off = 0.5 * (a - c) / den if den != 0 else 0.0
        xv = x[i] + off * (x[i + 1] - x[i])
    else:
        xv = x[i]
    hw = max(abs(xv - x[i]) / np.log(10), 1e-6)
    return float(np.exp(xv)), float(hw)


@dataclass
class FSSResult:
    N: list
    Vc_dprime: np.ndarray
    Vc_delta: np.ndarray
    err_dprime_log10: np.ndarray
    err_delta_log10: np.ndarray
    fit_dprime_log10: LinearFit
    fit_delta_log10: LinearFit
    fit_dprime_V: LinearFit
    fit_delta_V: LinearFit
    sigmas: float
    distinct: bool
    smooth_dprime: list
    spike_delta: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def spike_ratio(x, y) -> float:
    """Largest |second difference| over the median one."""
    d2 = np.abs(second_difference(x, y))
    med = float(np.median(d2))
    return float(d2.max() / med) if med > 0 else float("inf")


def fss_extrapolate(N_list=(4, 6, 8, 10, 12, 14), chi: float = 2.5, V_grid=None,
                    kink_window=(0.5, 2.5), n_coarse: int = 21, rounds: int = 6,
                    form: str = "1/N", sigmas: float | None = None, J: float = 1.0,
                    wrap: bool = True) -> FSSResult:
    """Extrapolate the ``D'`` and level-spacing critical interactions to infinite size.

    ``V_c^{D'}`` comes from the steepest descent of ``D'`` on ``V_grid``
    (default: 481 points over ``1e-1..1e5``).  ``V_c^Delta`` is the kink of
    ``Delta01`` located by :func:`refine_kink` inside ``kink_window``
    (``log10 V`` bounds).  Only eigenvalues are computed.

    ``sigmas`` defaults to 3 when size 14 is included and 2 otherwise.

    ``smooth_dprime`` and ``spike_delta`` are :func:`spike_ratio` values of
    ``D'`` and ``Delta01`` restricted to the kink window (``D'`` on the
    part of ``V_grid`` inside it, ``Delta01`` on the coarse points); outside
    the window both curves are nearly flat and the median is meaningless.
    """
    N_list = [int(n) for n in N_list]
    if len(N_list) < 3:
        raise FitRefusedError("at least three sizes are needed for an extrapolation")
    for n in N_list:
        if n % 2 or not 4 <= n <= MAX_SWEEP_SITES:
            raise ValueError(f"size {n} not in 4..{MAX_SWEEP_SITES} or odd")
    if V_grid is None:
        V_grid = np.logspace(-1, 5, 481)
    V_grid = np.asarray(V_grid, float)
    if sigmas is None:
        sigmas = 3.0 if MAX_SWEEP_SITES in N_list else 2.0
    vd, ed, vk, ek, smooth, spikes = [], [], [], [], [], []
    xg = np.log10(V_grid)
    win = (xg >= kink_window[0]) & (xg <= kink_window[1])
    if np.count_nonzero(win) < 3:
        raise ValueError("V_grid has fewer than three points inside the kink window")
    t0 = time.perf_counter()
    for n in N_list:
        v, e = d_prime_critical(n, chi, V_grid, J, wrap)
        vd.append(v)
        ed.append(e)
        smooth.append(spike_ratio(xg[win], d_prime_curve(n, chi, V_grid[win], J, wrap)))

        def f(x, n=n):
            with threadpool_limits(1):
                return delta01(hn_eigenvalues(n, chi, 10.0**x, J, wrap))

        xk, hk, samples = refine_kink(f, kink_window[0], kink_window[1], n_coarse, rounds)
        xc = np.linspace(kink_window[0], kink_window[1], n_coarse)
        spikes.append(spike_ratio(xc, [samples[float(x)] for x in xc]))
        vk.append(10.0**xk)
        ek.append(hk)
        log.info("N=%d  log10 Vc(D')=%.4f  log10 Vc(Delta)=%.4f", n, np.log10(v), xk)
    vd, vk, ed, ek = map(np.asarray, (vd, vk, ed, ek))
    fd = fit_inverse_size(N_list, np.log10(vd), form, ed)
    fk = fit_inverse_size(N_list, np.log10(vk), form, ek)
    fdv = fit_inverse_size(N_list, vd, form, vd * np.log(10) * ed)
    fkv = fit_inverse_size(N_list, vk, form, vk * np.log(10) * ek)
    return FSSResult(
        N=N_list, Vc_dprime=vd, Vc_delta=vk, err_dprime_log10=ed, err_delta_log10=ek,
        fit_dprime_log10=fd, fit_delta_log10=fk, fit_dprime_V=fdv, fit_delta_V=fkv,
        sigmas=sigmas, distinct=fd.distinct_from(fk, sigmas) and fdv.distinct_from(fkv, sigmas),
        smooth_dprime=smooth, spike_delta=spikes, meta={"chi": chi, "form": form, "wall_time": time.perf_counter() - t0},
    )


def spearman(a, b) -> float:
    from scipy.stats import spearmanr

    return float(spearmanr(a, b).statistic)
