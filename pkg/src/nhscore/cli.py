"""Command-line front end.

Every subcommand writes a CSV data file and a JSON sidecar
(``<out>.meta.json``) with the seed, the fully resolved configuration,
library versions and wall time.  Exit codes: 0 success, 1 configuration
error, 2 numerical error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("nhscore")


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# parsing helpers


def parse_range(text) -> list[float]:
    """``start:stop:count`` (linear) or ``start:stop:countlog`` (logarithmic), or a plain number.

    >>> parse_range("0:1:3")
    [0.0, 0.5, 1.0]
    >>> parse_range("1:100:3log")
    [1.0, 10.0, 100.0]
    """
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    s = str(text).strip()
    parts = s.split(":")
    try:
        if len(parts) == 1:
            return [float(s)]
        if len(parts) != 3:
            raise ValueError
        start, stop, cnt = parts
        log_scale = cnt.endswith("log")
        n = int(cnt[:-3] if log_scale else cnt)
        a, b = float(start), float(stop)
    except ValueError:
        raise ConfigError(f"bad range {text!r}; expected start:stop:count[log]") from None
    if n < 1:
        raise ConfigError(f"range {text!r} has no points")
    if log_scale:
        if a <= 0 or b <= 0:
            raise ConfigError(f"logarithmic range {text!r} needs positive bounds")
        vals = np.logspace(math.log10(a), math.log10(b), n)
        # keep the endpoints exactly as written
        vals[0], vals[-1] = a, b
    else:
        vals = np.linspace(a, b, n)
    return [float(v) for v in vals]


def parse_int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    try:
        return [int(x) for x in str(text).replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"bad integer list {text!r}") from None


def parse_float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        return [float(x) for x in str(text).replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"bad number list {text!r}") from None


def parse_lambdas(v):
    if isinstance(v, str) and v.strip().lower() == "random":
        return "random"
    return parse_float_list(v)


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


# --------------------------------------------------------------------------
# command table: option name -> (default, converter, help)

COMMON = {
    "seed": (0, int, "seed of every random stream"),
    "threads": (None, int, "worker processes (default: available cores)"),
    "out": (None, str, "output CSV path (default: <command>.csv)"),
}

COMMANDS = {
    "bell-sweep": {
        "alphabar": ("0:1:21", parse_range, "alphabar grid, start:stop:count[log]"),
        "realizations": (1000, int, "Gaussian eigenvalue draws per grid point"),
    },
    "bell-evolve": {
        "alpha": (0.5, float, "imperfection parameter in (0, 1]"),
        "delta": (0.9, float, "Werner mixing parameter of the initial state"),
        "lambdas": ("0.1 0.2 0.3 0.4", parse_lambdas, "four eigenvalues, or 'random' to draw them"),
        "times": ("0:100:501", parse_range, "time grid"),
    },
    "hn-sweep": {
        "N": (12, int, "number of sites (even, <= 14)"),
        "chi": ("0:5.4:41", parse_range, "asymmetry grid"),
        "V": ("1e-1:1e5:49log", parse_range, "interaction grid"),
        "threshold": (0.1, float, "score threshold of the counts G"),
        "ep_threshold": (1e8, float, "condition number above which a cell is ep-flagged"),
        "ep_policy": ("include", str, "include | exclude | error for flagged scores"),
        "wrap_interaction": (True, "bool", "include the boundary pair n_N n_1"),
    },
    "delta01": {
        "N": (12, int, "number of sites"),
        "chi": (2.5, float, "fixed asymmetry"),
        "V": ("1:1e3:49log", parse_range, "interaction grid"),
        "wrap_interaction": (True, "bool", "include the boundary pair n_N n_1"),
    },
    "fss": {
        "N_list": ("4 6 8 10 12 14", parse_int_list, "system sizes"),
        "chi": (2.5, float, "fixed asymmetry"),
        "V": ("1e-1:1e5:481log", parse_range, "grid for the D' derivative"),
        "kink_window": ("0.5 2.5", parse_float_list, "log10 V bounds searched for the level-spacing kink"),
        "kink_points": (21, int, "coarse points in the kink window"),
        "kink_rounds": (6, int, "stencil-halving refinement rounds"),
        "form": ("1/N", str, "fit form: 1/N or 1/N2"),
        "skip_largest": (False, "bool", "drop N=14 (distinctness then tested at 2 sigma)"),
        "wrap_interaction": (True, "bool", "include the boundary pair n_N n_1"),
    },
    "trajectory-check": {
        "model": ("bell", str, "bell | hn"),
        "dt": ("2e-3 1e-3 5e-4", parse_float_list, "step sizes"),
        "T": (1.0, float, "total time"),
        "alpha": (0.5, float, "Bell imperfection parameter"),
        "N": (4, int, "sites of the chain model"),
        "chi": (1.0, float, "chain asymmetry"),
        "V_int": (1.0, float, "chain interaction"),
    },
}


def _to_bool(x) -> bool:
    if isinstance(x, bool):
        return x
    s = str(x).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean {x!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nhscore", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file with option values; flags take precedence")
        for key, (default, conv, helptext) in {**COMMON, **opts}.items():
            flag = "--" + key.replace("_", "-")
            if conv == "bool":
                sp.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction,
                                default=None, help=f"{helptext} (default {default})")
            else:
                sp.add_argument(flag, dest=key, default=None, help=f"{helptext} (default {default})")
    return p


def resolve(command: str, ns: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    spec = {**COMMON, **COMMANDS[command]}
    raw = {k: d for k, (d, _, _) in spec.items()}
    if getattr(ns, "config", None):
        try:
            with open(ns.config) as fh:
                cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = sorted(set(cfg) - set(spec))
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
        raw.update(cfg)
    for k in spec:
        v = getattr(ns, k, None)
        if v is not None:
            raw[k] = v
    out = {}
    for k, (_, conv, _) in spec.items():
        v = raw[k]
        if v is None:
            out[k] = None
            continue
        try:
            out[k] = _to_bool(v) if conv == "bool" else conv(v)
        except ConfigError:
            raise
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {k}: {v!r}") from None
    return out


# --------------------------------------------------------------------------
# commands


def _versions() -> dict:
    import scipy

    from . import __version__

    return {"nhscore": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def cmd_bell_sweep(c):
    from .analysis import bell_ensemble_sweep

    if c["realizations"] < 1:
        raise ConfigError("realizations must be >= 1")
    if any(not 0 <= a <= 1 for a in c["alphabar"]):
        raise ConfigError("alphabar must lie in [0, 1]")
    data = bell_ensemble_sweep(c["alphabar"], c["realizations"], c["seed"])
    return ["alphabar", "D_min", "D_max"], data.tolist(), {}


def cmd_bell_evolve(c):
    from .dynamics import score_timeseries
    from .models import BellModelParams, build_bell_hamiltonian, werner_state
    from .observables import PurityFunctional, qubit_entropy
    from .spectral import diagonalize

    if not 0 < c["alpha"] <= 1:
        raise ConfigError("alpha must lie in (0, 1]")
    if not 0 <= c["delta"] <= 1:
        raise ConfigError("delta must lie in [0, 1]")
    lams = c["lambdas"]
    if len(lams) != 4:
        raise ConfigError("need exactly four lambdas")
    H = build_bell_hamiltonian(BellModelParams(c["alpha"], tuple(lams)))
    sys_ = diagonalize(H)
    rho = werner_state(c["delta"])
    times = c["times"]
    sp = score_timeseries(PurityFunctional(), sys_, times, rho)
    ss = score_timeseries(qubit_entropy(1), sys_, times, rho)
    rows = [[t, a, b] for (t, a), (_, b) in zip(sp, ss)]
    return ["t", "SC_purity", "SC_vne"], rows, {"lambdas": list(lams)}


def _bell_evolve_entry(c):
    if c["lambdas"] == "random":
        from .analysis import cell_rng

        c = dict(c, lambdas=[float(x) for x in cell_rng(c["seed"], 0).standard_normal(4)])
    return cmd_bell_evolve(c)


def cmd_hn_sweep(c):
    from .analysis import HN_COLUMNS, MAX_SWEEP_SITES, SweepConfig, hn_sweep
    from .measures import EP_POLICIES

    if c["N"] % 2 or not 2 <= c["N"] <= MAX_SWEEP_SITES:
        raise ConfigError(f"N must be even and in 2..{MAX_SWEEP_SITES}")
    if c["ep_policy"] not in EP_POLICIES:
        raise ConfigError(f"ep_policy must be one of {EP_POLICIES}")
    if any(x < 0 for x in c["chi"]) or any(v < 0 for v in c["V"]):
        raise ConfigError("chi and V must be nonnegative")
    cfg = SweepConfig(N=c["N"], chi=tuple(c["chi"]), V=tuple(c["V"]), threshold=c["threshold"],
                      ep_threshold=c["ep_threshold"], ep_policy=c["ep_policy"],
                      wrap_interaction=c["wrap_interaction"], workers=c["threads"])
    res = hn_sweep(cfg)
    rows = []
    for r in res.rows:
        row = list(r)
        row[-1] = int(r[-1]) if np.isfinite(r[-1]) else r[-1]
        rows.append(row)
    extra = {"cell_errors": {str(k): v for k, v in res.errors.items()},
             "cell_time_total": float(np.sum(res.cell_times))}
    return list(HN_COLUMNS), rows, extra, res.errors


def cmd_delta01(c):
    from .analysis import delta01_scan

    if any(v <= 0 for v in c["V"]):
        raise ConfigError("V grid must be positive")
    k = delta01_scan(c["V"], c["chi"], c["N"], wrap=c["wrap_interaction"], workers=c["threads"])
    extra = {"kink_V": k.kink_V, "kink_log10_halfwidth": k.log10_halfwidth,
             "kink_dominance": k.dominance, "degenerate": k.degenerate}
    return ["V", "delta01"], [[v, d] for v, d in zip(k.V, k.delta01)], extra


def cmd_fss(c):
    from .analysis import MAX_SWEEP_SITES, fss_extrapolate

    Ns = [n for n in c["N_list"] if not (c["skip_largest"] and n == MAX_SWEEP_SITES)]
    if len(c["kink_window"]) != 2:
        raise ConfigError("kink_window needs two numbers")
    try:
        r = fss_extrapolate(Ns, c["chi"], np.array(c["V"]), tuple(c["kink_window"]),
                            c["kink_points"], c["kink_rounds"], c["form"], wrap=c["wrap_interaction"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = [[n, a, b, ea, eb] for n, a, b, ea, eb in
            zip(r.N, r.Vc_dprime, r.Vc_delta, r.err_dprime_log10, r.err_delta_log10)]

    def fit(f):
        return {"intercept": f.intercept, "intercept_se": f.intercept_se,
                "slope": f.slope, "slope_se": f.slope_se, "form": f.form}

    extra = {"fit_log10": {"dprime": fit(r.fit_dprime_log10), "delta": fit(r.fit_delta_log10)},
             "fit_V": {"dprime": fit(r.fit_dprime_V), "delta": fit(r.fit_delta_V)},
             "sigmas": r.sigmas, "distinct": r.distinct, "dprime_spike_ratio": r.smooth_dprime,
             "delta_spike_ratio": r.spike_delta}
    return ["N", "Vc_dprime", "Vc_delta", "err_dprime_log10", "err_delta_log10"], rows, extra


def cmd_trajectory_check(c):
    from .dynamics import DilationSpec, exact_right_state, postselected_trajectory
    from .analysis import cell_rng
    from .models import (BellModelParams, HNParams, bell_vectors, build_jump_operators,
                         build_sector_basis, effective_hamiltonian, werner_state)
    from .observables import DensityMatrix
    from .operator_core import Operator

    rng = cell_rng(c["seed"], 0)
    if c["model"] == "bell":
        BellModelParams(c["alpha"], (0.0, 0.0, 0.0, 0.0))  # validates alpha
        R, L = bell_vectors(c["alpha"])
        lam = rng.standard_normal(4) - 1j * np.abs(rng.standard_normal(4))
        H = Operator((R * lam) @ L, "qubit2")
        rho = werner_state(0.7)
    elif c["model"] == "hn":
        try:
            p = HNParams(c["N"], c["chi"], c["V_int"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        b = build_sector_basis(p.n_sites, p.n_sites // 2)
        herm, jumps, g = build_jump_operators(p, b, -1)
        H = effective_hamiltonian(herm, jumps, g)
        v = rng.standard_normal(b.dim) + 1j * rng.standard_normal(b.dim)
        rho = DensityMatrix.pure(v, b.tag)
    else:
        raise ConfigError("model must be bell or hn")
    exact = exact_right_state(H, rho, c["T"])
    rows = []
    for dt in c["dt"]:
        if dt <= 0:
            raise ConfigError("dt must be positive")
        n = int(round(c["T"] / dt))
        r = postselected_trajectory(H, rho, DilationSpec(dt, n))
        err = float(np.linalg.norm(r.rho.matrix - exact.matrix))
        rows.append([dt, n, err, r.log_survival, r.shift])
    errs = [r[2] for r in rows]
    ratios = [a / b if b > 0 else float("inf") for a, b in zip(errs, errs[1:])]
    return ["dt", "n_steps", "error_frobenius", "log_survival", "shift"], rows, {"error_ratios": ratios}


HANDLERS = {
    "bell-sweep": cmd_bell_sweep,
    "bell-evolve": _bell_evolve_entry,
    "hn-sweep": cmd_hn_sweep,
    "delta01": cmd_delta01,
    "fss": cmd_fss,
    "trajectory-check": cmd_trajectory_check,
}


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_meta(path: Path, meta: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(meta), fh, indent=2, sort_keys=True)
        fh.write("\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    command = ns.command
    try:
        conf = resolve(command, ns)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    if conf["threads"] is not None and conf["threads"] < 1:
        print("config error: threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(conf["out"] or f"{command}.csv")
    meta_path = out.with_name(out.name + ".meta.json")
    meta = {"command": command, "seed": conf["seed"], "config": conf, "versions": _versions()}
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        res = HANDLERS[command](conf)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        meta.update(status="numerical error", error=f"{type(exc).__name__}: {exc}",
                    wall_time=time.perf_counter() - t0)
        print(f"numerical error: {exc}", file=sys.stderr)
        try:
            out.parent.mkdir(parents=True, exist_ok=True)
            write_meta(meta_path, meta)
        except OSError:
            pass
        return EXIT_NUMERIC
    header, rows, extra = res[0], res[1], res[2]
    cell_errors = res[3] if len(res) > 3 else {}
    meta.update(extra)
    if cell_errors:
        code = EXIT_NUMERIC
        meta["status"] = f"{len(cell_errors)} cell(s) failed; see cell_errors"
        print(f"numerical error in {len(cell_errors)} cell(s); see {meta_path}", file=sys.stderr)
    else:
        meta["status"] = "ok"
    meta["wall_time"] = time.perf_counter() - t0
    meta["cpu_count"] = os.cpu_count()
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        write_csv(out, header, rows)
        write_meta(meta_path, meta)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
