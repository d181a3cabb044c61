"""Command-line front end: ``kmfg <command> [options]``.

Commands
--------
thresholds  kappa_c, kappa_P and the homogeneous threshold gamma sigma^2
gmap        scan of the symmetric fixed-point map, CSV rows plus a JSON sidecar
penrose     the curve P(i theta) as CSV, crossings and kappa_P as JSON
stability   operator norms, zero counts and a stability certificate per coupling
simulate    finite-horizon game dynamics from a perturbed or equilibrium start
repro       the reference bundle, diffed against the checked-in expected values

Reports are JSON with a fixed key order and floats rounded to 12 significant
digits, so identical inputs give byte-identical output. Exit codes: 0 success,
2 configuration error, 3 numerical failure, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import dynamics, equilibrium, hjb, penrose, stability
from .model import (FrequencyDistribution, ModelParams, QuadratureError, dist_from_dict, kappa_c)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NONCONVERGED = 0, 2, 3, 4

DEFAULT_DIST = {"kind": "dirac", "nodes": [[2.0, 0.5], [-2.0, 0.5]]}
DEFAULT_MODEL = {"kappa": 1.0, "beta": 1.0, "sigma": 1.0}


class ConfigError(ValueError):
    pass


# -- formatting ---------------------------------------------------------------

def _num(x):
    x = float(x)
    if not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    out = float(format(x, ".12g"))
    return 0.0 if out == 0.0 else out


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, complex):
        return {"re": _num(obj.real), "im": _num(obj.imag)}
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, ensure_ascii=False) + "\n"


def _csv_cell(x) -> str:
    return format(float(x), ".12g")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(v) for v in row])


def _sidecar(path) -> Path:
    return Path(path).with_suffix(".json")


# -- configuration ------------------------------------------------------------

def _threads() -> int:
    raw = os.environ.get("KMFG_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"KMFG_THREADS: expected an integer, got {raw!r}") from None
    return max(1, n)


def _mapper():
    n = _threads()
    if n == 1:
        return map
    pool = ThreadPoolExecutor(max_workers=n)
    return pool.map


def _load_config(args) -> dict:
    cfg = {"model": dict(DEFAULT_MODEL), "dist": dict(DEFAULT_DIST), "options": {}, "seed": 0}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config!r}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(doc, dict):
            raise ConfigError("config: expected a JSON object")
        for key in doc:
            if key not in ("model", "dist", "options", "seed"):
                raise ConfigError(f"config.{key}: unknown section")
        if "model" in doc:
            if not isinstance(doc["model"], dict):
                raise ConfigError("config.model: expected an object")
            for key in doc["model"]:
                if key not in DEFAULT_MODEL:
                    raise ConfigError(f"model.{key}: unknown field")
            cfg["model"].update(doc["model"])
        if "dist" in doc:
            cfg["dist"] = doc["dist"]
        if "options" in doc:
            if not isinstance(doc["options"], dict):
                raise ConfigError("config.options: expected an object")
            cfg["options"].update(doc["options"])
        cfg["seed"] = doc.get("seed", 0)
    for key in ("kappa", "beta", "sigma"):
        value = getattr(args, key)
        if value is not None:
            cfg["model"][key] = value
    if args.dist is not None:
        try:
            cfg["dist"] = json.loads(args.dist)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"dist: invalid JSON ({exc.msg})") from None
    for key, name in (("grid_n", "grid_n"), ("time_n", "time_n"), ("horizon", "horizon"),
                      ("lam", "lambda")):
        value = getattr(args, key, None)
        if value is not None:
            cfg["options"][name] = value
    for key, value in vars(args).items():
        if key.startswith("opt_") and value is not None:
            cfg["options"][key[4:]] = value
    return cfg


def _model(cfg) -> ModelParams:
    try:
        values = {k: float(cfg["model"][k]) for k in ("kappa", "beta", "sigma")}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from None
    try:
        return ModelParams(**values)
    except ValueError as exc:
        raise ConfigError(f"model.{str(exc).split()[0]}: {exc}") from None


def _dist(cfg) -> FrequencyDistribution:
    try:
        return dist_from_dict(cfg["dist"])
    except KeyError as exc:
        raise ConfigError(f"{exc.args[0]}: missing field") from None
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith("dist") else f"dist: {msg}") from None


def _opt(cfg, key, default, kind=float):
    value = cfg["options"].get(key, default)
    if value is None:
        return None
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"options.{key}: expected {kind.__name__}, got {value!r}") from None


def _echo(cfg, params, dist) -> dict:
    return {"model": params.as_dict(), "dist": dist.as_dict(), "options": dict(cfg["options"]),
            "seed": cfg["seed"]}


def _parse_kappas(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        items = value
    else:
        items = [v for v in str(value).split(",") if v.strip()]
    try:
        return [float(v) for v in items]
    except ValueError:
        raise ConfigError(f"options.kappas: expected numbers, got {value!r}") from None


# -- commands -----------------------------------------------------------------

def cmd_thresholds(cfg) -> dict:
    params, dist = _model(cfg), _dist(cfg)
    theta_max = _opt(cfg, "theta_max", None)
    curve = penrose.trace_curve(dist, params, theta_max)
    kc = kappa_c(dist, params)
    kp = penrose.kappa_P(dist, params, curve)
    return {
        "command": "thresholds",
        "kappa_c": kc,
        "kappa_P": kp,
        "gap": kc - kp,
        "gamma": params.gamma,
        "kappa_c_delta0": params.gamma * params.sigma**2,
        "theta_max": curve.theta_max,
        "crossings": [{"theta": t, "reP": r} for t, r in curve.crossings],
        "config": _echo(cfg, params, dist),
    }


def cmd_gmap(cfg, out=None, warn=print) -> dict:
    params, dist = _model(cfg), _dist(cfg)
    grid = hjb.TorusGrid(_opt(cfg, "grid_n", 256, int))
    kappa = params.kappa
    alpha_max = _opt(cfg, "alpha_max", kappa)
    warnings = []
    if alpha_max > kappa:
        warnings.append(f"alpha_max={alpha_max!r} exceeds kappa={kappa!r}; clipped (G <= kappa)")
        warn("warning: " + warnings[-1])
        alpha_max = kappa
    points = _opt(cfg, "scan_points", None, int)
    step = alpha_max / points if points else _opt(cfg, "step", 0.05 * kappa if kappa else 1.0)
    report = equilibrium.find_fixed_points(params, dist, alpha_max, step, grid, mapper=_mapper())
    kc = kappa_c(dist, params)
    result = {
        "command": "gmap",
        "kappa": kappa,
        "kappa_c": kc,
        "slope_at_zero": kappa / kc,
        "fixed_points": report.fixed_points,
        "residuals": report.residuals,
        "slopes": report.slopes,
        "tangency_suspected": report.tangency_suspected,
        "failure_boundary": report.failure_boundary,
        "derivative_at_zero": report.derivative_at_zero,
        "warnings": warnings,
        "config": _echo(cfg, params, dist),
    }
    if out:
        write_csv(out, ["alpha", "G_kappa"], report.scan)
        _sidecar(out).write_text(dumps(result), encoding="utf-8")
    return result


def cmd_penrose(cfg, out=None) -> dict:
    params, dist = _model(cfg), _dist(cfg)
    theta_max = _opt(cfg, "theta_max", None)
    samples = _opt(cfg, "samples", 4001, int)
    curve = penrose.trace_curve(dist, params, theta_max, samples)
    kp = penrose.kappa_P(dist, params, curve)
    pos = curve.positive_crossings()
    rightmost = max(pos, key=lambda c: c[1]) if pos else None
    result = {
        "command": "penrose",
        "kappa_P": kp,
        "kappa_c": kappa_c(dist, params),
        "theta_max": curve.theta_max,
        "samples": samples,
        "crossings": [{"theta": t, "reP": r} for t, r in curve.crossings],
        "rightmost_crossing": None if rightmost is None else
        {"theta": abs(rightmost[0]), "reP": rightmost[1]},
        "config": _echo(cfg, params, dist),
    }
    if out:
        write_csv(out, ["theta", "reP", "imP"], curve.rows())
        _sidecar(out).write_text(dumps(result), encoding="utf-8")
    return result


def _certificate(params, dist, kappa, norm, lam, matrix):
    """Both sufficient routes are evaluated and reported; either one certifies."""
    entry = {"kappa": kappa, "kappa_norm": kappa * norm, "norm_route": kappa * norm < 1.0}
    try:
        zeros = penrose.count_zeros(dist, params, kappa, strip=(-lam, params.beta + lam))
    except penrose.ZeroCountError as exc:
        zeros = None
        entry["zero_count_error"] = str(exc)
    entry["zero_count"] = zeros
    penrose_route = None
    if dist.is_two_dirac:
        penrose_route = False
        if zeros == 0:
            try:
                stability.two_dirac_laplace_solve(params, dist.omega0, kappa,
                                                  lambda z: 1.0 / (z + 1.0), lam=lam,
                                                  check_penrose=False)
                penrose_route = True
            except stability.ResolventError as exc:
                entry["laplace_error"] = str(exc)
    entry["zero_count_route"] = penrose_route
    reasons = []
    if entry["norm_route"]:
        reasons.append("kappa ||L|| < 1")
    if penrose_route:
        reasons.append("no zeros in the Penrose strip and the Laplace system is solvable")
    if reasons:
        entry["certificate"] = "yes"
        entry["reason"] = "; ".join(reasons)
        return entry
    rcond = stability.reciprocal_condition(np.eye(matrix.shape[0]) - kappa * matrix)
    entry["rcond"] = rcond
    if rcond < 1e-12:
        entry["certificate"] = "no"
        entry["reason"] = "I - kappa L is singular on the grid"
    else:
        entry["certificate"] = "unknown"
        entry["reason"] = "norm bound fails and the zero-count route does not apply"
    return entry


def cmd_stability(cfg) -> dict:
    params, dist = _model(cfg), _dist(cfg)
    if not dist.symmetric:
        raise ConfigError("dist.symmetric: the stability operator needs a symmetric law")
    lam = _opt(cfg, "lambda", 0.01 * params.sigma**2)
    if not 0.0 < lam < params.half_var:
        raise ConfigError(f"options.lambda: must lie in (0, sigma^2/2), got {lam!r}")
    horizon = _opt(cfg, "horizon", stability.default_horizon(params))
    grid = stability.TimeGrid(horizon, _opt(cfg, "time_n", 2048, int))
    kappas = _parse_kappas(cfg["options"].get("kappas")) or [params.kappa]
    matrix = stability.L_matrix(params, dist, grid)
    norm = stability.op_norm_L(params, dist, lam, grid, matrix)
    result = {
        "command": "stability",
        "lambda": lam,
        "horizon": horizon,
        "time_n": grid.n,
        "op_norm_L": norm,
        "norm_exact": stability.norm_exact(params, dist, lam),
        "norm_bound": stability.norm_bound_simple(params, lam),
        "kappa_c": kappa_c(dist, params),
        "kappas": [_certificate(params, dist, k, norm, lam, matrix) for k in kappas],
        "config": _echo(cfg, params, dist),
    }
    return result


def _equilibrium_start(params, dist, grid):
    scan = equilibrium.find_fixed_points(params, dist, grid=grid, slopes=False,
                                         step=params.kappa / 64 if params.kappa else None)
    alpha = max(scan.fixed_points)
    init = []
    for w in dist.nodes:
        v = hjb.solve_stationary_hjb(params, float(w), hjb.OrderParameters(alpha, 0.0), grid)
        init.append(hjb.invariant_measure(params, float(w), v))
    return alpha, init


def cmd_simulate(cfg, out=None) -> dict:
    params, dist = _model(cfg), _dist(cfg)
    grid = hjb.TorusGrid(_opt(cfg, "grid_n", 128, int))
    horizon = _opt(cfg, "horizon", 20.0 / params.beta)
    steps = _opt(cfg, "time_n", 2000, int)
    eps = _opt(cfg, "epsilon", 0.1)
    start = cfg["options"].get("start", "cosine")
    damping = _opt(cfg, "damping", 0.5)
    sweeps = _opt(cfg, "max_sweeps", 200, int)
    alpha = None
    if start == "cosine":
        init = lambda x, w: (1.0 + eps * np.cos(x)) / (2.0 * np.pi)  # noqa: E731
        traj = dynamics.evolve_mfg(params, dist, init, horizon, steps, damping, grid,
                                   max_sweeps=sweeps, mapper=_mapper())
    elif start == "uniform":
        init = lambda x, w: np.full_like(x, 1.0 / (2.0 * np.pi))  # noqa: E731
        traj = dynamics.evolve_mfg(params, dist, init, horizon, steps, damping, grid,
                                   max_sweeps=sweeps, mapper=_mapper())
    elif start == "equilibrium":
        alpha, init = _equilibrium_start(params, dist, grid)
        traj = dynamics.evolve_mfg(params, dist, init, horizon, steps, damping, grid,
                                   max_sweeps=sweeps, terminal="stationary", h_guess=(alpha, 0.0),
                                   mapper=_mapper())
    else:
        raise ConfigError(f"options.start: expected cosine, uniform or equilibrium, got {start!r}")
    try:
        fit = dynamics.fit_decay_rate(traj).as_dict()
    except ValueError as exc:
        fit = {"error": str(exc)}
    result = {
        "command": "simulate",
        "start": start,
        "horizon": horizon,
        "steps": steps,
        "grid_n": grid.n,
        "picard_sweeps": len(traj.picard_residuals),
        "picard_residual": traj.picard_residuals[-1],
        "mass_error": traj.mass_error,
        "gm_initial": float(traj.gm_max[0]),
        "gm_final": float(traj.gm_max[-1]),
        "decay_fit": fit,
        "config": _echo(cfg, params, dist),
    }
    if alpha is not None:
        result["alpha_star"] = alpha
        result["max_deviation"] = float(np.max(np.abs(traj.order - np.array([alpha, 0.0]))))
    if out:
        dynamics.write_trajectory_csv(traj, out)
        _sidecar(out).write_text(dumps(result), encoding="utf-8")
    return result


def _base_cfg(model, dist, options=None):
    return {"model": dict(model), "dist": dist, "options": dict(options or {}), "seed": 0}


def run_repro(out_dir=None) -> dict:
    """Reference numbers and figure data, in a fixed order."""
    gauss = _base_cfg({"kappa": 1.0, "beta": 1.0, "sigma": 2.0},
                      {"kind": "gaussian", "mean": 0.0, "variance": 1.0})
    two = _base_cfg({"kappa": 1.0, "beta": 1.0, "sigma": 1.0}, DEFAULT_DIST)
    fig1 = _base_cfg({"kappa": 9.0, "beta": 1.0, "sigma": 1.0}, DEFAULT_DIST,
                     {"scan_points": 64, "grid_n": 256})
    out_dir = Path(out_dir) if out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    g = cmd_thresholds(gauss)
    t = cmd_thresholds(two)
    f1 = cmd_gmap(fig1, out_dir / "figure1_gmap.csv" if out_dir else None, warn=lambda m: None)
    f2 = cmd_penrose(two, out_dir / "figure2_penrose.csv" if out_dir else None)
    return {
        "command": "repro",
        "example_gaussian": {"kappa_c": g["kappa_c"], "kappa_c_delta0": g["kappa_c_delta0"],
                             "kappa_P": g["kappa_P"]},
        "example_two_dirac_kappa_c": {"kappa_c": t["kappa_c"]},
        "example_two_dirac_kappa_P": {"kappa_P": t["kappa_P"]},
        "figure1": {"kappa": 9.0, "fixed_points": f1["fixed_points"],
                    "slopes": f1["slopes"]},
        "figure2": {"crossings": f2["crossings"], "rightmost_crossing": f2["rightmost_crossing"],
                    "kappa_P": f2["kappa_P"]},
    }


def _compare(expected, actual, path="", rtol=1e-6, atol=1e-9):
    diffs = []
    if isinstance(expected, dict) and isinstance(actual, dict):
        for key in expected:
            if key not in actual:
                diffs.append(f"{path}.{key}: missing")
            else:
                diffs += _compare(expected[key], actual[key], f"{path}.{key}", rtol, atol)
    elif isinstance(expected, list) and isinstance(actual, list):
        if len(expected) != len(actual):
            diffs.append(f"{path}: length {len(actual)} != expected {len(expected)}")
        else:
            for i, (e, a) in enumerate(zip(expected, actual)):
                diffs += _compare(e, a, f"{path}[{i}]", rtol, atol)
    elif isinstance(expected, (int, float)) and isinstance(actual, (int, float)):
        if abs(expected - actual) > atol + rtol * abs(expected):
            diffs.append(f"{path}: {actual!r} != expected {expected!r}")
    elif expected != actual:
        diffs.append(f"{path}: {actual!r} != expected {expected!r}")
    return diffs


def expected_repro() -> dict:
    text = resources.files("kuramoto_mfg").joinpath("data/repro_expected.json").read_text("utf-8")
    return json.loads(text)


def cmd_repro(cfg, out=None) -> dict:
    actual = _clean(run_repro(out))
    diffs = _compare(expected_repro(), actual)
    actual["matches_expected"] = not diffs
    actual["differences"] = diffs
    if out:
        (Path(out) / "repro.json").write_text(dumps(actual), encoding="utf-8")
    return actual


# -- entry point ----------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="JSON config with model, dist, options sections")
    p.add_argument("--out", help="output path (CSV commands also write a .json sidecar)")
    p.add_argument("--kappa", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--dist", help='inline JSON, e.g. \'{"kind":"gaussian","variance":1}\'')
    p.add_argument("--grid-n", dest="grid_n", type=int)
    p.add_argument("--time-n", dest="time_n", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--quiet", action="store_true", help="do not print the report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kmfg", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("thresholds", help="kappa_c and kappa_P")
    _common(p)
    p.add_argument("--theta-max", dest="opt_theta_max", type=float)
    p = sub.add_parser("gmap", help="fixed points of the symmetric map G_kappa")
    _common(p)
    p.add_argument("--alpha-max", dest="opt_alpha_max", type=float)
    p.add_argument("--step", dest="opt_step", type=float)
    p.add_argument("--scan-points", dest="opt_scan_points", type=int)
    p = sub.add_parser("penrose", help="Penrose curve and crossings")
    _common(p)
    p.add_argument("--theta-max", dest="opt_theta_max", type=float)
    p.add_argument("--samples", dest="opt_samples", type=int)
    p = sub.add_parser("stability", help="operator norms and certificates")
    _common(p)
    p.add_argument("--kappas", dest="opt_kappas", help="comma-separated couplings")
    p = sub.add_parser("simulate", help="finite-horizon dynamics")
    _common(p)
    p.add_argument("--epsilon", dest="opt_epsilon", type=float)
    p.add_argument("--start", dest="opt_start", choices=["cosine", "uniform", "equilibrium"])
    p.add_argument("--damping", dest="opt_damping", type=float)
    p.add_argument("--max-sweeps", dest="opt_max_sweeps", type=int)
    p = sub.add_parser("repro", help="reference bundle with expected-value diff")
    _common(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    warn = (lambda m: None) if args.quiet else (lambda m: print(m, file=sys.stderr))
    try:
        cfg = _load_config(args)
        cmd = args.command
        if cmd == "thresholds":
            report = cmd_thresholds(cfg)
        elif cmd == "gmap":
            report = cmd_gmap(cfg, args.out, warn)
        elif cmd == "penrose":
            report = cmd_penrose(cfg, args.out)
        elif cmd == "stability":
            report = cmd_stability(cfg)
        elif cmd == "simulate":
            report = cmd_simulate(cfg, args.out)
        else:
            report = cmd_repro(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except dynamics.PicardStagnationError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (QuadratureError, hjb.HJBConvergenceError, penrose.StripError,
            penrose.ZeroCountError, stability.ResolventError, ArithmeticError,
            np.linalg.LinAlgError, RuntimeError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    text = dumps(report)
    if args.out and args.command in ("thresholds", "stability"):
        Path(args.out).write_text(text, encoding="utf-8")
    if not args.quiet:
        sys.stdout.write(text)
    if args.command == "repro" and not report["matches_expected"]:
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
