"""Command-line front end: ``emdecay <command> [--config FILE] [--seed S] [--threads N] [--out DIR]``.

Exit status is 0 on success, 1 when the command line or config is invalid,
and 2 when a numerical check fails. Diagnostics go to stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import reports
from .energy import FrequencyGrid, LyapunovSearchError, search_params
from .general import (
    constraint_split,
    project_constraints,
    two_two_one_prediction,
    verify_decay_property,
)
from .grid import GridField, set_fft_workers
from .kernel import (
    DEFAULT_GRIDS,
    CSV_HEADER,
    EtaProfile,
    NormSpec,
    default_t_grid,
    eta,
    gaussian,
    predict,
    verify_lpqlr,
)
from .solver import SimulationConfig, SimulationError, decay_report, simulate
from .system import (
    AbscissaScan,
    EulerMaxwellParams,
    direction_set,
    fit_margin,
    load_system,
    restricted_spectrum,
    xi_grid,
)

log = logging.getLogger("emdecay")

COMMANDS = ("spectrum", "lyapunov", "lpqlr", "simulate", "appendix", "report")

ANCHORS = {
    "spectrum": "decay margin of the restricted symbol: min Re spec Phi(xi) >= c0 |xi|^2/(1+|xi|^2)^2",
    "lyapunov": "frequency-wise Lyapunov inequality dE/dt + c1 eta(xi) E <= 0 with E comparable to |z|^2",
    "lpqlr": "L^p-L^q-L^r bound for the multiplier |xi|^k exp(-eta(xi) t) with regularity-loss rate",
    "simulate": "L^1-L^2 decay (1+t)^(-3/4) of small Euler-Maxwell perturbations",
    "appendix": "decay property and constraint persistence for constrained dissipative hyperbolic systems",
    "report": "summary of all checks",
}

SCHEMAS = {
    "spectrum": {"system", "rmin", "rmax", "count", "extra", "rate"},
    "lyapunov": {"params", "count", "extra", "samples", "seed", "rmin", "rmax"},
    "lpqlr": {"spec", "profile", "grid", "variance", "window", "count", "R0"},
    "simulate": {"grid", "params", "init", "time", "nonlinear", "outputs", "spectra_subsample",
                 "window", "seed"},
    "appendix": {"system", "spec", "data", "window", "count", "seed"},
    "report": set(),
}


class ConfigError(ValueError):
    pass


class CheckFailed(RuntimeError):
    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = details or {}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _diagnostic("usage", message)
        raise SystemExit(1)


def _diagnostic(kind: str, message: str, details: dict | None = None) -> None:
    print(json.dumps({"error": kind, "message": message, "details": details or {}}, default=str),
          file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config for the command")
    common.add_argument("--seed", type=int, help="64-bit seed; overrides the config value")
    common.add_argument("--threads", type=int, help="FFT worker threads")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser = _Parser(prog="emdecay", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command",
                                parser_class=_Parser)
    helps = {
        "spectrum": "restricted spectral abscissa scan (CSV + fit JSON)",
        "lyapunov": "search for Lyapunov functional parameters (JSON)",
        "lpqlr": "check the L^p-L^q-L^r kernel bound (CSV + JSON)",
        "simulate": "run the pseudo-spectral solver (monitors CSV + decay JSON)",
        "appendix": "constraint split and decay property of a general system (JSON)",
        "report": "merge existing outputs in --out into report.md",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


# ---------------------------------------------------------------- config

def load_config(path: Path | None, command: str) -> dict:
    if path is None:
        return {}
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(cfg) - SCHEMAS[command]
    if extra:
        raise ConfigError(f"unknown keys for '{command}': {sorted(extra)}")
    return cfg


def _spec(d: dict, n_default: int = 3) -> NormSpec:
    d = {"p": 2, "q": 1, "r": 2, "k": 0, "j": 0, "l": 2, "n": n_default, **d}
    if d["p"] in ("inf", "infinity"):
        d["p"] = math.inf
    return NormSpec(**d)


def _window(cfg: dict, default) -> tuple:
    w = tuple(float(x) for x in cfg.get("window", default))
    if len(w) != 2 or not 0 <= w[0] < w[1]:
        raise ConfigError(f"window must be [t0, t1] with 0 <= t0 < t1, got {list(w)}")
    return w


# ---------------------------------------------------------------- commands

def run_spectrum(cfg: dict, seed: int, out: Path) -> dict:
    system = load_system(cfg.get("system", {"builtin": "euler_maxwell"}))
    radii = xi_grid(float(cfg.get("rmin", 1e-3)), float(cfg.get("rmax", 1e3)), int(cfg.get("count", 200)))
    dirs = direction_set(system.n, int(cfg.get("extra", 0)))
    rate = cfg.get("rate", {"a": 1, "b": 2})
    profile = EtaProfile(rate["a"], rate["b"])
    rows = []
    mu = np.empty((radii.size, len(dirs)))
    worst = 0.0
    for i, r in enumerate(radii):
        e = float(eta(r, profile))
        for j, d in enumerate(dirs):
            sp = restricted_spectrum(system, r * d)
            mu[i, j] = sp.abscissa
            worst = max(worst, sp.invariance_residual)
            rows.append((float(r), j, sp.abscissa, e, sp.abscissa / e))
    reports.write_csv(out / "spectrum.csv", ("xi_norm", "omega_id", "re_lambda_min", "eta", "ratio"), rows)
    scan = AbscissaScan(radii, dirs, mu, worst)
    fit = fit_margin(scan, rate=lambda r: eta(r, profile))
    result = {
        "system": system.name,
        "rows": len(rows),
        "directions": len(dirs),
        "fit": fit.as_dict(),
        "invariance_residual": worst,
        "passed": bool(fit.c0 > 0),
    }
    reports.write_json(_stamp("spectrum", result), out / "spectrum.json")
    if not result["passed"]:
        raise CheckFailed("decay margin is not bounded below by a positive multiple of eta", fit.as_dict())
    return result


def run_lyapunov(cfg: dict, seed: int, out: Path) -> dict:
    em = EulerMaxwellParams.from_dict(cfg.get("params", {}))
    grid = FrequencyGrid.default(em, int(cfg.get("count", 200)), int(cfg.get("extra", 0)),
                                 float(cfg.get("rmin", 1e-3)), float(cfg.get("rmax", 1e3)))
    try:
        res = search_params(em, grid.xis, seed=seed, samples=int(cfg.get("samples", 100)))
    except LyapunovSearchError as exc:
        reports.write_json(_stamp("lyapunov", {"passed": False, "certificate": exc.certificate}),
                           out / "lyapunov.json")
        raise CheckFailed(str(exc), exc.certificate) from exc
    result = {**res.as_dict(), "passed": True, "seed": seed}
    reports.write_json(_stamp("lyapunov", result), out / "lyapunov.json")
    return result


def run_lpqlr(cfg: dict, seed: int, out: Path) -> dict:
    spec = _spec(cfg.get("spec", {}))
    prof = cfg.get("profile", {"a": 1, "b": 2})
    profile = EtaProfile(prof["a"], prof["b"])
    N, L = DEFAULT_GRIDS[spec.n]
    g = cfg.get("grid", {})
    N, L = int(g.get("N", N)), float(g.get("L", L))
    window = _window(cfg, (10.0, 1e3))
    t = default_t_grid(*window, int(cfg.get("count", 24)))
    phi = gaussian(spec.n, N, L, float(cfg.get("variance", 9.0)))
    rep = verify_lpqlr(phi, spec, profile, t, R0=float(cfg.get("R0", 1.0)), window=window)
    reports.write_csv(out / "lpqlr.csv", CSV_HEADER, rep.rows())
    result = {**rep.summary(), "passed": bool(rep.bounded and rep.hoelder_ok)}
    reports.write_json(_stamp("lpqlr", result), out / "lpqlr.json")
    if not result["passed"]:
        raise CheckFailed("calibrated constant is not stable over the window", rep.summary())
    return result


def run_simulate(cfg: dict, seed: int, out: Path) -> dict:
    cfg = dict(cfg)
    window = cfg.pop("window", None)
    cfg.pop("seed", None)
    init = dict(cfg.get("init", {}))
    init["seed"] = seed
    cfg["init"] = init
    outputs = cfg.get("outputs", {})
    sim_cfg = SimulationConfig.from_dict(cfg)
    T = sim_cfg.time.T
    win = _window({"window": window} if window else {}, (5.0, T) if T >= 10 else (2.0, T))
    csv_path = out / outputs.get("csv_path", "monitors.csv")
    json_path = out / outputs.get("json_path", "simulate.json")
    try:
        res = simulate(sim_cfg)
    except SimulationError as exc:
        reports.write_json(_stamp("simulate", {"passed": False, "error": str(exc)}), json_path)
        raise CheckFailed(str(exc)) from exc
    mon = res.monitors
    mon.write_csv(csv_path)
    dims = sim_cfg.grid.dims
    rate = dims / 4
    decay = None
    times = np.asarray(mon.times)
    if np.sum((times >= win[0]) & (times <= win[1])) >= 8 and win[0] >= 2:
        decay = decay_report(mon, win, rate=rate, max_slope=-rate + 0.15).as_dict()
    i1 = int(np.argmin(np.abs(times - 1.0)))
    n_ratio = float(mon.N_t[-1] / mon.N_t[i1]) if mon.N_t[i1] > 0 else 0.0
    resid = mon.max_constraint_residual()
    checks = {
        "decay": None if decay is None else decay["passed"],
        "N_bounded": n_ratio <= 10.0,
        "constraints": resid <= 1e-8,
    }
    result = {
        "config": {"grid": sim_cfg.grid.__dict__, "nonlinear": sim_cfg.nonlinear, "T": T,
                   "dt": res.dt, "seed": seed},
        "decay": decay,
        "N_ratio": n_ratio,
        "constraint_residual": resid,
        "checks": checks,
        "warnings": res.warnings,
        "passed": all(v is not False for v in checks.values()),
    }
    reports.write_json(_stamp("simulate", result), json_path)
    if not result["passed"]:
        raise CheckFailed("simulation checks failed", checks)
    return result


def run_appendix(cfg: dict, seed: int, out: Path) -> dict:
    system = load_system(cfg.get("system", {"builtin": "euler_maxwell"}))
    spec = _spec(cfg.get("spec", {}), system.n)
    data = cfg.get("data", {})
    N0, L0 = (32, 16 * math.pi) if system.n == 3 else DEFAULT_GRIDS[system.n]
    N, L = int(data.get("N", N0)), float(data.get("L", L0))
    coef = np.asarray(data.get("coefficients", np.ones(system.m)), dtype=float)
    if coef.shape != (system.m,):
        raise ConfigError(f"data.coefficients must have {system.m} entries")
    g = gaussian(system.n, N, L, float(data.get("variance", 9.0)))
    w0 = GridField(coef.reshape((-1,) + (1,) * system.n) * g.values[None], g.box, components=system.m)
    w0 = project_constraints(system, w0)
    window = _window(cfg, (10.0, 1e3))
    t = default_t_grid(*window, int(cfg.get("count", 24)))
    rep = verify_decay_property(system, w0, spec, t, window=window, seed=seed)

    result = {"system": system.name, "decay_property": rep.as_dict()}
    ok = rep.constraint_drift <= 1e-9
    if system.has_constraints:
        split = constraint_split(system.Q, system.R)
        errs = split.identity_errors()
        result["constraint_split"] = {"rank": split.rank, "Pi1": split.Pi1, "identity_errors": errs}
        ok = ok and max(errs.values()) <= 1e-12
    if spec.p == 2 and spec.q == 1 and spec.r == 2:
        direct = two_two_one_prediction(spec.n, spec.k, spec.l, spec.j)
        general = predict(spec, EtaProfile(1, 2))
        same = direct == general
        result["two_two_one"] = {"direct": [direct.low_exp, direct.high_exp],
                                 "general": [general.low_exp, general.high_exp], "equal": same}
        ok = ok and same
    result["passed"] = bool(ok)
    reports.write_json(_stamp("appendix", result), out / "appendix.json")
    if not ok:
        raise CheckFailed("appendix checks failed", result)
    return result


SECTIONS = (
    ("spectrum.json", "Restricted spectrum"),
    ("lyapunov.json", "Lyapunov parameters"),
    ("lpqlr.json", "Kernel bound"),
    ("simulate.json", "Simulation"),
    ("appendix.json", "General systems"),
)


def run_report(cfg: dict, seed: int, out: Path) -> dict:
    lines = ["# emdecay report", ""]
    merged = {}
    for fname, title in SECTIONS:
        path = out / fname
        if not path.is_file():
            continue
        doc = json.loads(path.read_text())
        merged[fname] = {"paper_anchor": doc.get("paper_anchor"), "passed": doc.get("passed")}
        verdict = {True: "pass", False: "FAIL", None: "n/a"}[doc.get("passed")]
        lines += [f"## {title}", "", f"- checks: {doc.get('paper_anchor')}", f"- verdict: {verdict}",
                  f"- source: {fname}", ""]
    if not merged:
        raise ConfigError(f"no outputs to summarize in {out}")
    (out / "report.md").write_text("\n".join(lines))
    result = {"sections": merged, "passed": all(v["passed"] is not False for v in merged.values())}
    reports.write_json(_stamp("report", result), out / "report.json")
    return result


RUNNERS = {
    "spectrum": run_spectrum,
    "lyapunov": run_lyapunov,
    "lpqlr": run_lpqlr,
    "simulate": run_simulate,
    "appendix": run_appendix,
    "report": run_report,
}


def _stamp(command: str, result: dict) -> dict:
    return {"command": command, "paper_anchor": ANCHORS[command], **result}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be positive")
            set_fft_workers(args.threads)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must fit in an unsigned 64-bit integer")
        cfg = load_config(args.config, args.command)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        try:
            args.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {args.out}: {exc}") from exc
        RUNNERS[args.command](cfg, seed, args.out)
    except CheckFailed as exc:
        _diagnostic("check_failed", str(exc), exc.details)
        return 2
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        _diagnostic("validation", str(exc))
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
