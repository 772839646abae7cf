"""Config-driven batch runner.

Reads an INI-style scenario file, builds the requested preset problem,
executes one of four modes (solve, sweep, converge, check) and writes
CSV/JSON results plus two-column .dat files with a plotting stub.
Outputs are deterministic: identical config bytes produce identical
output bytes, and every file records the scenario name and a hash of
the effective config.

Exit codes: 0 success, 1 configuration or validation failure (including
failed condition checks), 2 numerical failure during a run.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import re
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .discretize import (SpaceGrid, BoundaryData, check_condition_1,
                         check_condition_2_1, check_condition_4_1)
from .elliptic import ProblemSpec, full_solve
from .estimates import (EstimateReport, coercive_report, convergence_study,
                        uniformity_factors, uniformity_sweep)
from .exprparse import ParseError
from .linalg import (Overflow, SingularMatrix, SqrtNotConverged,
                     check_positivity)
from .parabolic import CauchySpec
from .presets import PRESET_NAMES, make_pair

__all__ = ["ConfigError", "main", "run"]

MODES = ("solve", "sweep", "converge", "check")

NUMERICAL_ERRORS = (Overflow, SingularMatrix, SqrtNotConverged,
                    np.linalg.LinAlgError, FloatingPointError)

_TOKEN_RE = re.compile(r"\[[^\]]*\]|\S+")


class ConfigError(ValueError):
    """Bad or missing configuration value; message names the key path."""


# ----------------------------------------------------------- config access


class Config:
    """Typed accessors over configparser with key-path error messages."""

    def __init__(self, cp: configparser.ConfigParser):
        self.cp = cp

    def raw(self, section: str, key: str, default=None) -> Optional[str]:
        if self.cp.has_option(section, key):
            val = self.cp.get(section, key).strip()
            return val if val else default
        return default

    def require(self, section: str, key: str) -> str:
        val = self.raw(section, key)
        if val is None:
            raise ConfigError(f"missing required key [{section}] {key}")
        return val

    def _cast(self, section, key, val, cast, what):
        try:
            return cast(val)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{section}] {key}: {what}: {exc}") from None

    def getfloat(self, section, key, default=None):
        val = self.raw(section, key)
        if val is None:
            return default
        return self._cast(section, key, val, float, "expected a real number")

    def getint(self, section, key, default=None):
        val = self.raw(section, key)
        if val is None:
            return default
        return self._cast(section, key, val, int, "expected an integer")

    def getcomplex(self, section, key, default=None):
        val = self.raw(section, key)
        if val is None:
            return default
        return self._cast(section, key, val, _parse_complex,
                          "expected a real or [re, im] pair")

    def getfloatlist(self, section, key, required=False):
        val = self.require(section, key) if required else self.raw(section, key)
        if val is None:
            return None
        return self._cast(section, key, val,
                          lambda s: [float(t) for t in _TOKEN_RE.findall(s)],
                          "expected space-separated reals")

    def getcomplexlist(self, section, key, required=False):
        val = self.require(section, key) if required else self.raw(section, key)
        if val is None:
            return None
        return self._cast(section, key, val,
                          lambda s: [_parse_complex(t) for t in _TOKEN_RE.findall(s)],
                          "expected space-separated [re, im] pairs or reals")

    def getvector(self, section, key, n, default=None):
        val = self.raw(section, key)
        if val is None:
            if default is None:
                return None
            return np.full(n, complex(default), dtype=complex)
        vals = self._cast(section, key, val,
                          lambda s: [_parse_complex(t) for t in _TOKEN_RE.findall(s)],
                          "expected a scalar or n values")
        if len(vals) == 1:
            return np.full(n, vals[0], dtype=complex)
        if len(vals) == n:
            return np.array(vals, dtype=complex)
        raise ConfigError(f"[{section}] {key}: expected 1 or {n} values, got {len(vals)}")

    def getexpr(self, section, key, default=None):
        val = self.raw(section, key)
        if val is None or val.lower() == "none":
            return default
        return val


def _parse_complex(token: str) -> complex:
    token = token.strip()
    if token.startswith("["):
        if not token.endswith("]"):
            raise ValueError(f"unterminated complex pair {token!r}")
        parts = [p for p in token[1:-1].replace(",", " ").split() if p]
        if len(parts) != 2:
            raise ValueError(f"complex pair needs two entries, got {token!r}")
        return complex(float(parts[0]), float(parts[1]))
    return complex(float(token), 0.0)


def load_config(path, overrides: Sequence[str] = (),
                preset: Optional[str] = None) -> Config:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        cp.read_string(p.read_text(), source=str(p))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section.strip(), key.strip(), value.strip())
    if preset is not None:
        if not cp.has_section("scenario"):
            cp.add_section("scenario")
        cp.set("scenario", "preset", preset)
    return Config(cp)


def config_hash(cfg: Config, mode: str) -> str:
    lines = [f"mode={mode}"]
    for section in sorted(cfg.cp.sections()):
        for key in sorted(cfg.cp.options(section)):
            lines.append(f"[{section}] {key} = {cfg.cp.get(section, key)}")
    digest = hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()
    return digest[:16]


# ------------------------------------------------------- problem assembly


def _build_pair(cfg: Config, preset: str):
    if preset not in PRESET_NAMES:
        raise ConfigError(f"[scenario] preset: unknown preset {preset!r}")
    if preset == "scalar":
        return make_pair("scalar",
                         a=cfg.getfloat("operators", "a", 1.0),
                         b=cfg.getfloat("operators", "b", 0.5))
    if preset == "commuting":
        return make_pair("commuting",
                         n_y=cfg.getint("grid", "n_y", 8),
                         a=cfg.getexpr("operators", "a", "1+2*y"),
                         b0=cfg.getfloat("operators", "b0", 0.3),
                         b1=cfg.getfloat("operators", "b1", 0.1))
    return make_pair("wentzell",
                     n_y=cfg.getint("grid", "n_y", 16),
                     a=cfg.getexpr("operators", "a", "1+y"),
                     b=cfg.getexpr("operators", "b", "y"),
                     kernel=cfg.getexpr("operators", "kernel",
                                        "0.5*exp(-(y-tau)^2)"))


def _build_bc(cfg: Config, n: int) -> BoundaryData:
    alpha = cfg.getcomplexlist("boundary", "alpha") or [1.0, 0.0]
    beta = cfg.getcomplexlist("boundary", "beta") or [0.0, 1.0]
    if len(alpha) != 2 or len(beta) != 2:
        raise ConfigError("[boundary] alpha/beta: need exactly two coefficients")
    try:
        return BoundaryData(
            m1=cfg.getint("boundary", "m1", 0),
            m2=cfg.getint("boundary", "m2", 1),
            alpha=tuple(alpha), beta=tuple(beta),
            f1=cfg.getvector("boundary", "f1", n, default=1.0),
            f2=cfg.getvector("boundary", "f2", n, default=0.5))
    except ValueError as exc:
        raise ConfigError(f"[boundary]: {exc}") from None


def _build_spec(cfg: Config, preset: str, eps: float, lam: complex) -> ProblemSpec:
    pair = _build_pair(cfg, preset)
    bc = _build_bc(cfg, pair.n)
    try:
        return ProblemSpec(
            pair=pair, eps=eps, lam=lam,
            T=cfg.getfloat("scenario", "T", 1.0),
            bc=bc,
            f=cfg.getexpr("data", "f"),
            n_t=cfg.getint("grid", "n_t", 201),
            eps0=max(cfg.getfloat("scenario", "eps0", 1.0), eps),
            n_x=cfg.getint("grid", "n_x", 1024),
            line_halfwidth=cfg.getfloat("grid", "L"))
    except (ValueError, ParseError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from None


# ------------------------------------------------------------- formatting


def _fmt(x) -> str:
    return repr(float(x))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (complex, np.complexfloating)):
        c = complex(obj)
        if c.imag == 0:
            return c.real
        return [c.real, c.imag]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _write(path: Path, header: str, lines: List[str]) -> None:
    path.write_text("\n".join([header] + lines) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n")


def _report_row(rep: EstimateReport) -> str:
    cells = [_fmt(rep.eps), _fmt(rep.lam.real), _fmt(rep.lam.imag),
             _fmt(rep.lhs_terms[0]), _fmt(rep.lhs_terms[1]),
             _fmt(rep.lhs_terms[2]), _fmt(rep.au_norm), _fmt(rep.lhs_total),
             _fmt(rep.lhs_alt_total), _fmt(rep.rhs), _fmt(rep.ratio),
             rep.status.replace(",", ";")]
    return ",".join(cells)


SWEEP_HEADER = ("eps,lambda_re,lambda_im,term0,term1,term2,au_norm,"
                "lhs_total,lhs_alt_total,rhs,ratio,status")

PLOT_STUB = '''#!/usr/bin/env python3
"""Render the two-column .dat files next to this script (needs matplotlib)."""
import glob
import os
import sys

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("matplotlib is not installed; inspect the .dat files directly")

here = os.path.dirname(os.path.abspath(__file__))
fig, ax = plt.subplots()
for path in sorted(glob.glob(os.path.join(here, "*.dat"))):
    xs, ys = [], []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            a, b = line.split()
            xs.append(float(a))
            ys.append(float(b))
    ax.plot(xs, ys, marker="o", label=os.path.basename(path))
if any(ax.lines):
    ax.set_xscale("log")
    ax.set_yscale("log")
ax.legend()
out = os.path.join(here, "plots.png")
fig.savefig(out, dpi=150)
print(out)
'''


# ------------------------------------------------------------------ modes


def _run_solve(cfg: Config, preset: str, out: Path, header: str,
               name: str, chash: str) -> int:
    spec = _build_spec(cfg, preset,
                       eps=cfg.getfloat("solve", "eps",
                                        cfg.getfloat("scenario", "eps", 0.1)),
                       lam=cfg.getcomplex("solve", "lambda",
                                          cfg.getcomplex("scenario", "lambda", 1.0)))
    u = full_solve(spec)
    rep = coercive_report(spec, u, p=cfg.getfloat("scenario", "p", 2.0))
    cols = ["t"]
    for j in range(u.n):
        cols += [f"u{j}_re", f"u{j}_im"]
    rows = []
    for i, t in enumerate(u.t):
        cells = [_fmt(t)]
        for j in range(u.n):
            cells += [_fmt(u.values[i, j].real), _fmt(u.values[i, j].imag)]
        rows.append(",".join(cells))
    _write(out / "solution.csv", header, [",".join(cols)] + rows)
    weights = spec.pair.weights()
    norms = u.e_norms(weights)
    _write(out / "solution.dat", header,
           [f"{_fmt(t)} {_fmt(v)}" for t, v in zip(u.t, norms)])
    _write(out / "estimate.csv", header, [SWEEP_HEADER, _report_row(rep)])
    _write_json(out / "summary.json", {
        "scenario": name, "config_hash": chash, "mode": "solve",
        "preset": preset, "path": u.meta.get("path"),
        "eps": spec.eps, "lambda": spec.lam,
        "ratio": rep.ratio, "lhs_total": rep.lhs_total, "rhs": rep.rhs})
    (out / "plot.py").write_text(PLOT_STUB)
    return 0


def _run_sweep(cfg: Config, preset: str, out: Path, header: str,
               name: str, chash: str, jobs: int) -> int:
    eps_list = cfg.getfloatlist("sweep", "eps_list", required=True)
    lam_list = cfg.getcomplexlist("sweep", "lambda_list", required=True)
    if not eps_list or not lam_list:
        raise ConfigError("[sweep] eps_list and lambda_list must be nonempty")
    p = cfg.getfloat("scenario", "p", 2.0)
    base = _build_spec(cfg, preset, eps=eps_list[0], lam=lam_list[0])
    reports = uniformity_sweep(base, eps_list, lam_list, p=p, jobs=jobs)
    _write(out / "sweep.csv", header,
           [SWEEP_HEADER] + [_report_row(r) for r in reports])
    factors = uniformity_factors(reports)
    for i, lam in enumerate(lam_list):
        rows = [f"{_fmt(r.eps)} {_fmt(r.ratio)}"
                for r in reports if r.lam == lam and r.status == "ok"]
        _write(out / f"sweep_lam{i}.dat", header, rows)
    _write_json(out / "summary.json", {
        "scenario": name, "config_hash": chash, "mode": "sweep",
        "preset": preset, "p": p,
        "n_cells": len(reports),
        "n_failed": sum(r.status != "ok" for r in reports),
        "uniformity": {f"{lam.real:g}{lam.imag:+g}j":
                       {"max_ratio": mx, "factor": fac}
                       for lam, (mx, fac) in factors.items()}})
    (out / "plot.py").write_text(PLOT_STUB)
    return 2 if any(r.status != "ok" for r in reports) else 0


def _run_converge(cfg: Config, preset: str, out: Path, header: str,
                  name: str, chash: str) -> int:
    eps_list = cfg.getfloatlist("convergence", "eps_list", required=True)
    base = _build_spec(cfg, preset, eps=eps_list[0],
                       lam=cfg.getcomplex("scenario", "lambda", 0.0))
    u0 = cfg.getvector("data", "u0", base.n, default=1.0)
    try:
        cauchy = CauchySpec(pair=base.pair, lam=0.0, T=base.T, u0=u0,
                            f=cfg.getexpr("data", "f0"), n_t=base.n_t)
        record = convergence_study(
            base, cauchy, eps_list,
            compact_delta=cfg.getfloat("convergence", "delta", 0.1 * base.T),
            p=cfg.getfloat("scenario", "p", 2.0),
            floor_factor=cfg.getfloat("convergence", "floor_factor", 5.0))
    except ValueError as exc:
        raise ConfigError(f"invalid convergence scenario: {exc}") from None
    rows = []
    for eps, xg, sg, ab in zip(record.eps_list, record.x_norm_gaps,
                               record.sup_norm_gaps, record.above_floor):
        rows.append(",".join([_fmt(eps), _fmt(xg), _fmt(sg),
                              _fmt(record.floor),
                              "true" if ab else "false"]))
    _write(out / "converge.csv", header, ["eps,x_gap,sup_gap,floor,above_floor"] + rows)
    _write(out / "converge.dat", header,
           [f"{_fmt(e)} {_fmt(g)}" for e, g in
            zip(record.eps_list, record.x_norm_gaps) if np.isfinite(g)])
    _write_json(out / "summary.json", {
        "scenario": name, "config_hash": chash, "mode": "converge",
        "preset": preset, "fitted_rate": record.fitted_rate,
        "floor": record.floor, "delta": record.delta,
        "statuses": list(record.statuses)})
    (out / "plot.py").write_text(PLOT_STUB)
    return 2 if any(s != "ok" for s in record.statuses) else 0


def _run_check(cfg: Config, preset: str, out: Path, header: str,
               name: str, chash: str) -> int:
    try:
        pair = make_pair(preset, check_positive=False, **(
            {"a": cfg.getfloat("operators", "a", 1.0),
             "b": cfg.getfloat("operators", "b", 0.5)} if preset == "scalar" else
            {"n_y": cfg.getint("grid", "n_y", 8),
             "a": cfg.getexpr("operators", "a", "1+2*y"),
             "b0": cfg.getfloat("operators", "b0", 0.3),
             "b1": cfg.getfloat("operators", "b1", 0.1)} if preset == "commuting" else
            {"n_y": cfg.getint("grid", "n_y", 16),
             "a": cfg.getexpr("operators", "a", "1+y"),
             "b": cfg.getexpr("operators", "b", "y"),
             "kernel": cfg.getexpr("operators", "kernel", "0.5*exp(-(y-tau)^2)")}))
    except (ValueError, ParseError) as exc:
        raise ConfigError(f"cannot build preset {preset!r}: {exc}") from None
    bc = _build_bc(cfg, pair.n)
    # constant-kernel direction of the dynamic-boundary operator: sample
    # the resolvent away from zero for that preset
    samples = ((1.0, 10.0, 100.0, 1000.0) if preset == "wentzell"
               else (0.0, 1.0, 10.0, 100.0, 1000.0))
    pos = check_positivity(pair.A, lam_samples=samples)
    c1 = check_condition_1(bc)
    c21 = check_condition_2_1(pair, bc=bc)
    grid = pair.grid or SpaceGrid.uniform_interior(4)
    if preset == "wentzell":
        coeffs = (cfg.getexpr("operators", "a", "1+y"),
                  cfg.getexpr("operators", "b", "y"),
                  cfg.getexpr("operators", "kernel", "0.5*exp(-(y-tau)^2)"))
    elif preset == "commuting":
        coeffs = (cfg.getexpr("operators", "a", "1+2*y"), 0.0, 0.0)
    else:
        coeffs = (cfg.getfloat("operators", "a", 1.0), 0.0, 0.0)
    c41 = check_condition_4_1(grid, *coeffs)
    payload = {
        "scenario": name, "config_hash": chash, "mode": "check",
        "preset": preset,
        "positivity": {"passed": pos.passed, "details": {
            "bound": pos.bound, "cap": pos.cap, "worst_lam": pos.worst_lam,
            "lam_samples": list(pos.lam_samples), "values": list(pos.values)}},
        "condition_1": {"passed": c1.passed, "details": c1.details},
        "condition_2_1": {"passed": c21.passed, "details": c21.details},
        "condition_4_1": {"passed": c41.passed, "details": c41.details},
    }
    _write_json(out / "report.json", payload)
    all_passed = all([pos.passed, c1.passed, c21.passed, c41.passed])
    return 0 if all_passed else 1


# ------------------------------------------------------------- entry point


def run(config_path, out_dir, mode: Optional[str] = None, jobs: int = 1,
        preset: Optional[str] = None, overrides: Sequence[str] = ()) -> int:
    cfg = load_config(config_path, overrides=overrides, preset=preset)
    mode = mode or cfg.raw("scenario", "mode")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    name = cfg.raw("scenario", "name", Path(config_path).stem)
    chash = config_hash(cfg, mode)
    header = f"# scenario={name} config_hash={chash}"
    chosen = cfg.raw("scenario", "preset", "scalar")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if mode == "solve":
        return _run_solve(cfg, chosen, out, header, name, chash)
    if mode == "sweep":
        return _run_sweep(cfg, chosen, out, header, name, chash, jobs)
    if mode == "converge":
        return _run_converge(cfg, chosen, out, header, name, chash)
    return _run_check(cfg, chosen, out, header, name, chash)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="epslab",
        description="Batch runner for singular-perturbation solver experiments.")
    parser.add_argument("mode", nargs="?", choices=MODES,
                        help="run mode (defaults to [scenario] mode in the config)")
    parser.add_argument("--config", required=True, help="scenario file (INI format)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker threads for sweep cells")
    parser.add_argument("--preset", choices=PRESET_NAMES,
                        help="override [scenario] preset")
    parser.add_argument("--override", action="append", default=[],
                        metavar="SECTION.KEY=VALUE",
                        help="override a config entry (repeatable)")
    args = parser.parse_args(argv)
    try:
        return run(args.config, args.out, mode=args.mode, jobs=args.jobs,
                   preset=args.preset, overrides=args.override)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
