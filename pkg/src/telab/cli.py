"""Command-line front end: ``telab run`` and ``telab validate``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import __version__
from .calibrations import build_h_phi, inputs_for, pde_lower_bound, poly_coeffs, verify_poly_bounds
from .currents import (CrossTie, DivergentMassError, SegmentCurrent, SymPair, current_from_descriptor,
                       mass, optimize_scalar_param, upper_bound_energy)
from .curves import CurveOpts, CurveProblem, mass_lower_bound
from .functionals import f_calib, f_star, g_quad, legendre_oracle, sigma_opt
from .lp_solver import LpOpts, concentration_rows, grid_for, sweep_p
from .potentials import SegmentSpec, from_descriptor, segment_energy

log = logging.getLogger("telab")

EXIT_OK, EXIT_INPUT, EXIT_SANDWICH = 0, 1, 2
KINDS = ("lower", "upper", "exact-1D", "estimate")

_point = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_matrix = {"type": "array", "items": _point, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA: dict = {
    "type": "object",
    "required": ["potential", "segment", "tasks"],
    "additionalProperties": False,
    "properties": {
        "potential": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["aviles_giga", "power_annulus", "beta_degenerate", "constant", "user_grid"]},
                "params": {"type": "object"},
                "p_bar": {"type": "number", "minimum": 0},
            },
        },
        "segment": {
            "type": "object",
            "required": ["a_minus", "a_plus"],
            "additionalProperties": False,
            "properties": {"a_minus": _point, "a_plus": _point},
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "quad": {"type": "number", "exclusiveMinimum": 0},
                "compare": {"type": "number", "minimum": 0},
            },
        },
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "tasks": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["type"],
                "properties": {
                    "type": {"enum": ["functionals", "segment", "poly", "pde-check", "mass", "lp",
                                      "curve", "compare"]},
                    "matrices": {"type": "array", "items": _matrix},
                    "oracle_samples": {"type": "integer", "minimum": 100},
                    "n": {"type": "integer", "minimum": 0},
                    "grid_radius": {"type": "number", "exclusiveMinimum": 0},
                    "grid_n": {"type": "integer", "minimum": 2},
                    "variants": {"type": "array", "items": {"type": "object"}},
                    "grid": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "R": {"type": "number", "exclusiveMinimum": 0},
                            "nx": {"type": "integer", "minimum": 2},
                            "ny": {"type": "integer", "minimum": 2},
                        },
                    },
                    "k_reg": {"type": "number", "minimum": 1},
                    "p_list": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 2},
                               "minItems": 1},
                    "V_sigma": {"type": "number", "exclusiveMinimum": 0},
                    "n_vertices": {"type": "integer", "minimum": 2},
                    "opts": {"type": "object"},
                    "rows": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["method", "kind", "value"],
                            "properties": {
                                "method": {"type": "string"},
                                "kind": {"enum": list(KINDS)},
                                "value": {"type": "number"},
                                "tol": {"type": "number", "minimum": 0},
                            },
                        },
                    },
                },
            },
        },
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class CompareRow:
    method: str
    kind: str
    value: float
    tol: float
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown bound kind {self.kind!r}")


@dataclass
class RunConfig:
    raw: dict
    potential: Any
    segment: SegmentSpec
    tasks: list[dict]
    quad_tol: float = 1e-12
    compare_tol: float = 1e-6
    output_dir: str = "telab_out"
    seed: int = 0


def _path(err: jsonschema.ValidationError) -> str:
    parts = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
    return "$" + parts


def load_config(path: str | Path, seed: int | None = None, out: str | None = None) -> RunConfig:
    """Parse and validate a config file; raises ConfigError with a field path."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config: {e}") from e
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError("; ".join(f"{_path(e)}: {e.message}" for e in errors))
    seg = raw["segment"]
    for name in ("a_minus", "a_plus"):
        if not all(math.isfinite(v) for v in seg[name]):
            raise ConfigError(f"$.segment.{name}: coordinates must be finite")
    try:
        pot = from_descriptor(raw["potential"])
        S = SegmentSpec(tuple(seg["a_minus"]), tuple(seg["a_plus"]))
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"$.potential/$.segment: {e}") from e
    tol = raw.get("tolerances", {})
    cfg = RunConfig(raw, pot, S, raw["tasks"], float(tol.get("quad", 1e-12)),
                    float(tol.get("compare", 1e-6)), out or raw.get("output_dir", "telab_out"),
                    int(seed if seed is not None else raw.get("seed", 0)))
    for i, t in enumerate(cfg.tasks):
        if t["type"] == "lp":
            g = t.get("grid", {})
            try:
                grid_for(S, g.get("nx", 64), g.get("ny", 64), g.get("R"))
            except ValueError as e:
                raise ConfigError(f"$.tasks[{i}].grid: {e}") from e
    return cfg


# -- tasks ----------------------------------------------------------------------


def _f(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


def _task_functionals(cfg: RunConfig, t: dict, ctx: dict) -> dict:
    out = []
    n_samples = int(t.get("oracle_samples", 0))
    for M in t.get("matrices", []):
        M = np.asarray(M, float)
        s0, gv = sigma_opt(M) if np.any(M) else (None, 0.0)
        rec = {"M": M.tolist(), "f": _f(f_calib(M)), "g": _f(g_quad(M)), "f_star": _f(f_star(M)),
               "sigma_opt": {"s0": s0, "g": _f(gv)}}
        if n_samples:
            o = legendre_oracle(f_calib, M, samples=n_samples, seed=cfg.seed)
            rec["oracle"] = {"value": _f(o.value), "divergent": bool(o.divergent)}
        out.append(rec)
    return {"matrices": out}


def _task_segment(cfg: RunConfig, t: dict, ctx: dict) -> dict:
    E = segment_energy(cfg.potential, cfg.segment, cfg.quad_tol)
    ctx["rows"].append(CompareRow("segment-1D", "exact-1D", E, cfg.quad_tol))
    return {"energy": E}


def _task_poly(cfg: RunConfig, t: dict, ctx: dict) -> dict:
    PC = poly_coeffs(int(t.get("n", 0)))
    rep = verify_poly_bounds(PC, float(t.get("grid_radius", 3.0)), int(t.get("grid_n", 256)))
    return {"n": PC.n, "coeffs": [str(c) for c in PC.coeffs], "b": [str(b) for b in PC.b],
            "violations": len(rep["violations"]), "slack_min": rep["slack_min"],
            "axis_slack_max": rep["axis_slack_max"]}


def _pde_data(cfg: RunConfig, ctx: dict):
    if "pde" not in ctx:
        ctx["pde"] = build_h_phi(inputs_for(cfg.potential), cfg.segment, potential=cfg.potential)
    return ctx["pde"]


def _task_pde(cfg: RunConfig, t: dict, ctx: dict) -> dict:
    D = _pde_data(cfg, ctx)
    lb = pde_lower_bound(D, cfg.segment, cfg.quad_tol)
    ctx["rows"].append(CompareRow("pde-lower", "lower", lb, 1e-8, {"label": D.inputs.label}))
    return {"lower_bound": lb, "report": D.report()}


def _task_mass(cfg: RunConfig, t: dict, ctx: dict) -> dict:
    out = []
    for desc in t.get("variants", [{"variant": "segment"}]):
        kind = desc.get("variant")
        if desc.get("optimize"):
            br = tuple(desc.get("bracket", (1e-3, 1.0)))
            r = optimize_scalar_param(kind, cfg.potential, br, float(desc.get("tol", 1e-6)), S=cfg.segment)
            val = 2.0 * r.mass
            rec = {"variant": kind, "optimized": True, "param": r.param, "mass": r.mass,
                   "flags": list(r.flags)}
            ctx["rows"].append(CompareRow(f"2x{kind}*", "upper", val, 1e-8, {"param": r.param}))
            out.append(rec)
            continue
        try:
            C = current_from_descriptor(desc, cfg.segment)
            m = mass(C, cfg.potential, cfg.quad_tol * 10)
        except DivergentMassError as e:
            out.append({"variant": kind, "divergent": True, "partial_sums": e.partial_sums})
            continue
        rec = {"variant": kind, "mass": m}
        name = "2xT0" if isinstance(C, SegmentCurrent) else f"2x{kind}"
        if isinstance(C, SymPair):
            ctx["rows"].append(CompareRow(name, "estimate", 2 * m, 1e-8, {"reason": "no construction"}))
        else:
            ub = upper_bound_energy(C, cfg.potential, cfg.quad_tol * 10)
            rec["upper_bound"] = ub
            ctx["rows"].append(CompareRow(name, "upper", ub, 1e-8))
        out.append(rec)
    return {"variants": out}


def _task_lp(cfg: RunConfig, t: dict, ctx: dict) -> dict:
    g = t.get("grid", {})
    G = grid_for(cfg.segment, int(g.get("nx", 64)), int(g.get("ny", 64)), g.get("R"))
    o = dict(t.get("opts", {}))
    o["workers"] = int(ctx.get("workers", o.get("workers", 1)))
    vs = t.get("V_sigma")
    opts = LpOpts(V_sigma=None if vs is None else float(vs), **o)
    k_reg = float(t.get("k_reg", 1e4))
    sw = sweep_p(G, cfg.potential, k_reg, t.get("p_list", [4, 8, 16, 32]), opts)
    ctx["lp_run"] = sw.runs[-1]
    ctx["rows"].append(CompareRow("lp-eta0", "estimate", sw.eta0, 0.0,
                                  {"non_converged": sw.non_converged}))
    return {"grid": {"R": G.R, "nx": G.nx, "ny": G.ny}, "k_reg": k_reg,
            "opts": {"max_iters": opts.max_iters, "grad_tol": opts.grad_tol, "method": opts.method,
                     "V_sigma": sw.runs[-1].V_sigma},
            **sw.summary()}


def _task_curve(cfg: RunConfig, t: dict, ctx: dict) -> dict:
    D = _pde_data(cfg, ctx)
    o = dict(t.get("opts", {}))
    o.setdefault("seed", cfg.seed)
    o["workers"] = int(ctx.get("workers", o.get("workers", 1)))
    res = mass_lower_bound(CurveProblem(cfg.potential, D, cfg.segment), int(t.get("n_vertices", 9)),
                           CurveOpts(**o))
    ctx["curve"] = res["gamma"]
    kind = "lower" if res["status"] == "homotopy-convex" else "estimate"
    ctx["rows"].append(CompareRow("curve-Z*", kind, 2 * res["value"], 1e-8, {"status": res["status"]}))
    return res


def _task_compare(cfg: RunConfig, t: dict, ctx: dict) -> dict:
    for r in t.get("rows", []):
        ctx["rows"].append(CompareRow(r["method"], r["kind"], float(r["value"]), float(r.get("tol", 0.0)),
                                      {"user": True}))
    return {"rows_added": len(t.get("rows", []))}


TASKS = {"functionals": _task_functionals, "segment": _task_segment, "poly": _task_poly,
         "pde-check": _task_pde, "mass": _task_mass, "lp": _task_lp, "curve": _task_curve,
         "compare": _task_compare}


def sandwich_violations(rows: list[CompareRow], tol: float) -> list[tuple[str, str, float]]:
    """Pairs (lower, upper) with lower > upper beyond the combined tolerances.

    Exact 1D energies are attained by a construction, so they count as upper
    bounds here; ``estimate`` rows are reported but never checked.
    """
    lows = [r for r in rows if r.kind == "lower"]
    ups = [r for r in rows if r.kind in ("upper", "exact-1D")]
    bad = []
    for lo in lows:
        for up in ups:
            gap = lo.value - up.value
            if gap > lo.tol + up.tol + tol * max(1.0, abs(up.value)):
                bad.append((lo.method, up.method, gap))
    return bad


# -- output ---------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(x, ".17g")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
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
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    return obj


def _iter17(o, indent: int = 1, level: int = 0):
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(o, float):
        yield _fmt(o)
    elif isinstance(o, dict):
        if not o:
            yield "{}"
            return
        yield "{"
        for i, (k, v) in enumerate(o.items()):
            yield ("," if i else "") + pad + json.dumps(k) + ": "
            yield from _iter17(v, indent, level + 1)
        yield end + "}"
    elif isinstance(o, list):
        if not o:
            yield "[]"
            return
        if not any(isinstance(v, (dict, list)) for v in o):
            yield "[" + ", ".join(_fmt(v) if isinstance(v, float) else json.dumps(v) for v in o) + "]"
            return
        yield "["
        for i, v in enumerate(o):
            yield ("," if i else "") + pad
            yield from _iter17(v, indent, level + 1)
        yield end + "]"
    else:
        yield json.dumps(o)


def dumps17(obj) -> str:
    """JSON text with every float written to 17 significant digits."""
    return "".join(_iter17(_clean(obj))) + "\n"


def write_outputs(out_dir: Path, results: dict, rows: list[CompareRow], ctx: dict) -> list[str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    (out_dir / "results.json").write_text(dumps17(results))
    written.append("results.json")
    with open(out_dir / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "kind", "value", "tol"])
        for r in rows:
            w.writerow([r.method, r.kind, _fmt(r.value), _fmt(r.tol)])
    written.append("compare.csv")
    written += emit_plot_data(out_dir, ctx)
    return written


def emit_plot_data(out_dir: Path, ctx: dict) -> list[str]:
    """concentration.csv (x,y,weight) and curve.csv (t,x,y) when available."""
    written = []
    if "lp_run" in ctx:
        with open(out_dir / "concentration.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "weight"])
            for x, y, m in concentration_rows(ctx["lp_run"]):
                w.writerow([_fmt(x), _fmt(y), _fmt(m)])
        written.append("concentration.csv")
    if "curve" in ctx:
        v = np.asarray(ctx["curve"], float)
        seg = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(v, axis=0), axis=1))]
        t = seg / seg[-1] if seg[-1] > 0 else seg
        with open(out_dir / "curve.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "y"])
            for ti, (x, y) in zip(t, v):
                w.writerow([_fmt(ti), _fmt(x), _fmt(y)])
        written.append("curve.csv")
    if not written:
        log.warning("no concentration or curve data: plot files not written")
    return written


# -- entry points ------------------------------------------------------------------


def run(config_path: str | Path, out: str | None = None, seed: int | None = None,
        workers: int = 1) -> int:
    try:
        cfg = load_config(config_path, seed, out)
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_INPUT
    ctx: dict = {"rows": [], "workers": workers}
    task_out = []
    for i, t in enumerate(cfg.tasks):
        try:
            res = TASKS[t["type"]](cfg, t, ctx)
        except (ValueError, TypeError, KeyError) as e:
            log.error("$.tasks[%d] (%s): %s", i, t["type"], e)
            return EXIT_INPUT
        task_out.append({"type": t["type"], "result": res})
    rows = ctx["rows"]
    bad = sandwich_violations(rows, cfg.compare_tol)
    results = {
        "telab_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "seed": cfg.seed,
        "config": cfg.raw,
        "potential": cfg.potential.metadata(),
        "tasks": task_out,
        "compare": [{"method": r.method, "kind": r.kind, "value": r.value, "tol": r.tol, "flags": r.flags}
                    for r in rows],
        "sandwich": {"ok": not bad, "violations": [list(b) for b in bad]},
    }
    written = write_outputs(Path(cfg.output_dir), results, rows, ctx)
    log.info("wrote %s to %s", ", ".join(written), cfg.output_dir)
    if bad:
        for lo, up, gap in bad:
            log.error("sandwich violated: %s exceeds %s by %.3e", lo, up, gap)
        return EXIT_SANDWICH
    return EXIT_OK


def validate(config_path: str | Path) -> int:
    try:
        load_config(config_path)
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_INPUT
    print("config OK")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="telab", description="Bounds for transition-layer energies.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="execute the tasks of a config file")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="output directory (overrides the config)")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--workers", type=int, default=1, help="threads for lp and curve tasks")
    v = sub.add_parser("validate", help="check a config file against the schema")
    v.add_argument("config")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.cmd == "run":
        return run(args.config, args.out, args.seed, args.workers)
    return validate(args.config)


if __name__ == "__main__":
    sys.exit(main())
