"""Command line driver: simulate, classify, certify.

Exit codes: 0 success, 1 config or I/O error, 2 undecided classification,
3 certificate failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .certify import (AmbiguousArc, BallWindow, CertificateError, CertificateReport, Classification,
                      ClassifyConfig, auto_windows, classify, crossing_certificate,
                      divergence_crosscheck, flux_bound_certificate, normal_integral_check)
from .construct import (ConstructionTrace, SingletonSuspected, build_curve, run_construction)
from .field import BUILTIN_NAMES, Field, FieldError, builtin, parse_field
from .flow import TOL_RANGE, IntegrationError, Trajectory, integrate

EXIT_OK, EXIT_CONFIG, EXIT_UNDECIDED, EXIT_CERT = 0, 1, 2, 3

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["field", "x0"],
    "properties": {
        "field": {
            "oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["builtin"],
                 "properties": {"builtin": {"enum": list(BUILTIN_NAMES)},
                                "params": {"type": "object",
                                           "additionalProperties": {"type": "number"}}}},
                {"type": "object", "additionalProperties": False, "required": ["fx", "fy"],
                 "properties": {"fx": {"type": "string"}, "fy": {"type": "string"},
                                "name": {"type": "string"},
                                "params": {"type": "object",
                                           "additionalProperties": {"type": "number"}}}},
            ]
        },
        "x0": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "tolerances": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "minimum": TOL_RANGE[0], "maximum": TOL_RANGE[1]},
                "eps_t": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "eps_x": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "tol_eq": {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-3},
            },
        },
        "budgets": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "i_max": {"type": "integer", "minimum": 1, "maximum": 64},
                "t_max": {"type": "number", "exclusiveMinimum": 0},
                "T_pre": {"type": "number", "minimum": 0},
                "t_probe": {"type": "number", "exclusiveMinimum": 0},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "windows": {
            "oneOf": [
                {"type": "array", "items": {
                    "type": "object", "additionalProperties": False,
                    "required": ["center", "radius"],
                    "properties": {
                        "center": {"type": "array", "items": {"type": "number"},
                                   "minItems": 2, "maxItems": 2},
                        "radius": {"type": "number", "exclusiveMinimum": 0}}}},
                {"type": "object", "additionalProperties": False, "required": ["auto"],
                 "properties": {"auto": {
                     "type": "object", "additionalProperties": False,
                     "required": ["n", "r_range"],
                     "properties": {
                         "n": {"type": "integer", "minimum": 1, "maximum": 1000},
                         "r_range": {"type": "array", "items": {"type": "number",
                                                                "exclusiveMinimum": 0},
                                     "minItems": 2, "maxItems": 2}}}}},
            ]
        },
        "radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                  "minItems": 1},
        "retries": {"type": "integer", "minimum": 0, "maximum": 100},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "report": {"type": "object", "additionalProperties": False,
                   "properties": {"timing": {"type": "boolean"}}},
    },
}

TRACE_SCHEMA = {
    "type": "object",
    "required": ["format", "field", "fingerprint", "x0", "D", "delta", "t_hit", "s_meet",
                 "status", "curves", "trajectory"],
    "properties": {
        "format": {"const": "planarmin-trace/1"},
        "fingerprint": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "x0": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "D": {"type": "number", "exclusiveMinimum": 0},
        "delta": {"type": "array", "items": {"type": "number"}},
        "t_hit": {"type": "array", "items": {"type": "number"}},
        "s_meet": {"type": "array", "items": {"type": "number"}},
        "status": {"type": "string"},
        "curves": {"type": "array", "items": {
            "type": "object", "required": ["s", "t", "orientation", "vertices"],
            "properties": {"vertices": {"type": "array", "minItems": 3, "items": {
                "type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}}}}},
        "trajectory": {"type": "object", "required": ["tol", "x0", "t", "y", "f", "q"]},
    },
}


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    field: Field
    x0: tuple[float, float]
    classify: ClassifyConfig
    t_end: float = 100.0
    windows: list = dc_field(default_factory=list)     # [(center, radius)]
    auto: Optional[tuple[int, tuple[float, float]]] = None
    retries: int = 5
    seed: Optional[int] = None
    timing: bool = False
    echo: dict = dc_field(default_factory=dict)


def _where(err: jsonschema.ValidationError) -> str:
    path = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
    return "$" + path


def load_json(path: Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def validate(doc: dict, schema: dict, label: str) -> None:
    v = jsonschema.Draft202012Validator(schema)
    errors = sorted(v.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = jsonschema.exceptions.best_match(errors)
        raise ConfigError(f"{label}: {_where(e)}: {e.message}")


def make_field(desc: dict) -> Field:
    try:
        if "builtin" in desc:
            return builtin(desc["builtin"], **desc.get("params", {}))
        return parse_field(desc["fx"], desc["fy"], desc.get("params"), desc.get("name", "custom"))
    except FieldError as exc:
        raise ConfigError(f"config: $.field: {exc}") from None


def parse_config(doc: dict, seed: Optional[int] = None) -> RunConfig:
    validate(doc, CONFIG_SCHEMA, "config")
    if seed is not None:
        doc = {**doc, "seed": seed}
    tols = doc.get("tolerances", {})
    buds = doc.get("budgets", {})
    cc = ClassifyConfig()
    for k in ("tol", "eps_t", "eps_x", "tol_eq"):
        if k in tols:
            setattr(cc, k, float(tols[k]))
    for k in ("i_max", "t_max", "T_pre", "t_probe"):
        if k in buds:
            setattr(cc, k, buds[k])
    if "radii" in doc:
        radii = tuple(float(r) for r in doc["radii"])
        if any(b >= a for a, b in zip(radii, radii[1:])):
            raise ConfigError("config: $.radii: must be strictly decreasing")
        cc.radii = radii
    cfg = RunConfig(make_field(doc["field"]), tuple(doc["x0"]), cc,
                    t_end=float(buds.get("t_end", 100.0)), retries=doc.get("retries", 5),
                    seed=doc.get("seed"), timing=doc.get("report", {}).get("timing", False),
                    echo=doc)
    w = doc.get("windows")
    if isinstance(w, list):
        cfg.windows = [(tuple(e["center"]), float(e["radius"])) for e in w]
    elif isinstance(w, dict):
        lo, hi = w["auto"]["r_range"]
        if not lo <= hi:
            raise ConfigError("config: $.windows.auto.r_range: lower bound exceeds upper")
        cfg.auto = (w["auto"]["n"], (float(lo), float(hi)))
    needs_seed = cfg.auto is not None or (cfg.windows and cfg.retries > 0)
    if needs_seed and cfg.seed is None:
        raise ConfigError("config: $.seed: required with auto windows or perturbation retries")
    cc.seed = cfg.seed or 0
    return cfg


# -- output -------------------------------------------------------------------

def dump_json(obj, path: Path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n")


def portrait_svg(traj: Trajectory, balls=(), windows=(), size: int = 600) -> ET.Element:
    """Phase portrait with separately styled groups: trajectory, balls, windows."""
    _, Y, _ = traj.knots()
    lo = Y.min(axis=0)
    hi = Y.max(axis=0)
    for (cx, cy), r in list(balls) + list(windows):
        lo = np.minimum(lo, (cx - r, cy - r))
        hi = np.maximum(hi, (cx + r, cy + r))
    span = max(float((hi - lo).max()), 1e-9)
    pad = 0.05 * span
    x0, y0 = lo[0] - pad, -(hi[1] + pad)
    w, h = float(hi[0] - lo[0]) + 2 * pad, float(hi[1] - lo[1]) + 2 * pad
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(size),
                     height=str(round(size * h / w)), viewBox=f"{x0:.6g} {y0:.6g} {w:.6g} {h:.6g}")
    stroke = f"{span / 400:.4g}"
    root = ET.SubElement(svg, "g", transform="scale(1,-1)")
    g = ET.SubElement(root, "g", id="trajectory", fill="none", stroke="#1f4e99")
    g.set("stroke-width", stroke)
    step = max(1, len(Y) // 20000)
    pts = " ".join(f"{x:.6g},{y:.6g}" for x, y in Y[::step])
    ET.SubElement(g, "polyline", points=pts)
    for gid, colour, items in (("balls", "#c0392b", balls), ("windows", "#27ae60", windows)):
        grp = ET.SubElement(root, "g", id=gid, fill="none", stroke=colour)
        grp.set("stroke-width", stroke)
        for (cx, cy), r in items:
            ET.SubElement(grp, "circle", cx=f"{cx:.9g}", cy=f"{cy:.9g}", r=f"{r:.9g}")
    return svg


def write_svg(svg: ET.Element, path: Path) -> None:
    ET.ElementTree(svg).write(path, encoding="utf-8", xml_declaration=True)


def trace_document(f: Field, trace: ConstructionTrace) -> dict:
    doc = trace.to_dict(include_trajectory=True)
    doc.update(format="planarmin-trace/1", field=f.describe(), fingerprint=f.fingerprint())
    return doc


def load_trace(path: Path, f: Field) -> ConstructionTrace:
    doc = load_json(path)
    validate(doc, TRACE_SCHEMA, f"trace {path}")
    if doc["fingerprint"] != f.fingerprint():
        raise ConfigError(f"trace {path}: stale trace, recorded for a different field "
                          f"({doc['field'].get('name', '?')})")
    try:
        traj = Trajectory.from_dict(f, doc["trajectory"])
        return ConstructionTrace.from_dict(doc, traj)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"trace {path}: {exc}") from None


# -- certificates ---------------------------------------------------------------

def resolve_windows(cfg: RunConfig, trace: ConstructionTrace, period: Optional[float]) -> list[BallWindow]:
    if cfg.auto is not None:
        n, r_range = cfg.auto
        return auto_windows(trace, trace.trajectory, n, r_range, seed=cfg.seed, period=period)
    out = []
    for k, (c, r) in enumerate(cfg.windows):
        w = BallWindow.make(c, r, trace.x0, trace.D)
        if not w.separation_ok:
            raise ConfigError(f"config: $.windows[{k}]: violates |y0 - x0| > 2D = {2 * trace.D:.6g} "
                              f"or r0 < D")
        out.append(w)
    return out


def _failed(kind: str, exc: Exception, ctx: dict) -> CertificateReport:
    return CertificateReport(kind, False, {"error": f"{type(exc).__name__}: {exc}"}, 0.0, ctx)


def run_certificates(cfg: RunConfig, trace: ConstructionTrace,
                     windows: list[BallWindow]) -> list[CertificateReport]:
    traj = trace.trajectory
    reports: list[CertificateReport] = []
    for i, curve in enumerate(trace.curves, start=1):
        reports.append(normal_integral_check(curve, {"stage": i}))
    t_hi = trace.t_hit[-1] if trace.t_hit else 0.0
    for k, w in enumerate(windows):
        base = {"window_index": k, "seed": cfg.seed}
        try:
            reports.append(flux_bound_certificate(trace, traj, w, {**base, "stage": "all"}))
        except CertificateError as exc:
            reports.append(_failed("flux_bound", exc, {**base, "window": w.to_dict()}))
        reports.append(crossing_certificate(traj, w, t_hi, cfg.retries, cfg.seed or 0,
                                            {**base, "stage": trace.stages}))
        for i, curve in enumerate(trace.curves, start=1):
            ctx = {**base, "stage": i}
            try:
                reports.append(divergence_crosscheck(curve, w, traj, context=ctx))
            except AmbiguousArc:
                # one retry on a finer polyline before refusing
                fine = build_curve(traj, curve.s, curve.t, len_hint(curve) / 4, curve.chord_fallback)
                try:
                    reports.append(divergence_crosscheck(fine, w, traj, context={**ctx, "refined": True}))
                except CertificateError as exc:
                    reports.append(_failed("divergence_crosscheck", exc, {**ctx, "window": w.to_dict()}))
            except CertificateError as exc:
                reports.append(_failed("divergence_crosscheck", exc, {**ctx, "window": w.to_dict()}))
    return reports


def len_hint(curve) -> float:
    e = np.diff(curve.polyline.vertices, axis=0)
    return float(np.hypot(e[:, 0], e[:, 1]).max())


def trace_summary(trace: Optional[ConstructionTrace]) -> Optional[dict]:
    if trace is None:
        return None
    return {"x0": [trace.x0.x, trace.x0.y], "D": trace.D, "delta": trace.delta,
            "t_hit": trace.t_hit, "s_meet": trace.s_meet, "status": trace.status_string(),
            "stages": trace.stages, "t_star": trace.t_star,
            "curves_simple": [c.is_simple() for c in trace.curves]}


# -- commands -----------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    traj = integrate(cfg.field, cfg.x0, cfg.t_end, cfg.classify.tol)
    balls = []
    windows = [(c, r) for c, r in cfg.windows]
    try:
        trace = run_construction(cfg.field, cfg.x0, cfg.classify.i_max, cfg.t_end,
                                 tol=cfg.classify.tol, t_probe=min(cfg.classify.t_probe, cfg.t_end),
                                 traj=traj)
        balls = [((trace.x0.x, trace.x0.y), d) for d in trace.delta]
        if cfg.auto is not None and trace.t_hit:
            windows = [((w.circle.center.x, w.circle.center.y), w.circle.radius)
                       for w in resolve_windows(cfg, trace, trace.t_star)]
    except (SingletonSuspected, IntegrationError):
        pass
    # the construction may have extended the trajectory past t_end
    shown = integrate(cfg.field, cfg.x0, cfg.t_end, cfg.classify.tol)
    shown.to_csv(out / "trajectory.csv")
    write_svg(portrait_svg(shown, balls, windows), out / "portrait.svg")
    return EXIT_OK


def _report(cfg: RunConfig, command: str, result: Optional[Classification],
            trace: Optional[ConstructionTrace], certs: list[CertificateReport], started: float) -> dict:
    rep = {"command": command, "config": cfg.echo, "seed": cfg.seed,
           "field": {**cfg.field.describe(), "fingerprint": cfg.field.fingerprint()},
           "classification": result.to_dict() if result else None,
           "trace": trace_summary(trace),
           "certificates": [c.to_dict() for c in certs],
           "all_pass": all(c.passed for c in certs)}
    if cfg.timing:
        rep["timing"] = {"seconds": time.perf_counter() - started}
    return rep


def cmd_classify(cfg: RunConfig, out: Path) -> int:
    started = time.perf_counter()
    result = classify(cfg.field, cfg.x0, cfg.classify)
    certs: list[CertificateReport] = []
    trace = result.trace
    if result.certificate is not None:
        certs.append(result.certificate)
    if result.kind == "periodic_orbit":
        windows = resolve_windows(cfg, trace, result.period)
        certs.extend(run_certificates(cfg, trace, windows))
    if trace is not None and trace.trajectory is not None:
        dump_json(trace_document(cfg.field, trace), out / "trace.json")
    dump_json(_report(cfg, "classify", result, trace, certs, started), out / "report.json")
    if result.kind == "undecided":
        return EXIT_UNDECIDED
    return EXIT_OK if all(c.passed for c in certs) else EXIT_CERT


def cmd_certify(cfg: RunConfig, trace_path: Path, out: Path) -> int:
    started = time.perf_counter()
    trace = load_trace(trace_path, cfg.field)
    windows = resolve_windows(cfg, trace, trace.t_star)
    certs = run_certificates(cfg, trace, windows)
    dump_json(_report(cfg, "certify", None, trace, certs, started), out / "report.json")
    return EXIT_OK if all(c.passed for c in certs) else EXIT_CERT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="planarmin", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("simulate", "integrate and write trajectory.csv, portrait.svg"),
                       ("classify", "classify the minimal set reached from x0"),
                       ("certify", "re-run certificates on a stored trace")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=Path("."))
        sp.add_argument("--seed", type=int, default=None)
        if name == "certify":
            sp.add_argument("--trace", required=True, type=Path)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = parse_config(load_json(args.config), args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out)
        if args.command == "classify":
            return cmd_classify(cfg, args.out)
        return cmd_certify(cfg, args.trace, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"error: integration failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
