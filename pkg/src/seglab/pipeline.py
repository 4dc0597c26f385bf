"""Experiment configs, stage execution and run reports."""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import jsonschema
import numpy as np

from . import __version__
from . import io as sio
from .almgren import average, frequency_profile, monotonicity_check
from .blowup import classify_trace, frame_sequence, homogeneity_residual, make_frame, scaling_identity_check, spherical_trace
from .exceptions import ConfigInvalid, EmptyNodalSet, SeglabError
from .grid import Grid2D
from .nodal import classify_points, default_r_max, equal_angle_check, extract_nodal_set, flatness_scan, reflection_check
from .partition import balance_scales, disk_mask, optimize_partition, partition_to_config
from .segregated import Reaction, ReactionSpec, SegregatedConfig
from .solver import (
    BoundarySpec,
    CompetitionProblem,
    beta_continuation,
    class_s_check,
    make_prototype,
)

CONFIG_VERSION = 1
KINDS = ("gp", "lv", "prototype", "partition", "diagnose", "blowup", "validate")

TOLERANCE_PROFILES = {
    "default": {
        "n0_regular": 0.15,
        "reflection": 0.10,
        "angle_deg": 5.0,
        "c_tilde_max": 10.0,
        "monotone_slack": 1e-2,
        "overlap_reduction": 1e-3,
        "eps_seg": 1e-3,
        "spread": 0.05,
        "relaxed_gap": 0.02,
        "frame_norm": 1e-3,
    },
    "strict": {
        "n0_regular": 0.05,
        "reflection": 0.02,
        "angle_deg": 3.0,
        "c_tilde_max": 10.0,
        "monotone_slack": 1e-2,
        "overlap_reduction": 1e-3,
        "eps_seg": 1e-3,
        "spread": 0.02,
        "relaxed_gap": 0.02,
        "frame_norm": 1e-3,
    },
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_point = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_ladder = {"type": "array", "items": _pos, "minItems": 1}
_edges = {"type": "array", "items": {"enum": ["left", "right", "bottom", "top"]}, "minItems": 2}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


GRID_SCHEMA = _obj({"lo": _num, "hi": _num, "n": {"type": "integer", "minimum": 16}}, ["lo", "hi", "n"])
DIAGNOSE_SCHEMA = _obj(
    {
        "enabled": {"type": "boolean"},
        "centers": {"oneOf": [{"const": "auto"}, {"type": "array", "items": _point}]},
        "spacing": _pos,
        "boundary_margin": {"type": "number", "minimum": 0},
        "r_min_cells": {"type": "number", "minimum": 4},
        "r_max": {"oneOf": [_pos, {"type": "null"}]},
        "singular_exclusion_cells": {"type": "number", "minimum": 0},
        "min_regular_centers": {"type": "integer", "minimum": 0},
        "fields": {"type": "array", "items": {"type": "string"}, "minItems": 1},
    }
)
PARAM_SCHEMAS = {
    "gp": _obj(
        {
            "components": {"type": "integer", "minimum": 2},
            "lam": _num,
            "omega": _num,
            "edges": _edges,
            "amplitude": _pos,
            "beta_ladder": _ladder,
            "tol": _pos,
            "max_iters": {"type": "integer", "minimum": 1},
        },
        ["beta_ladder"],
    ),
    "lv": _obj(
        {
            "components": {"type": "integer", "minimum": 2},
            "rate": _pos,
            "capacity": _pos,
            "edges": _edges,
            "amplitude": _pos,
            "beta_ladder": _ladder,
            "tol": _pos,
            "max_iters": {"type": "integer", "minimum": 1},
        },
        ["beta_ladder"],
    ),
    "prototype": _obj(
        {
            "m": {"type": "integer", "minimum": 2},
            "assignment": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            "rotation": _num,
            "center": _point,
        },
        ["m"],
    ),
    "partition": _obj(
        {
            "parts": {"type": "integer", "minimum": 1},
            "p": {"oneOf": [{"type": "number", "minimum": 1}, {"const": "inf"}]},
            "domain": {"enum": ["square", "disk"]},
            "beta_ladder": _ladder,
            "n_starts": {"type": "integer", "minimum": 1},
            "max_iter": {"type": "integer", "minimum": 1},
            "tol": _pos,
        },
        ["parts", "p"],
    ),
    "diagnose": _obj({}),
    "blowup": _obj(
        {
            "m": {"type": "integer", "minimum": 2},
            "field": {"type": "string"},
            "x0": _point,
            "scales": _ladder,
        },
        ["x0", "scales"],
    ),
    "validate": _obj({"prototypes": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1}}),
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "kind": {"enum": list(KINDS)},
        "seed": {"type": "integer", "minimum": 0},
        "grid": GRID_SCHEMA,
        "params": {"type": "object"},
        "diagnose": DIAGNOSE_SCHEMA,
        "output": _obj({"format": {"enum": ["csv", "bin"]}}),
    },
    "required": ["version", "kind"],
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"kind": {"const": k}}}, "then": {"properties": {"params": PARAM_SCHEMAS[k]}}}
        for k in KINDS
    ]
    + [
        {"if": {"properties": {"kind": {"enum": ["gp", "lv", "prototype", "partition"]}}}, "then": {"required": ["grid"]}},
        {
            "if": {"properties": {"kind": {"const": "diagnose"}}},
            "then": {"required": ["diagnose"], "properties": {"diagnose": {"required": ["fields"]}}},
        },
    ],
}

DIAGNOSE_DEFAULTS = {
    "enabled": True,
    "centers": "auto",
    "spacing": 0.05,
    "boundary_margin": 0.15,
    "r_min_cells": 4,
    "r_max": None,
    "singular_exclusion_cells": 20,
    "min_regular_centers": 0,
}


def validate_config(cfg: dict) -> dict:
    """Schema-check a config (unknown keys are errors) and return it."""
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigInvalid(f"{where}: {e.message}") from None
    if cfg["kind"] == "blowup":
        p = cfg.get("params", {})
        if ("m" in p) == ("field" in p):
            raise ConfigInvalid("params: blowup needs exactly one of 'm' or 'field'")
        if "m" in p and "grid" not in cfg:
            raise ConfigInvalid("grid: required for a prototype blowup source")
    return cfg


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigInvalid(f"cannot read config {path}: {e}") from None
    return validate_config(cfg)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _grid(cfg) -> Grid2D:
    g = cfg["grid"]
    return Grid2D.square(float(g["lo"]), float(g["hi"]), int(g["n"]))


# ---------------------------------------------------------------------------
# run bookkeeping


@dataclass
class StageResult:
    name: str
    passed: bool
    seconds: float
    checks: Dict[str, bool] = field(default_factory=dict)
    error: Optional[str] = None


@dataclass
class RunReport:
    kind: str
    config_hash: str
    seed: Optional[int]
    stages: List[StageResult] = field(default_factory=list)
    files: List[str] = field(default_factory=list)
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.stages)

    def to_dict(self) -> dict:
        return {
            "tool": "seglab",
            "version": self.version,
            "kind": self.kind,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "passed": self.passed,
            "stages": [s.__dict__ for s in self.stages],
            "files": sorted(self.files),
        }


class Run:
    def __init__(self, cfg: dict, out: Path, tolerances: dict):
        self.cfg = cfg
        self.out = Path(out)
        self.tol = tolerances
        self.report = RunReport(cfg["kind"], config_hash(cfg), cfg.get("seed"))
        self.fmt = cfg.get("output", {}).get("format", "csv")

    def add(self, paths):
        for p in paths if isinstance(paths, (list, tuple)) else [paths]:
            self.report.files.append(str(Path(p).relative_to(self.out)))

    def stage(self, name: str, fn: Callable[[], Dict[str, bool]]):
        t = time.perf_counter()
        try:
            checks = fn() or {}
            res = StageResult(name, all(checks.values()), 0.0, {k: bool(v) for k, v in checks.items()})
        except SeglabError as e:
            res = StageResult(name, False, 0.0, error=f"{type(e).__name__}: {e}")
        except (ValueError, ArithmeticError, OSError) as e:
            res = StageResult(name, False, 0.0, error=f"{type(e).__name__}: {e}")
        res.seconds = time.perf_counter() - t
        self.report.stages.append(res)
        return res

    def finish(self) -> RunReport:
        path = self.out / "run_report.json"
        self.report.files.append("run_report.json")
        sio.write_json(path, self.report.to_dict())
        missing = [f for f in self.report.files if not (self.out / f).exists()]
        if missing:
            raise RuntimeError(f"report references missing files: {missing}")
        return self.report


# ---------------------------------------------------------------------------
# diagnostics


def auto_centers(U: SegregatedConfig, nodal, spacing: float, margin: float, exclusion: float):
    """Regular samples along the polylines and singular candidates, filtered by margins."""
    g = U.grid
    regular = []
    for p in nodal.sample(spacing):
        if g.distance_to_boundary(p) < margin:
            continue
        if len(nodal.singular_candidates) and nodal.distance_to_singular(p) < exclusion:
            continue
        regular.append(p)
    singular = [c for c in nodal.singular_candidates if g.distance_to_boundary(c) >= margin]
    return np.array(regular, float).reshape(-1, 2), np.array(singular, float).reshape(-1, 2)


def diagnose(U: SegregatedConfig, out: Path, settings: dict, tol: dict, fmt: str = "csv"):
    """Profiles, classifications, reflection and angle checks; returns (checks, files)."""
    s = dict(DIAGNOSE_DEFAULTS)
    s.update(settings or {})
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    h = U.grid.h
    try:
        nodal = extract_nodal_set(U)
    except EmptyNodalSet as e:
        files.append(sio.write_json(out / "diagnose.json", {"notice": f"EmptyNodalSet: {e}", "centers": []}))
        return {}, files
    files.append(sio.write_geojson(out / "nodal.geojson", nodal))
    if s["centers"] == "auto":
        regular, singular = auto_centers(U, nodal, s["spacing"], s["boundary_margin"], s["singular_exclusion_cells"] * h)
        requested = [(p, "auto") for p in regular] + [(p, "candidate") for p in singular]
    else:
        requested = [(np.asarray(p, float), "requested") for p in s["centers"]]
    entries = []
    checks = {}
    n_regular_ok = 0
    for k, (p, origin) in enumerate(requested):
        entry = {"index": k, "location": [float(p[0]), float(p[1])], "source": origin}
        try:
            cand = origin == "candidate"
            rlo = 4.0 * h if cand else s["r_min_cells"] * h
            rhi = default_r_max(U, p, nodal) if cand or s["r_max"] is None else s["r_max"]
            rep = classify_points(U, [p], nodal, r_min=rlo, r_max=rhi)[0]
            entry.update(rep.to_dict())
            prof = frequency_profile(U, rep.location, rlo, rhi, 16)
            mono_ok = bool(rep.violation <= tol["monotone_slack"] and rep.C_tilde <= tol["c_tilde_max"])
            files += sio.write_profile(out / "profiles" / f"center_{k:03d}", prof, None,
                                       {"monotone": mono_ok})
            entry["monotone_ok"] = mono_ok
            if rep.singular:
                entry["reflection_mismatch"] = None
                if rep.branch_count >= 3:
                    dev = equal_angle_check(rep)
                    entry["equal_angle_deviation"] = dev
                    checks[f"center_{k:03d}_equal_angles"] = dev <= math.radians(tol["angle_deg"])
                checks[f"center_{k:03d}_monotone"] = mono_ok
            else:
                rr = reflection_check(U, p, nodal=nodal)
                entry["reflection_mismatch"] = rr.mismatch
                ok = abs(rep.N0 - 1.0) <= tol["n0_regular"] and rr.mismatch <= tol["reflection"] and mono_ok
                checks[f"center_{k:03d}_regular"] = ok
                n_regular_ok += ok
        except (SeglabError, ValueError) as e:
            entry["error"] = f"{type(e).__name__}: {e}"
        entries.append(entry)
    if s["min_regular_centers"]:
        checks["enough_regular_centers"] = n_regular_ok >= s["min_regular_centers"]
    files.append(sio.write_json(out / "diagnose.json", {"centers": entries, "checks": checks,
                                                         "singular_candidates": nodal.singular_candidates}))
    return checks, files


# ---------------------------------------------------------------------------
# kinds


def _edges_bc(grid, p, components):
    edges = p.get("edges", ["left", "right", "bottom", "top"][:components])
    if len(edges) != components:
        raise ConfigInvalid("params/edges: need one edge per component")
    return BoundarySpec.edge_bumps(grid, edges, float(p.get("amplitude", 1.0)))


def _run_competition(run: Run, kind: str):
    cfg = run.cfg
    p = cfg.get("params", {})
    grid = _grid(cfg)
    comps = int(p.get("components", 2))
    bc = _edges_bc(grid, p, comps)
    amp = float(p.get("amplitude", 1.0))
    if kind == "gp":
        if float(p.get("omega", 0.0)) == 0.0 and float(p.get("lam", 0.0)) == 0.0:
            reaction = ReactionSpec.zero(comps)
        else:
            reaction = ReactionSpec.cubic([float(p.get("omega", 0.0))] * comps, [float(p.get("lam", 0.0))] * comps)
    else:
        reaction = ReactionSpec(tuple(Reaction.logistic(float(p.get("rate", 5.0)), float(p.get("capacity", amp)))
                                      for _ in range(comps)))
    ladder = [float(b) for b in p["beta_ladder"]]
    problem = CompetitionProblem(kind, reaction, ladder[0], bc, grid)
    state = {}

    def solve():
        res = beta_continuation(problem, ladder, tol=float(p.get("tol", 1e-6 * amp)), max_iters=int(p.get("max_iters", 100)))
        state["res"] = res
        for k, (c, r) in enumerate(res.steps):
            run.add(sio.write_config(run.out / "fields" / f"beta_{k:02d}", c, run.fmt, {"beta": r.beta}))
            run.add(sio.write_json(run.out / "reports" / f"solve_{k:02d}.json", r.to_dict()))
        ov = res.overlaps
        checks = {
            "overlap_decreasing": bool(np.all(np.diff(ov) < 0)),
            "overlap_reduction": bool(ov[-1] <= run.tol["overlap_reduction"] * ov[0]),
            "eps_seg": bool(res.eps_seg <= run.tol["eps_seg"]),
        }
        if kind == "lv":
            cs = class_s_check(res.final)
            run.add(sio.write_json(run.out / "reports" / "class_s.json", cs.__dict__ | {"passed": cs.passed}))
            checks["class_s"] = cs.passed
        return checks

    if not run.stage("solve", solve).passed:
        return
    d = dict(cfg.get("diagnose", {}))
    if kind == "gp":
        d.setdefault("r_min_cells", 12)
        d.setdefault("r_max", 0.12)
    enabled = d.pop("enabled", kind == "gp")
    if enabled:
        run.stage("diagnose", lambda: _diag(run, state["res"].final, d))


def _diag(run: Run, U, settings):
    checks, files = diagnose(U, run.out / "diagnose", settings, run.tol, run.fmt)
    run.add(files)
    return checks


def _run_prototype(run: Run):
    cfg = run.cfg
    p = cfg["params"]
    grid = _grid(cfg)
    state = {}

    def build():
        U = make_prototype(int(p["m"]), grid, p.get("assignment"), tuple(p.get("center", (0.0, 0.0))),
                           float(p.get("rotation", 0.0)))
        state["U"] = U
        run.add(sio.write_config(run.out / "fields" / "prototype", U, run.fmt))
        c = tuple(p.get("center", (0.0, 0.0)))
        rmax = min(0.3, grid.distance_to_boundary(c) - 3 * grid.h)
        prof = frequency_profile(U, c, 6 * grid.h, rmax, 24)
        mono = monotonicity_check(prof)
        target = int(p["m"]) / 2.0
        ok = bool(np.all(np.abs(prof.N - target) <= 0.05 * max(target, 1.0)))
        run.add(sio.write_profile(run.out / "profiles" / "center", prof, mono, {"homogeneous": ok, "monotone": mono.passed}))
        return {"center_frequency": ok, "center_monotone": mono.passed}

    if not run.stage("build", build).passed:
        return
    d = dict(cfg.get("diagnose", {}))
    if d.pop("enabled", True):
        run.stage("diagnose", lambda: _diag(run, state["U"], d))


def _run_partition(run: Run):
    cfg = run.cfg
    p = cfg["params"]
    grid = _grid(cfg)
    pv = math.inf if p["p"] == "inf" else float(p["p"])
    domain = disk_mask(grid) if p.get("domain", "square") == "disk" else None
    state = {}

    def optimize():
        kw = {k: p[k] for k in ("n_starts", "max_iter", "tol") if k in p}
        ladder = tuple(float(b) for b in p.get("beta_ladder", (1e3, 1e4, 1e5, 1e6)))
        P = optimize_partition(int(p["parts"]), pv, grid, ladder, int(cfg.get("seed", 0)), domain, **kw)
        state["P"] = P
        scales = balance_scales(P) if P.h_parts > 1 else np.ones(1)
        run.add(sio.write_partition(run.out / "partition", P, scales))
        lam = P.eigenvalues
        checks = {
            "relaxed_gap": bool(np.all(np.abs(lam - P.relaxed_eigenvalues) <= run.tol["relaxed_gap"] * lam)),
        }
        if math.isinf(pv) and P.h_parts > 1:
            checks["equilibrated"] = bool(lam.max() - lam.min() <= run.tol["spread"] * lam.max())
        if P.h_parts > 1:
            U = partition_to_config(P)
            state["U"] = U
            run.add(sio.write_config(run.out / "fields" / "partition", U, run.fmt))
            cs = class_s_check(U)
            run.add(sio.write_json(run.out / "reports" / "class_s.json", cs.__dict__ | {"passed": cs.passed}))
        return checks

    if not run.stage("optimize", optimize).passed or "U" not in state:
        return
    d = dict(cfg.get("diagnose", {}))
    if d.pop("enabled", False):
        run.stage("diagnose", lambda: _diag(run, state["U"], d))


def _run_diagnose(run: Run):
    d = dict(run.cfg["diagnose"])
    fields = d.pop("fields")
    d.pop("enabled", None)
    for k, f in enumerate(fields):
        def job(f=f, k=k):
            U = sio.read_config(Path(f))
            checks, files = diagnose(U, run.out / f"field_{k:02d}", d, run.tol, run.fmt)
            run.add(files)
            return checks

        run.stage(f"diagnose_{k:02d}", job)


def _run_blowup(run: Run):
    cfg = run.cfg
    p = cfg["params"]

    def frames():
        if "m" in p:
            U = make_prototype(int(p["m"]), _grid(cfg))
        else:
            U = sio.read_config(Path(p["field"]))
        seq = frame_sequence(U, tuple(p["x0"]), [float(t) for t in p["scales"]])
        checks = {}
        out = []
        for k, fr in enumerate(seq.frames):
            run.add(sio.write_config(run.out / "frames" / f"frame_{k:02d}", fr.config, run.fmt, fr.meta()))
            tr = spherical_trace(fr)
            cl = classify_trace(tr)
            res = homogeneity_residual(fr)
            H1 = average(fr.config, (0.0, 0.0), 1.0)
            checks[f"frame_{k:02d}_normalized"] = abs(H1 - 1.0) <= run.tol["frame_norm"]
            out.append({"t": fr.t, "rho": fr.rho, "alpha": fr.alpha, "resolved": fr.resolved, "homogeneity_residual": res,
                        "H1": H1, "classification": cl.to_dict()})
        run.add(sio.write_json(run.out / "reports" / "blowup.json",
                               {"frames": out, "differences": seq.differences, "decreasing": seq.decreasing}))
        return checks

    run.stage("frames", frames)


def validation_suite(run: Run, prototypes=(2, 3, 4), n: int = 257):
    """Invariant checks on prototypes on [-1, 1]^2."""
    grid = Grid2D.square(-1.0, 1.0, n)
    for m in prototypes:
        def job(m=m):
            U = make_prototype(m, grid)
            h = grid.h
            prof = frequency_profile(U, (0.0, 0.0), 6 * h, 0.3, 16)
            mono = monotonicity_check(prof)
            target = m / 2.0
            rep = classify_points(U, [(0.0, 0.0)], r_min=6 * h, r_max=0.3)[0]
            fr = make_frame(U, (0.0, 0.0), 0.25)
            cl = classify_trace(spherical_trace(fr))
            e, hh, nn = scaling_identity_check(U, (0.0, 0.0), 0.25, (0.1, 0.05), 0.5)
            checks = {
                "frequency_constant": bool(np.all(np.abs(prof.N - target) <= 0.05 * target)),
                "monotone": mono.passed and mono.C_tilde == 0.0,
                "classification": rep.singular == (m >= 3),
                "trace_degree": bool(np.all(np.abs(cl.degrees - target) <= 0.02 * target)),
                "frame_degree": abs(fr.alpha - target) <= 0.02 * target,
                "homogeneity": homogeneity_residual(fr) <= 0.02,
                "scaling_identities": max(e, hh, nn) <= 1e-2,
            }
            if m >= 3:
                checks["equal_angles"] = equal_angle_check(rep) <= math.radians(run.tol["angle_deg"])
                fl = flatness_scan(U, (0.0, 0.0), [8 * h, 0.1, 0.3])
                checks["not_flat"] = min(f.delta for f in fl) >= 0.2
            else:
                checks["class_s"] = class_s_check(U).passed
            run.add(sio.write_json(run.out / "validate" / f"prototype_{m}.json",
                                   {"m": m, "checks": checks, "N": prof.N, "radii": prof.radii,
                                    "C_tilde": mono.C_tilde, "degrees": cl.degrees}))
            return checks

        run.stage(f"prototype_{m}", job)


def execute(cfg: dict, out, tolerance_profile: str = "default") -> RunReport:
    """Run a validated config, writing all outputs under ``out``."""
    run = Run(cfg, Path(out), TOLERANCE_PROFILES[tolerance_profile])
    run.out.mkdir(parents=True, exist_ok=True)
    kind = cfg["kind"]
    if kind in ("gp", "lv"):
        _run_competition(run, kind)
    elif kind == "prototype":
        _run_prototype(run)
    elif kind == "partition":
        _run_partition(run)
    elif kind == "diagnose":
        _run_diagnose(run)
    elif kind == "blowup":
        _run_blowup(run)
    else:
        p = cfg.get("params", {})
        validation_suite(run, tuple(p.get("prototypes", (2, 3, 4))), int(cfg.get("grid", {}).get("n", 257)))
    return run.finish()
