"""Field, profile, nodal-set, partition and report serialization.

Fields are stored as CSV rows ``i,j,value`` (or raw little-endian float64 in
C order) next to a JSON header ``{nx, ny, h, origin}``; the header is the only
source of geometry. Floats are written with ``repr`` so identical inputs give
byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .almgren import FrequencyProfile, MonotonicityReport
from .exceptions import HeaderMismatch
from .grid import Grid2D
from .segregated import ReactionSpec, SegregatedConfig

FORMAT_VERSION = 1


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats (to None)."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


# fields ----------------------------------------------------------------------


def write_field(stem, grid: Grid2D, values: np.ndarray, fmt: str = "csv", meta: Optional[dict] = None) -> List[Path]:
    """Write one or more component arrays with a shared header ``<stem>.json``.

    Component k goes to ``<stem>_u<k>.csv`` (or ``.bin``). Returns all written paths.
    """
    stem = Path(stem)
    vals = np.asarray(values, float)
    if vals.ndim == 2:
        vals = vals[None]
    if vals.shape[1:] != grid.shape:
        raise ValueError("values do not match the grid")
    if fmt not in ("csv", "bin"):
        raise ValueError(f"unknown field format {fmt!r}")
    stem.parent.mkdir(parents=True, exist_ok=True)
    files = []
    for k, v in enumerate(vals):
        p = stem.parent / f"{stem.name}_u{k}.{fmt}"
        if fmt == "csv":
            ii, jj = np.meshgrid(np.arange(grid.nx), np.arange(grid.ny), indexing="ij")
            write_csv(p, ["i", "j", "value"], zip(ii.ravel().tolist(), jj.ravel().tolist(), v.ravel()))
        else:
            p.write_bytes(np.ascontiguousarray(v, dtype="<f8").tobytes())
        files.append(p)
    header = dict(grid.to_header())
    header.update({"version": FORMAT_VERSION, "format": fmt, "components": [f.name for f in files], "meta": meta or {}})
    hp = write_json(stem.with_suffix(".json"), header)
    return [hp] + files


def read_field(header_path):
    """Return (grid, values with shape (h, nx, ny), header dict)."""
    hp = Path(header_path)
    header = read_json(hp)
    try:
        grid = Grid2D.from_header(header)
        fmt = header.get("format", "csv")
        names = header["components"]
    except (KeyError, TypeError, ValueError) as e:
        raise HeaderMismatch(f"{hp}: bad field header ({e})") from e
    out = []
    for name in names:
        p = hp.parent / name
        if fmt == "bin":
            raw = np.frombuffer(p.read_bytes(), dtype="<f8")
            if raw.size != grid.nx * grid.ny:
                raise HeaderMismatch(f"{p}: {raw.size} values, header says {grid.nx}x{grid.ny}")
            out.append(raw.reshape(grid.shape).copy())
        else:
            data = np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
            if data.shape[0] != grid.nx * grid.ny:
                raise HeaderMismatch(f"{p}: {data.shape[0]} rows, header says {grid.nx}x{grid.ny}")
            ii, jj = data[:, 0].astype(int), data[:, 1].astype(int)
            if ii.max() >= grid.nx or jj.max() >= grid.ny or ii.min() < 0 or jj.min() < 0:
                raise HeaderMismatch(f"{p}: indices outside the header grid")
            v = np.full(grid.shape, np.nan)
            v[ii, jj] = data[:, 2]
            out.append(v)
    return grid, np.stack(out), header


def write_config(stem, U: SegregatedConfig, fmt: str = "csv", meta: Optional[dict] = None) -> List[Path]:
    m = {"reaction": U.reaction.to_list(), "eps_seg": U.eps_seg}
    m.update(to_jsonable(U.meta))
    m.update(meta or {})
    return write_field(stem, U.grid, U.values, fmt, m)


def read_config(header_path) -> SegregatedConfig:
    grid, vals, header = read_field(header_path)
    meta = header.get("meta", {})
    reaction = ReactionSpec.from_list(meta["reaction"]) if "reaction" in meta else None
    return SegregatedConfig(grid, vals, reaction, eps_seg=float(meta.get("eps_seg", 1e-3)), meta=meta)


# profiles and reports -----------------------------------------------------------


def write_profile(stem, profile: FrequencyProfile, report: Optional[MonotonicityReport] = None, flags=None):
    stem = Path(stem)
    p = write_csv(
        stem.with_suffix(".csv"),
        ["r", "E", "H", "N", "R"],
        zip(profile.radii, profile.E, profile.H, profile.N, profile.R),
    )
    meta = {
        "center": list(profile.center),
        "C_tilde": None if report is None else report.C_tilde,
        "N0_extrapolated": None if report is None else report.N0,
        "pass_flags": flags or ({} if report is None else {"monotone": report.passed}),
    }
    return [p, write_json(stem.with_suffix(".json"), meta)]


def read_profile(csv_path) -> FrequencyProfile:
    csv_path = Path(csv_path)
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    meta_path = csv_path.with_suffix(".json")
    center = tuple(read_json(meta_path)["center"]) if meta_path.exists() else (float("nan"), float("nan"))
    return FrequencyProfile(center, data[:, 0], data[:, 1], data[:, 2], data[:, 3], data[:, 4])


def write_geojson(path, nodal) -> Path:
    return write_json(path, nodal.to_geojson())


def write_partition(stem, partition, scales: Optional[np.ndarray] = None) -> List[Path]:
    """Label field (CSV plus header), per-part JSON {lambda1, mass, a_i} and the objective history CSV."""
    stem = Path(stem)
    g = partition.grid
    ii, jj = np.meshgrid(np.arange(g.nx), np.arange(g.ny), indexing="ij")
    files = [
        write_csv(
            stem.parent / f"{stem.name}_labels.csv",
            ["i", "j", "value"],
            zip(ii.ravel().tolist(), jj.ravel().tolist(), partition.labels.ravel().tolist()),
        )
    ]
    files.append(
        write_json(
            stem.parent / f"{stem.name}_labels.json",
            dict(g.to_header(), version=FORMAT_VERSION, format="csv", components=[f"{stem.name}_labels.csv"], meta={}),
        )
    )
    masses = partition.masses()
    parts = [
        {
            "part": k + 1,
            "lambda1": float(partition.eigenvalues[k]),
            "mass": float(masses[k]),
            "a_i": None if scales is None else float(scales[k]),
        }
        for k in range(partition.h_parts)
    ]
    files.append(
        write_json(
            stem.parent / f"{stem.name}_parts.json",
            {
                "p": partition.p,
                "objective": partition.objective,
                "relaxed_objective": partition.relaxed_objective,
                "seed": partition.seed,
                "restarts": partition.restarts,
                "parts": parts,
            },
        )
    )
    files.append(
        write_csv(
            stem.parent / f"{stem.name}_history.csv",
            ["beta", "iteration", "objective", "spread"],
            ((h["beta"], h["iteration"], h["objective"], h["spread"]) for h in partition.history),
        )
    )
    return files
