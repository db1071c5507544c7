"""Artifact serialization: legacy-ASCII VTK fields, CSV tables, run summaries.

Reals are written with 17 significant digits so every CSV round-trips
bit-exactly through float().
"""

from __future__ import annotations

import json
import math

import numpy as np

from .domains import QuadGrid, TetMesh
from .optimize import SlideTrace
from .rocket import ThrustProfile


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_field_vtk(field, domain, path, name: str = "field"):
    """One per-element scalar on a structured (grid) or unstructured (tet) mesh."""
    field = np.asarray(field, dtype=float)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{name}\nASCII\n")
        if isinstance(domain, QuadGrid):
            if field.shape != (domain.n_e,):
                raise ValueError(f"field has shape {field.shape}, expected ({domain.n_e},)")
            fh.write("DATASET STRUCTURED_GRID\n")
            fh.write(f"DIMENSIONS {domain.n_r + 1} {domain.n_z + 1} 1\n")
            fh.write(f"POINTS {(domain.n_r + 1) * (domain.n_z + 1)} double\n")
            for j in range(domain.n_z + 1):
                for i in range(domain.n_r + 1):
                    fh.write(f"{_fmt(domain.r0 + i * domain.dr)} {_fmt(domain.z0 + j * domain.dz)} 0\n")
        elif isinstance(domain, TetMesh):
            if field.shape != (domain.n_e,):
                raise ValueError(f"field has shape {field.shape}, expected ({domain.n_e},)")
            fh.write("DATASET UNSTRUCTURED_GRID\n")
            fh.write(f"POINTS {len(domain.vertices)} double\n")
            for x, y, z in domain.vertices:
                fh.write(f"{_fmt(x)} {_fmt(y)} {_fmt(z)}\n")
            fh.write(f"CELLS {domain.n_e} {5 * domain.n_e}\n")
            for tet in domain.tets:
                fh.write(f"4 {tet[0]} {tet[1]} {tet[2]} {tet[3]}\n")
            fh.write(f"CELL_TYPES {domain.n_e}\n")
            fh.write("10\n" * domain.n_e)
        else:
            raise ValueError(f"unsupported domain type {type(domain).__name__}")
        fh.write(f"CELL_DATA {len(field)}\n")
        fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for v in field:
            fh.write(_fmt(v) + "\n")


def write_field_csv(field, path, name: str = "value"):
    field = np.asarray(field, dtype=float)
    with open(path, "w") as fh:
        fh.write(f"element,{name}\n")
        for e, v in enumerate(field):
            fh.write(f"{e},{_fmt(v)}\n")


def read_field_csv(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("element,"):
            raise ValueError(f"{path}: not a field CSV")
        return np.array([float(line.split(",")[1]) for line in fh if line.strip()])


def write_profile_csv(profile: ThrustProfile, path):
    with open(path, "w") as fh:
        fh.write("time,thrust\n")
        for t, th in zip(profile.times, profile.thrust):
            fh.write(f"{_fmt(t)},{_fmt(th)}\n")


def read_profile_csv(path, kind: str = "custom") -> ThrustProfile:
    times, thrust = [], []
    with open(path) as fh:
        header = fh.readline().strip().lower()
        if header.replace(" ", "") != "time,thrust":
            raise ValueError(f"{path}: expected 'time,thrust' header")
        for line in fh:
            if not line.strip():
                continue
            t, th = line.split(",")
            times.append(float(t))
            thrust.append(float(th))
    return ThrustProfile(times=np.array(times), thrust=np.array(thrust), kind=kind)


TRACE_COLUMNS = (
    "slide,window_start,accepted,f_before,f_after,inner_iterations,evaluations,seconds,metric"
)


def write_trace_csv(trace: SlideTrace, path):
    with open(path, "w") as fh:
        fh.write(TRACE_COLUMNS + "\n")
        for r in trace.records:
            fh.write(
                f"{r.slide},{r.window_start},{int(r.accepted)},{_fmt(r.f_before)},"
                f"{_fmt(r.f_after)},{r.inner_iterations},{r.evaluations},"
                f"{_fmt(r.seconds)},{_fmt(r.metric)}\n"
            )


def write_comparison_csv(rows: list, path):
    """Per-mode summary rows: (mode, k, objective, metric, evaluations, seconds)."""
    with open(path, "w") as fh:
        fh.write("mode,total_basis,objective,match_error_pct,evaluations,seconds\n")
        for mode, k, obj, metric, evals, secs in rows:
            fh.write(f"{mode},{k},{_fmt(obj)},{_fmt(metric)},{evals},{_fmt(secs)}\n")


def write_station_report_csv(stations: np.ndarray, r_b: np.ndarray, r_limit: float, path):
    """Per-axial-station ignition radii against the bore constraint."""
    with open(path, "w") as fh:
        fh.write("station_z,r_b,r_limit,satisfied\n")
        for z, rb in zip(stations, r_b):
            fh.write(f"{_fmt(z)},{_fmt(rb)},{_fmt(r_limit)},{int(rb > r_limit)}\n")


def write_weights(weights: np.ndarray, path):
    """ASCII weight dump, one value per line, restart-precision."""
    with open(path, "w") as fh:
        for w in np.asarray(weights, dtype=float):
            fh.write(_fmt(w) + "\n")


def read_weights(path) -> np.ndarray:
    with open(path) as fh:
        return np.array([float(line) for line in fh if line.strip()])


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_summary_json(summary: dict, path):
    def clean(x):
        if isinstance(x, float) and not math.isfinite(x):
            return repr(x)
        return x

    with open(path, "w") as fh:
        json.dump({k: clean(v) for k, v in summary.items()}, fh, indent=2, default=_json_default)
        fh.write("\n")
