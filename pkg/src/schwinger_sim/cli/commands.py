"""Implementations of the command-line subcommands.

Every ``run_*`` function takes a validated :class:`RunConfig` and an output
directory, writes its files and returns the JSON document it emitted.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from ..design import derive_scales, validate_hierarchy
from ..dynamics import ProtocolSchedule, evolve
from ..errors import AbortedRunError, SchwingerSimError
from ..lattice import LatticeSpec, build_hamiltonian, diagonalize, dirac_sea, lattice_dispersion
from ..observables import ObservableRecord, fit_suppression, mode_occupations
from .. import oracle as ed
from .config import DEFAULT_GRID_POINTS, RunConfig, validate_output

__all__ = [
    "run_bands",
    "run_simulate",
    "run_sweep",
    "run_design",
    "run_oracle_check",
    "simulate_schedule",
    "format_float",
    "trajectory_csv",
    "OracleCheckFailed",
]

log = logging.getLogger(__name__)


class OracleCheckFailed(SchwingerSimError):
    def __init__(self, report: dict):
        self.report = report
        failed = [c["name"] for c in report["checks"] if not c["passed"]]
        super().__init__("oracle checks failed: " + ", ".join(failed))


def format_float(x: float, precision: int = 17) -> str:
    return f"{x:.{precision}g}"


def _write_json(path: Path, document: dict) -> None:
    validate_output(document)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def trajectory_csv(records: Sequence[ObservableRecord], precision: int = 17,
                   density: bool = False) -> tuple[list[str], list[list[str]]]:
    """Header and formatted rows of a trajectory table."""
    header = ["time", "total_number", "pair_number", "energy"]
    if density and records:
        header += [f"density_{i}" for i in range(records[0].site_density.size)]
    rows = []
    for r in records:
        row = [r.time, r.total_number, r.pair_number, r.energy_expectation]
        if density:
            row += list(r.site_density)
        rows.append([format_float(float(v), precision) for v in row])
    return header, rows


# -- bands ------------------------------------------------------------------

def run_bands(cfg: RunConfig, out: Path) -> dict:
    spec = cfg.lattice_spec()
    b = cfg.section("bands")
    M = float(b["mass"])
    n = int(b.get("grid_points", DEFAULT_GRID_POINTS))
    a, J = spec.lattice_constant, spec.hopping
    edge = math.pi / (2.0 * a)
    p = np.linspace(-edge, edge, n)
    upper = lattice_dispersion(p, M, J, a)
    free = lattice_dispersion(p, 0.0, J, a)
    prec = cfg.precision
    rows = [[format_float(float(v), prec) for v in (pi, -ui, ui, fi)]
            for pi, ui, fi in zip(p, upper, free)]
    table = out / cfg.section("output").get("table", "bands.csv")
    _write_rows(table, ["p", "E_minus", "E_plus", "E_free"], rows)
    doc = {
        "kind": "bands",
        "status": "ok",
        "mass": M,
        "hopping": J,
        "lattice_constant": a,
        "grid_points": n,
        "min_gap": float(2.0 * upper.min()),
        "table": str(table),
    }
    _write_json(out / cfg.section("output").get("summary", "bands.json"), doc)
    return doc


# -- simulate ---------------------------------------------------------------

def simulate_schedule(schedule: ProtocolSchedule, dt: float, record_every: int = 0):
    """Evolve the vacuum of ``H(0)`` through ``schedule``; return ``(result, metrics)``."""
    spec = schedule.spec
    vacuum = dirac_sea(diagonalize(schedule.hamiltonian(0.0)))
    result = evolve(vacuum, schedule, dt, record_every)
    final = result.trajectory[-1]
    reference = diagonalize(build_hamiltonian(spec, schedule.mass(schedule.total_duration)))
    occ = mode_occupations(result.final_state, reference.positive_modes)
    t_on = schedule.field_on_time()
    metrics = {
        "final_pair_number": final.pair_number,
        "pair_number_per_site": final.pair_number / spec.num_sites,
        "max_mode_occupation": float(occ.max()) if occ.size else 0.0,
        "field_on_time": t_on,
        "pair_rate": final.pair_number / (spec.length * t_on) if t_on > 0.0 else None,
        "number_drift": max(abs(r.total_number - vacuum.num_fermions) for r in result.trajectory),
        "max_orthonormality_drift": result.diagnostics.max_drift,
        "reorthonormalizations": len(result.diagnostics.reorthonormalizations),
        "steps": result.diagnostics.step_count,
        "wall_time": result.diagnostics.wall_time,
    }
    return result, metrics


def run_simulate(cfg: RunConfig, out: Path) -> dict:
    out_cfg = cfg.section("output")
    prec = cfg.precision
    density = bool(out_cfg.get("density", False))
    traj_path = out / out_cfg.get("trajectory", "trajectory.csv")
    schedule = cfg.schedule()
    try:
        result, metrics = simulate_schedule(schedule, cfg.dt_for(schedule), cfg.record_every)
    except AbortedRunError as exc:
        if exc.trajectory:
            _write_rows(traj_path, *trajectory_csv(exc.trajectory, prec, density))
        raise
    _write_rows(traj_path, *trajectory_csv(result.trajectory, prec, density))
    doc = {"kind": "simulate", "status": "ok", "trajectory": str(traj_path),
           "num_sites": schedule.spec.num_sites, **metrics}
    _write_json(out / out_cfg.get("summary", "summary.json"), doc)
    return doc


# -- sweep ------------------------------------------------------------------

def _sweep_point(job: tuple) -> dict:
    index, value, data, axis, stage = job
    cfg = RunConfig(data)
    row = {"index": index, "value": value, "status": "ok", "error": ""}
    try:
        if axis == "field_amplitude":
            schedule = cfg.schedule(amplitude=value)
        elif axis == "M_target":
            schedule = cfg.schedule(M_target=value)
        else:
            durations = list(cfg.section("protocol")["durations"])
            durations[stage - 1] = value
            schedule = cfg.schedule(durations=durations)
        _, metrics = simulate_schedule(schedule, cfg.dt_for(schedule), 0)
        row.update(metrics)
    except SchwingerSimError as exc:
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return row


_SWEEP_COLUMNS = ["index", "value", "status", "final_pair_number", "pair_number_per_site",
                  "field_on_time", "pair_rate", "max_mode_occupation", "error"]


def run_sweep(cfg: RunConfig, out: Path, workers: int | None = None) -> dict:
    sw = cfg.section("sweep")
    axis = sw["axis"]
    values = [float(v) for v in sw["values"]]
    jobs = [(i, v, cfg.data, axis, sw.get("stage", 0)) for i, v in enumerate(values)]
    workers = workers or os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    rows.sort(key=lambda r: r["index"])

    prec = cfg.precision

    def cell(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return format_float(v, prec)
        return str(v)

    table = out / cfg.section("output").get("table", "sweep.csv")
    _write_rows(table, _SWEEP_COLUMNS, [[cell(r.get(c)) for c in _SWEEP_COLUMNS] for r in rows])

    fit = None
    fit_message = None
    if axis == "field_amplitude":
        good = [(r["value"], r["pair_rate"]) for r in rows
                if r["status"] == "ok" and r.get("pair_rate") and r["pair_rate"] > 0.0]
        try:
            result = fit_suppression(good)
        except SchwingerSimError as exc:
            fit_message = f"fit refused: {exc}"
        else:
            M = float(cfg.section("protocol")["M_target"])
            fit = {
                "slope": result.slope,
                "intercept": result.intercept,
                "r_squared": result.r_squared,
                "residual": result.residual,
                "target_slope": -math.pi * M * M,
                "relative_error": result.relative_slope_error(M) if M > 0.0 else float("inf"),
            }
    else:
        fit_message = "fit only applies to field_amplitude sweeps"
    status = "ok" if all(r["status"] == "ok" for r in rows) else "partial"
    points = [{k: r.get(k) for k in _SWEEP_COLUMNS} for r in rows]
    doc = {"kind": "sweep", "status": status, "axis": axis, "table": str(table),
           "points": points, "fit": fit, "fit_message": fit_message}
    _write_json(out / cfg.section("output").get("summary", "sweep.json"), doc)
    return doc


# -- design -----------------------------------------------------------------

def run_design(cfg: RunConfig, out: Path) -> dict:
    params = cfg.optical_params()
    d = cfg.section("design")
    scales = derive_scales(params)
    report = validate_hierarchy(scales, d.get("threshold", 5.0), d.get("warn_threshold", 3.0))
    doc = {
        "kind": "design",
        "status": "ok",
        "inputs": {
            "W0": params.W0, "dW": params.dW, "wavelength": params.wavelength,
            "atom_mass": params.atom_mass, "temperature": params.temperature,
            "convention": params.convention.value,
        },
        "scales": scales.to_dict(),
        "hierarchy": report.to_dict(),
        "simulation_units": {
            "hopping": 1.0,
            "mass": scales.mass_over_hopping,
            "lattice_constant": 0.5,
            "temperature": scales.temperature_over_hopping,
            "time_unit_seconds": scales.time_unit,
        },
        "table": report.table(),
    }
    _write_json(out / cfg.section("output").get("report", "design.json"), doc)
    return doc


# -- oracle-check -------------------------------------------------------------

DEFAULT_TOLERANCES = {
    "free_fermion": 1e-10,
    "one_particle": 1e-10,
    "jordan_wigner": 0.0,
    "spectrum": 1e-10,
    "dynamics": 1e-8,
}


def run_oracle_check(cfg: RunConfig, out: Path, seed: int | None = None) -> dict:
    o = cfg.section("oracle")
    seed = cfg.seed if seed is None else int(seed)
    tol = {**DEFAULT_TOLERANCES, **o.get("tolerances", {})}
    deviations = ed.equivalence_battery(
        num_sites=o.get("num_sites", 8),
        seed=seed,
        draws=o.get("draws", 20),
        duration=o.get("duration", 4.0),
        dt=o.get("dt", 0.02),
        checkpoints=o.get("checkpoints", 5),
    )
    checks = [
        {"name": name, "deviation": dev, "tolerance": tol[group], "passed": bool(dev <= tol[group])}
        for name, group, dev in deviations
    ]
    ok = all(c["passed"] for c in checks)
    doc = {"kind": "oracle-check", "status": "ok" if ok else "fail", "seed": seed, "checks": checks}
    _write_json(out / cfg.section("output").get("report", "oracle.json"), doc)
    if not ok:
        raise OracleCheckFailed(doc)
    return doc
