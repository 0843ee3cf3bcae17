"""On-disk artifacts: energy-trace CSV, report records, profiles and checkpoints.

All numbers are written with ``repr`` so they round-trip exactly and never
depend on the locale.
"""

import csv
import json
import os
import shutil
from pathlib import Path

import numpy as np

from .grid import make_grid, read_field, write_field
from .methods import TracePoint
from .orthonorm import OrbitalSet
from .physics import EnergyBreakdown

TRACE_COLUMNS = ("step", "time", "E_total", "E_kin_B", "E_kin_F", "E_trap_B", "E_trap_F", "E_BB", "E_LHY",
                 "E_BF_mf", "E_BF_ho")
DONE = "DONE"


def _row(tp):
    e = tp.energy
    return [str(tp.step), repr(float(tp.time)), repr(e.total)] + [repr(float(getattr(e, c)))
                                                                   for c in EnergyBreakdown.COLUMNS]


def write_trace(path, trace):
    with open(path, "w", newline="", encoding="ascii") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(TRACE_COLUMNS)
        out.writerows(_row(tp) for tp in trace)


def read_trace(path):
    trace = []
    with open(path, newline="", encoding="ascii") as fh:
        rows = csv.reader(fh)
        header = next(rows)
        if tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected trace header {header}")
        for r in rows:
            energy = EnergyBreakdown(*(float(x) for x in r[3:]))
            trace.append(TracePoint(int(r[0]), float(r[1]), energy))
    return trace


def write_report(path, report, config_hash="", done=True, extra_fields=None):
    """key=value record of a run; the final ``DONE`` line marks a complete run."""
    lines = {
        "method": report.method,
        "config_hash": config_hash,
        "E_total": repr(report.energy.total),
    }
    for c in EnergyBreakdown.COLUMNS:
        lines[f"E_{c}"] = repr(float(getattr(report.energy, c)))
    lines.update(
        steps=str(report.steps),
        iterations=str(report.iterations),
        wall_seconds=f"{report.wall_seconds:.6f}",
        peak_memory_bytes=str(int(report.peak_memory_bytes)),
        converged=str(bool(report.converged)).lower(),
    )
    for k, v in (extra_fields or {}).items():
        lines[k] = str(v)
    text = "".join(f"{k}={v}\n" for k, v in lines.items())
    if done:
        text += DONE + "\n"
    Path(path).write_text(text, encoding="ascii")


def write_started(path, method, config_hash):
    """Placeholder record written at start-up; lacks the ``DONE`` sentinel."""
    Path(path).write_text(f"method={method}\nconfig_hash={config_hash}\nstatus=running\n", encoding="ascii")


def read_report(path):
    """Return ``(fields, complete)``."""
    lines = Path(path).read_text(encoding="ascii").splitlines()
    complete = bool(lines) and lines[-1] == DONE
    fields = dict(line.split("=", 1) for line in lines if "=" in line)
    return fields, complete


def write_profile(path, r, values):
    with open(path, "w", encoding="ascii") as fh:
        for a, b in zip(r, values):
            fh.write(f"{float(a)!r} {float(b)!r}\n")


def read_profile(path):
    data = np.loadtxt(path, ndmin=2)
    return data[:, 0], data[:, 1]


def write_snapshot_table(path, series):
    keys = ("step", "time", "rms_B", "rms_F", "peak_B", "peak_F", "norm_B", "norm_F", "boundary_ratio")
    with open(path, "w", newline="", encoding="ascii") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(keys)
        for obs in series:
            out.writerow([str(obs["step"])] + [repr(float(obs[k])) for k in keys[1:]])


def save_checkpoint(directory, config_text, config_hash, step, state, trace, extra, grid):
    """Write a checkpoint directory atomically (build aside, then swap in)."""
    directory = Path(directory)
    tmp = directory.with_name(directory.name + ".tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    write_field(tmp / "psi_B.bfx", state.psi_B, grid)
    for j, orb in enumerate(state.fermions):
        write_field(tmp / f"orbital_{j:04d}.bfx", orb, grid)
    write_trace(tmp / "trace.csv", trace)
    (tmp / "config.txt").write_text(config_text, encoding="ascii")
    meta = {
        "config_hash": config_hash,
        "step": int(step),
        "n_fermions": int(state.n_fermions),
        "orthonormal": bool(state.orthonormal),
        "extra": extra,
    }
    (tmp / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True), encoding="ascii")
    old = directory.with_name(directory.name + ".old")
    if directory.exists():
        if old.exists():
            shutil.rmtree(old)
        os.replace(directory, old)
    os.replace(tmp, directory)
    if old.exists():
        shutil.rmtree(old)


def load_checkpoint(directory):
    """Return ``(config_text, resume dict)`` where the dict also holds ``config_hash`` and ``grid``."""
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text(encoding="ascii"))
    psi_B, grid = read_field(directory / "psi_B.bfx")
    orbitals = [read_field(directory / f"orbital_{j:04d}.bfx")[0] for j in range(meta["n_fermions"])]
    state = OrbitalSet(psi_B, np.stack(orbitals), meta["orthonormal"])
    resume = {
        "step": meta["step"],
        "state": state,
        "trace": read_trace(directory / "trace.csv"),
        "extra": meta["extra"],
        "config_hash": meta["config_hash"],
        "grid": make_grid(grid.n, grid.dx),
    }
    return (directory / "config.txt").read_text(encoding="ascii"), resume
