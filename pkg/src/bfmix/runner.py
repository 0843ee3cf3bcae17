"""Run orchestration from a :class:`RunConfig`, plus the benchmark and comparison harnesses."""

import csv
import logging
import statistics
import time
from pathlib import Path

import numpy as np

from . import io
from .afunction import cached_afun_table
from .config import serialize
from .grid import make_grid, write_field
from .hobasis import CACHED_3D, build_basis
from .methods import (
    MethodKind,
    boson_seed,
    observables,
    oscillator_orbitals,
    release_trap_and_evolve,
    run_a_rtp,
    run_itp_iev,
    run_itp_itp_gs,
)
from .orthonorm import OrbitalSet
from .parallel import get_threads, set_threads
from .propagator import IMAGINARY, evolve_mixture_step

log = logging.getLogger(__name__)


class ResumeMismatchError(ValueError):
    pass


class _DirectoryCheckpoint:
    def __init__(self, config, grid, every):
        self.config = config
        self.grid = grid
        self.every = every
        self.directory = Path(config.runtime__output_dir) / "checkpoint"
        self.text = serialize(config)
        self.hash = config.config_hash()

    def save(self, step, state, trace, extra):
        io.save_checkpoint(self.directory, self.text, self.hash, step, state, trace, extra, self.grid)
        log.info("checkpoint written at step %d", step)


def table_for(config):
    params = config.params()
    if params.g_BF == 0.0:
        return None
    cache = config.runtime__afun_cache or None
    return cached_afun_table(params.w, cache_dir=cache, nodes=config.runtime__afun_nodes)


def grid_for(config):
    return make_grid(config.grid__n, config.grid__dx)


def solve(config, table=None, grid=None, checkpoint=None, resume=None, initial_boson=None, basis=None):
    """Dispatch to the ground-state driver selected by ``method.kind``."""
    params = config.params()
    grid = grid_for(config) if grid is None else grid
    if table is None:
        table = table_for(config)
    crit = config.criteria()
    kind = config.kind
    dt = config.method__dt
    if kind is MethodKind.ITP_ITP_GS:
        initial = None
        if initial_boson is not None:
            initial = OrbitalSet(initial_boson, oscillator_orbitals(grid, params))
        return run_itp_itp_gs(params, grid, crit, table, dt=dt, initial=initial, checkpoint=checkpoint,
                              resume=resume)
    if kind is MethodKind.A_RTP:
        return run_a_rtp(params, grid, crit, table, dt=dt, t_f=config.method__t_f,
                         max_post_ramp_windows=config.method__post_ramp_windows, initial_boson=initial_boson,
                         checkpoint=checkpoint, resume=resume)
    return run_itp_iev(params, grid, crit, table, strategy=config.method__strategy, n_shell=config.method__N_shell,
                       dt=dt, memory_cap=config.runtime__memory_cap, max_outer=config.method__max_outer,
                       initial_boson=initial_boson, checkpoint=checkpoint, resume=resume, basis=basis)


def run(config, resume=None):
    """Execute a configured run and write its artifacts into ``runtime.output_dir``.

    Returns the :class:`RunReport`; with ``release.enabled`` the report's
    ``extra["release"]`` holds the snapshot series.
    """
    set_threads(config.runtime__threads)
    out = Path(config.runtime__output_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = config.config_hash()
    if resume is not None and resume.get("config_hash", chash) != chash:
        raise ResumeMismatchError(f"checkpoint belongs to config {resume['config_hash']}, not {chash}")
    (out / "config.txt").write_text(serialize(config), encoding="ascii")
    io.write_started(out / "report.txt", config.method__kind, chash)
    grid = grid_for(config)
    table = table_for(config)
    every = config.runtime__checkpoint_every
    checkpoint = _DirectoryCheckpoint(config, grid, every) if every > 0 else None
    report = solve(config, table, grid, checkpoint=checkpoint, resume=resume)
    params = config.params()
    io.write_trace(out / "energy_trace.csv", report.trace)
    n_B, n_F = report.state.densities(params.N_B)
    write_field(out / "density_B.bfx", n_B, grid)
    write_field(out / "density_F.bfx", n_F, grid)
    obs = observables(report.state, params, grid)
    io.write_profile(out / "profile_B.txt", obs["radius"], obs["profile_B"])
    io.write_profile(out / "profile_F.txt", obs["radius"], obs["profile_F"])
    summary = {"threads": get_threads(), "rms_B": repr(obs["rms_B"]), "rms_F": repr(obs["rms_F"])}
    if config.release__enabled:
        rel_dir = out / "release"
        rel_dir.mkdir(exist_ok=True)

        def dump(step, t, st, o):
            nb, nf = st.densities(params.N_B)
            write_field(rel_dir / f"density_B_{step:08d}.bfx", nb, grid)
            write_field(rel_dir / f"density_F_{step:08d}.bfx", nf, grid)
            io.write_profile(rel_dir / f"profile_B_{step:08d}.txt", o["radius"], o["profile_B"])
            io.write_profile(rel_dir / f"profile_F_{step:08d}.txt", o["radius"], o["profile_F"])

        series, _ = release_trap_and_evolve(report.state, params, table, grid, config.release__duration,
                                            dt=config.release__dt, snapshot_every=config.release__snapshot_every,
                                            on_snapshot=dump)
        io.write_snapshot_table(rel_dir / "observables.csv", series)
        report.extra["release"] = series
        summary["release_snapshots"] = len(series)
    io.write_report(out / "report.txt", report, chash, done=True, extra_fields=summary)
    return report


def resume_run(checkpoint_dir, output_dir=None):
    """Continue the run stored in a checkpoint directory."""
    from .config import parse_config

    text, resume = io.load_checkpoint(checkpoint_dir)
    config = parse_config(text)
    if output_dir is not None:
        config = config.replace(**{"runtime.output_dir": str(output_dir)})
    return run(config, resume=resume)


def _bench_workload(config, steps):
    params = config.params()
    grid = grid_for(config)
    table = table_for(config)
    state = OrbitalSet(boson_seed(grid, params), oscillator_orbitals(grid, params), True)
    dt = config.method__dt

    def work():
        st = state
        for _ in range(steps):
            st = evolve_mixture_step(st, params, table, grid, dt, IMAGINARY)
        return st

    return work


def bench_scaling(config, threads, steps=1000, repeats=3, out_csv=None):
    """Time a fixed block of ``steps`` coupled imaginary-time steps per thread count.

    Returns rows ``(threads, seconds, speedup)``; seconds is the median over
    ``repeats`` and speedup is relative to the first thread count measured at 1
    (or to the smallest count when 1 is absent).
    """
    threads = [int(t) for t in threads]
    if not threads:
        raise ValueError("thread list must not be empty")
    work = _bench_workload(config, steps)
    saved = get_threads()
    times = {}
    try:
        for n in sorted(set(threads)):
            set_threads(n)
            work_once = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                work()
                work_once.append(time.perf_counter() - t0)
            times[n] = statistics.median(work_once)
            log.info("bench threads=%d: %.3f s", n, times[n])
    finally:
        set_threads(saved)
    base = times[1] if 1 in times else times[min(times)]
    rows = [(n, times[n], base / times[n]) for n in threads]
    if out_csv is not None:
        with open(out_csv, "w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("threads", "seconds", "speedup"))
            w.writerows((n, repr(s), repr(sp)) for n, s, sp in rows)
    return rows


def parse_method_spec(spec):
    """``KIND`` or ``KIND:N_shell`` (e.g. ``ITP_IEV_3D:11``) -> dotted-key overrides."""
    kind, _, shell = spec.partition(":")
    updates = {"method.kind": MethodKind(kind.strip().upper().replace("-", "_")).value,
               "method.dt": None, "method.strategy": None}
    if shell:
        updates["method.N_shell"] = int(shell)
    return updates


COMPARE_COLUMNS = ("label", "method", "N_shell", "E_total", "steps", "iterations", "wall_seconds",
                   "peak_memory_bytes", "converged", "error")


def compare_methods(config, methods, out_csv=None, share_seed=True):
    """One run per entry of ``methods`` on identical physics; failures become error rows.

    With ``share_seed`` the boson-only ITP ground state is computed once and
    handed to every method as its starting condensate.
    """
    if not methods:
        raise ValueError("need at least one method")
    set_threads(config.runtime__threads)
    grid = grid_for(config)
    table = table_for(config)
    seed = None
    if share_seed:
        from .methods import boson_ground_state

        seed, _ = boson_ground_state(config.params(), table, grid, config.criteria(),
                                     min(0.05, config.method__dt or 0.05))
    rows, reports = [], {}
    bases = {}
    for spec in methods:
        cfg = config.replace(**parse_method_spec(spec))
        row = {"label": spec, "method": cfg.method__kind, "N_shell": "", "E_total": "", "steps": "",
               "iterations": "", "wall_seconds": "", "peak_memory_bytes": "", "converged": "", "error": ""}
        basis = None
        if cfg.kind in (MethodKind.ITP_IEV_1D, MethodKind.ITP_IEV_3D):
            row["N_shell"] = cfg.method__N_shell
            key = (cfg.method__N_shell, cfg.method__strategy)
            params = cfg.params()
            try:
                if key not in bases:
                    bases.clear()
                    bases[key] = build_basis(grid, params.omega_F, params.mass_F, cfg.method__N_shell,
                                             cfg.method__strategy or CACHED_3D, cfg.runtime__memory_cap)
                basis = bases[key]
            except (MemoryError, ValueError) as exc:
                row["error"] = f"{type(exc).__name__}: {exc}"
                rows.append(row)
                continue
        try:
            rep = solve(cfg, table, grid, initial_boson=seed, basis=basis)
        except (ArithmeticError, RuntimeError, MemoryError, ValueError) as exc:
            log.warning("%s failed: %s", spec, exc)
            row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
            continue
        reports[spec] = rep
        row.update(E_total=repr(rep.total), steps=rep.steps, iterations=rep.iterations,
                   wall_seconds=f"{rep.wall_seconds:.3f}", peak_memory_bytes=rep.peak_memory_bytes,
                   converged=str(rep.converged).lower())
        rows.append(row)
    if out_csv is not None:
        with open(out_csv, "w", newline="", encoding="ascii") as fh:
            w = csv.DictWriter(fh, COMPARE_COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return rows, reports


def energies(rows):
    return np.array([float(r["E_total"]) for r in rows if r["E_total"] != ""])
