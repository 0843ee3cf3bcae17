import json

import numpy as np
import pytest

from bfmix import io
from bfmix.afunction import AFunctionTable
from bfmix.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from bfmix.config import load_config, parse_config
from bfmix.grid import make_grid, read_field, write_field
from bfmix.methods import RunReport, TracePoint
from bfmix.physics import EnergyBreakdown
from bfmix.runner import compare_methods, energies

SMALL = """\
grid.n = 24
grid.dx = 0.8
particles.N_B = 4
particles.N_F = 4
particles.w = 2.0
trap.omega_B = 1.0
trap.omega_F = 2.0
interaction.g_BF_over_gB = -1.0
method.kind = {kind}
method.dt = 0.01
method.N_shell = 3
convergence.energy_tol = 1e-7
convergence.density_tol = 1e-6
convergence.window = 50
convergence.max_steps = 20000
runtime.output_dir = {out}
runtime.afun_cache = {cache}
runtime.afun_nodes = 64
"""


@pytest.fixture(scope="module")
def cache(tmp_path_factory):
    return tmp_path_factory.mktemp("afun")


def _config(tmp_path, cache, kind="ITP_ITP_GS", name="cfg.txt", out="out", extra=""):
    path = tmp_path / name
    path.write_text(SMALL.format(kind=kind, out=tmp_path / out, cache=cache) + extra)
    return path


def test_run_writes_all_artifacts(tmp_path, cache, capsys):
    cfg = _config(tmp_path, cache, extra="release.enabled = true\nrelease.duration = 0.1\n"
                                         "release.dt = 0.01\nrelease.snapshot_every = 5\n")
    assert main(["run", str(cfg)]) == EXIT_OK
    out = tmp_path / "out"
    fields, complete = io.read_report(out / "report.txt")
    assert complete and fields["method"] == "ITP_ITP_GS"
    assert fields["config_hash"] == load_config(cfg).config_hash()
    trace = io.read_trace(out / "energy_trace.csv")
    assert float(fields["E_total"]) == trace[-1].energy.total
    n_B, grid = read_field(out / "density_B.bfx")
    assert grid.shape == (24, 24, 24) and np.sum(n_B) * grid.dV == pytest.approx(4.0, rel=1e-10)
    r, prof = io.read_profile(out / "profile_F.txt")
    assert r.size == prof.size > 0
    assert parse_config((out / "config.txt").read_text()) == load_config(cfg)
    rel = (out / "release" / "observables.csv").read_text().splitlines()
    assert len(rel) == 1 + 3 and fields["release_snapshots"] == "3"
    assert "E_total=" in capsys.readouterr().out


def test_identical_runs_are_bit_identical(tmp_path, cache):
    a = _config(tmp_path, cache, name="a.txt", out="a")
    b = _config(tmp_path, cache, name="b.txt", out="b")
    assert main(["run", str(a)]) == main(["run", str(b)]) == EXIT_OK
    assert (tmp_path / "a" / "energy_trace.csv").read_bytes() == (tmp_path / "b" / "energy_trace.csv").read_bytes()
    assert (tmp_path / "a" / "density_F.bfx").read_bytes() == (tmp_path / "b" / "density_F.bfx").read_bytes()


@pytest.mark.parametrize("kind", ["ITP_ITP_GS", "ITP_IEV_1D"])
def test_resume_matches_uninterrupted(tmp_path, cache, kind):
    full = _config(tmp_path, cache, kind, name="full.txt", out="full",
                   extra="runtime.checkpoint_every = 50\n")
    assert main(["run", str(full)]) == EXIT_OK
    ref = float(io.read_report(tmp_path / "full" / "report.txt")[0]["E_total"])
    ckpt = tmp_path / "full" / "checkpoint"
    assert (ckpt / "meta.json").exists()
    assert main(["resume", str(ckpt), "--output-dir", str(tmp_path / "again")]) == EXIT_OK
    fields, complete = io.read_report(tmp_path / "again" / "report.txt")
    assert complete
    assert abs(float(fields["E_total"]) - ref) <= 1e-12 * abs(ref)


def test_resume_rejects_foreign_checkpoint(tmp_path, cache):
    cfg = _config(tmp_path, cache, extra="runtime.checkpoint_every = 50\n")
    assert main(["run", str(cfg)]) == EXIT_OK
    meta_path = tmp_path / "out" / "checkpoint" / "meta.json"
    meta = json.loads(meta_path.read_text())
    meta["config_hash"] = "0" * 16
    meta_path.write_text(json.dumps(meta))
    assert main(["resume", str(meta_path.parent)]) == EXIT_CONFIG


def test_config_errors_exit_2(tmp_path, cache, capsys):
    bad = _config(tmp_path, cache, extra="method.dt_typo = 1\n")
    assert main(["run", str(bad)]) == EXIT_CONFIG
    assert "method.dt_typo" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.txt")]) == EXIT_CONFIG


def test_numerical_failure_exits_3(tmp_path, cache, capsys):
    cfg = _config(tmp_path, cache, extra="").read_text().replace("max_steps = 20000", "max_steps = 20")
    path = tmp_path / "cap.txt"
    path.write_text(cfg)
    assert main(["run", str(path)]) == EXIT_NUMERICAL
    assert "exceeded" in capsys.readouterr().err
    _, complete = io.read_report(tmp_path / "out" / "report.txt")
    assert not complete


def test_compare_rows_and_shared_seed(tmp_path, cache):
    cfg = load_config(_config(tmp_path, cache))
    out = tmp_path / "cmp.csv"
    rows, reports = compare_methods(cfg, ["ITP_ITP_GS", "ITP_IEV_3D:4", "ITP_IEV_1D:4"], out)
    assert [r["error"] for r in rows] == ["", "", ""]
    e = energies(rows)
    assert e[1] == e[2]
    assert abs(e[0] - e[1]) < 5e-2 * abs(e[0])
    assert len(out.read_text().splitlines()) == 4


def test_compare_records_failures(tmp_path, cache):
    cfg = load_config(_config(tmp_path, cache)).replace(**{"runtime.memory_cap": 1000})
    rows, _ = compare_methods(cfg, ["ITP_IEV_3D:3"], share_seed=False)
    assert rows[0]["error"].startswith("BasisMemoryError")


def test_bench_single_thread(tmp_path, cache, capsys):
    cfg = _config(tmp_path, cache)
    out = tmp_path / "scaling.csv"
    assert main(["bench", str(cfg), "--threads", "1", "--steps", "3", "--repeats", "1", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "threads,seconds,speedup"
    assert float(lines[1].split(",")[2]) == 1.0


def test_afun_table_command(tmp_path):
    out = tmp_path / "a.bin"
    assert main(["afun-table", "--w", "2", "--nodes", "64", "--out", str(out)]) == EXIT_OK
    t = AFunctionTable.load(out)
    assert t.w == 2.0 and t.alpha_grid.size == 64
    assert main(["afun-table", "--w", "2", "--nodes", "8", "--out", str(out)]) == EXIT_CONFIG


def test_trace_and_report_round_trip(tmp_path):
    e = EnergyBreakdown(1.0, 2.0, 3.0, 4.0, 0.1, 0.2, -0.3, 1e-17)
    trace = [TracePoint(0, 0.0, e), TracePoint(10, 0.1, e)]
    io.write_trace(tmp_path / "t.csv", trace)
    assert io.read_trace(tmp_path / "t.csv") == trace
    io.write_started(tmp_path / "r.txt", "A_RTP", "abc")
    assert io.read_report(tmp_path / "r.txt") == ({"method": "A_RTP", "config_hash": "abc", "status": "running"},
                                                  False)
    rep = RunReport("A_RTP", e, 10, 1.5, 1024, trace, None)
    io.write_report(tmp_path / "r.txt", rep, "abc")
    fields, complete = io.read_report(tmp_path / "r.txt")
    assert complete and float(fields["E_total"]) == e.total and fields["converged"] == "true"


def test_field_files_round_trip(tmp_path):
    g = make_grid((4, 6, 8), 0.25)
    rng = np.random.default_rng(3)
    for f in (rng.normal(size=g.shape), rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)):
        write_field(tmp_path / "f.bfx", f, g)
        back, g2 = read_field(tmp_path / "f.bfx")
        assert np.array_equal(back, f) and g2.shape == g.shape and g2.dx == g.dx
    (tmp_path / "bad.bfx").write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(ValueError, match="magic"):
        read_field(tmp_path / "bad.bfx")
