import subprocess
import sys

import numpy as np
import pytest

from coevo.cli import main
from coevo.io import read_trajectory

BASE = """
[model]
d = 2
T = {T}
gamma = 0.3
seed = 5

[kernel]
{kernel}

[experiment]
n_grid = {n_grid}
replicates = {M}
reference_N = {N}
iterations = {m}
burn_in = {burn}
statistics = {stats}

[output]
dir = {out}
{extra}
"""


def write_config(tmp_path, name="run.ini", T=4, kernel="variant = logistic",
                 n_grid="8, 16", M=3, N=200, m=3, burn=1, stats="mse, symdiff, triangle, lambda2",
                 extra="", out=None):
    out = tmp_path / "out" if out is None else out
    path = tmp_path / name
    path.write_text(BASE.format(T=T, kernel=kernel, n_grid=n_grid, M=M, N=N, m=m, burn=burn,
                                stats=stats, out=out, extra=extra))
    return path, out


def read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


def test_single_snapshot(tmp_path):
    cfg, out = write_config(tmp_path, T=0, n_grid="1", M=1, burn=0,
                            extra="trajectories = binary\nnetworks = edgelist")
    assert main(["simulate", "--config", str(cfg)]) == 0
    Z, A = read_trajectory(out / "simulate" / "n1_r0.cmf")
    assert Z.shape == (1, 1, 2) and A.shape == (1, 1, 1) and A[0, 0, 0]
    assert not (out / "simulate" / "n1_r0_latent.csv").exists()
    assert (out / "simulate" / "n1_r0_edges.txt").read_text().splitlines()[1:] == []


def test_rerun_is_byte_identical(tmp_path):
    cfg, out = write_config(tmp_path)
    for cmd in ("simulate", "meanfield", "couple-stats"):
        assert main([cmd, "--config", str(cfg)]) == 0
    first = {p.relative_to(out): p.read_bytes() for p in out.rglob("*")
             if p.is_file() and p.name != "manifest.json"}
    for cmd in ("simulate", "meanfield", "couple-stats"):
        assert main([cmd, "--config", str(cfg), "--workers", "2"]) == 0
    second = {p.relative_to(out): p.read_bytes() for p in out.rglob("*")
              if p.is_file() and p.name != "manifest.json"}
    assert first == second
    assert len(first) > 10


def test_seed_override_changes_output(tmp_path):
    cfg, out = write_config(tmp_path, n_grid="8", M=1)
    assert main(["simulate", "--config", str(cfg)]) == 0
    a = (out / "simulate" / "n8_r0_latent.csv").read_bytes()
    assert main(["simulate", "--config", str(cfg), "--seed", "6"]) == 0
    assert (out / "simulate" / "n8_r0_latent.csv").read_bytes() != a


def test_missing_gamma_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[model]\nT = 3\n")
    assert main(["simulate", "--config", str(path)]) == 2
    assert "gamma" in capsys.readouterr().err


def test_missing_gamma_filled_by_preset(tmp_path):
    path = tmp_path / "p.ini"
    path.write_text(f"[model]\nT = 2\n[experiment]\nn_grid = 5\nreplicates = 1\nburn_in = 0\n"
                    f"[output]\ndir = {tmp_path / 'o'}\n")
    assert main(["simulate", "--config", str(path), "--preset", "desk"]) == 0


def test_no_config_source(capsys):
    assert main(["simulate"]) == 2
    assert "--config" in capsys.readouterr().err


def test_missing_reference_exit_code(tmp_path, capsys):
    cfg, _ = write_config(tmp_path)
    assert main(["couple-stats", "--config", str(cfg)]) == 2
    assert "meanfield" in capsys.readouterr().err


def test_reference_horizon_mismatch(tmp_path):
    cfg, out = write_config(tmp_path)
    assert main(["meanfield", "--config", str(cfg)]) == 0
    other, _ = write_config(tmp_path, name="other.ini", T=6, out=out)
    assert main(["couple-stats", "--config", str(other)]) == 2


def test_degenerate_denominator_exit_code(tmp_path, capsys):
    # every particle keeps a twin reference path under common random numbers,
    # but a coupled replicate with a tiny radius has nobody within reach
    cfg, _ = write_config(tmp_path, kernel="variant = bounded_confidence\nradius = 1e-9",
                          n_grid="8", M=1, m=1)
    assert main(["meanfield", "--config", str(cfg)]) == 0
    assert main(["couple-stats", "--config", str(cfg)]) == 3
    err = capsys.readouterr().err
    assert "numeric failure" in err


def test_report_without_outputs(tmp_path):
    cfg, _ = write_config(tmp_path)
    assert main(["report", "--config", str(cfg)]) == 2


def test_constant_kernel_meanfield_contracts(tmp_path):
    cfg, out = write_config(tmp_path, T=5, kernel="variant = constant\nvalue = 1.0", N=500, m=5)
    assert main(["meanfield", "--config", str(cfg)]) == 0
    rows = read_csv(out / "meanfield_convergence.csv")
    disc = [float(r["disc"]) for r in rows if r["iteration"] != "0"]
    assert len(disc) == 5
    assert all(b <= a for a, b in zip(disc[1:], disc[2:]))
    assert disc[-1] < 0.05


def test_couple_stats_outputs(tmp_path):
    cfg, out = write_config(tmp_path, stats="mse, symdiff, triangle, lambda2, hydro, cond_chaos")
    assert main(["meanfield", "--config", str(cfg)]) == 0
    assert main(["couple-stats", "--config", str(cfg)]) == 0
    mse = read_csv(out / "mse_timeseries.csv")
    assert len(mse) == 5 * 2
    assert {(r["n"], r["replicate_count"]) for r in mse} == {("8", "3"), ("16", "3")}
    for name in ("mse", "symdiff"):
        rows = read_csv(out / f"{name}_timeseries.csv")
        assert [float(r["mean"]) for r in rows if r["time"] == "0"] == [0.0, 0.0]
    by_n = read_csv(out / "triangle_by_n.csv")
    assert [r["n"] for r in by_n] == ["8", "16"] and by_n[0]["burn_in"] == "1"
    gaps = read_csv(out / "hydro_gaps.csv")
    assert {r["n"] for r in gaps} == {"8", "16"}
    assert all(float(r["gap"]) >= 0 for r in gaps)
    assert read_csv(out / "cond_chaos_gaps.csv")
    assert main(["report", "--config", str(cfg)]) == 0
    assert "mse" in (out / "report.txt").read_text()


def test_graphon_constant_kernel(tmp_path):
    c = 0.3
    cfg, out = write_config(tmp_path, T=3, kernel=f"variant = constant\nvalue = {c}",
                            n_grid="40", M=10, stats="multigraphon")
    assert main(["meanfield", "--config", str(cfg)]) == 0
    assert main(["graphon", "--config", str(cfg)]) == 0
    rows = read_csv(out / "graphon_densities.csv")
    by_key = {(r["pattern"], r["layers"]): r for r in rows}
    v = by_key[("vertex", "3")]
    assert float(v["particle_mean"]) == 1.0 and float(v["limit_estimate"]) == 1.0
    e = by_key[("K2", "3")]
    # with B == c the limit is exactly c
    assert float(e["limit_estimate"]) == pytest.approx(c, abs=1e-12)
    # self-loops are stripped, so the particle density has mean c (n - 1) / n
    n = 40
    mean, se = float(e["particle_mean"]), float(e["particle_stderr"])
    assert abs(mean - c * (n - 1) / n) <= 4 * se


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "coevo.cli", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0
    for cmd in ("simulate", "meanfield", "couple-stats", "graphon", "report"):
        assert cmd in res.stdout


def test_bad_seed_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--preset", "desk", "--seed", "-1"])
    assert exc.value.code == 2


def test_workers_do_not_change_simulation(tmp_path):
    cfg, out = write_config(tmp_path, extra="trajectories = binary")
    assert main(["simulate", "--config", str(cfg), "--workers", "3"]) == 0
    Z3, A3 = read_trajectory(out / "simulate" / "n16_r2.cmf")
    assert main(["simulate", "--config", str(cfg)]) == 0
    Z1, A1 = read_trajectory(out / "simulate" / "n16_r2.cmf")
    np.testing.assert_array_equal(Z1, Z3)
    np.testing.assert_array_equal(A1, A3)
