"""Experiment orchestration behind the command-line interface.

Every command writes into ``output_dir``: CSV outputs whose bytes depend only
on the configuration, plus ``manifest.json`` (hashes, seed, version, timings).
Work is split into (n, replicate) cells that run on a process pool; each cell
reads only its keyed random streams, so the worker count never changes any
output byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io as cio
from .config import ExperimentConfig, config_hash, serialize_config
from .graphs import (
    BUILTIN_PATTERNS,
    MultiplexGraph,
    hom_density_multiplex,
    limit_multigraphon_density,
    pattern_multiplex,
)
from .meanfield import ReferenceMeasure, couple, reference_sample
from .panels import PANEL_VERSION, marginal_panel, pair_panel
from .particle import simulate
from .rng import RngStream
from .stats import (
    StatSeries,
    cond_chaos_gap,
    eig_error,
    hydro_gap,
    mse_stat,
    symdiff_density,
    triangle_error,
    write_panel_gaps,
)

__all__ = [
    "REFERENCE_FILE",
    "MissingReference",
    "run_simulate",
    "run_meanfield",
    "run_couple_stats",
    "run_graphon",
    "run_report",
    "graphon_layer_sets",
]

log = logging.getLogger(__name__)

REFERENCE_FILE = "reference.cmfr"
MANIFEST_FILE = "manifest.json"
SERIES_STATS = {"mse": mse_stat, "symdiff": symdiff_density, "triangle": triangle_error,
                "lambda2": eig_error}


class MissingReference(FileNotFoundError):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, cfg: ExperimentConfig, files: list[Path],
                    timings: dict[str, float]) -> None:
    path = out / MANIFEST_FILE
    manifest = json.loads(path.read_text()) if path.exists() else {}
    manifest[command] = {
        "config_sha256": config_hash(cfg),
        "config": serialize_config(cfg),
        "seed": cfg.seed,
        "version": _version(),
        "panel_version": PANEL_VERSION,
        "timings_s": {k: round(v, 4) for k, v in timings.items()},
        "outputs": {f.name: _sha256(f) for f in sorted(files)},
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _limit_threads():
    # single-threaded BLAS keeps floating-point reductions identical in every process
    threadpool_limits(1)


def _worker_init(initializer, *args):
    _limit_threads()
    if initializer is not None:
        initializer(*args)


def _map(fn, tasks, workers: int, initializer=None, initargs=()):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                                 initargs=(initializer, *initargs)) as pool:
            return list(pool.map(fn, tasks))
    _worker_init(initializer, *initargs)
    return [fn(t) for t in tasks]


def _cells(cfg: ExperimentConfig):
    return [(n, r) for n in cfg.n_grid for r in range(cfg.replicates)]


def _fmt(x: float) -> str:
    return repr(float(x))


# -- simulate -----------------------------------------------------------------

def _simulate_cell(args):
    cfg, n, r, out = args
    Z, A = simulate(cfg.model(n), cfg.init, r)
    stem = Path(out) / "simulate" / f"n{n}_r{r}"
    files = []
    if cfg.trajectories == "binary":
        cio.write_trajectory(stem.with_suffix(".cmf"), Z, A)
        files.append(stem.with_suffix(".cmf"))
    elif cfg.trajectories == "csv":
        cio.write_latent_csv(stem.with_name(stem.name + "_latent.csv"), Z)
        files.append(stem.with_name(stem.name + "_latent.csv"))
    if cfg.networks == "edgelist":
        cio.write_edge_list(stem.with_name(stem.name + "_edges.txt"), A)
        files.append(stem.with_name(stem.name + "_edges.txt"))
    elif cfg.networks == "binary" and cfg.trajectories != "binary":
        cio.write_trajectory(stem.with_suffix(".cmf"), Z, A)
        files.append(stem.with_suffix(".cmf"))
    off = A.sum(axis=(1, 2)) - n
    density = off / (n * (n - 1)) if n > 1 else np.zeros(len(A))
    mean_sq = np.sum(Z * Z, axis=2).mean(axis=1)
    rows = [(n, r, t, density[t], mean_sq[t]) for t in range(len(A))]
    return rows, [str(f) for f in files]


def run_simulate(cfg: ExperimentConfig, out: Path, workers: int = 1) -> list[Path]:
    """Particle runs for every (n, replicate) cell."""
    out = Path(out)
    (out / "simulate").mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    results = _map(_simulate_cell, [(cfg, n, r, str(out)) for n, r in _cells(cfg)], workers)
    summary = out / "simulate_summary.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "replicate", "time", "edge_density", "mean_sq_norm"])
        for rows, _ in results:
            for n, r, t, dens, msq in rows:
                w.writerow([n, r, t, _fmt(dens), _fmt(msq)])
    files = [summary] + [Path(f) for _, fs in results for f in fs]
    _write_manifest(out, "simulate", cfg, files, {"simulate": time.perf_counter() - t0})
    return files


# -- meanfield ----------------------------------------------------------------

def run_meanfield(cfg: ExperimentConfig, out: Path, workers: int = 1) -> list[Path]:
    """Reference measure by fixed-point iteration, plus its convergence diagnostics."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    _limit_threads()
    N = cfg.reference_N
    res = reference_sample(cfg.model(N), N, cfg.iterations, cfg.init, workers=workers)
    ref_path = out / REFERENCE_FILE
    cio.write_reference(ref_path, res.measure)
    conv = out / "meanfield_convergence.csv"
    with open(conv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "disc"] + res.panel_names)
        for i, (disc, deltas) in enumerate(zip(res.disc, res.deltas), 1):
            w.writerow([i, _fmt(disc)] + [_fmt(x) for x in deltas])
    timings = {"total": time.perf_counter() - t0}
    timings.update({f"iteration_{i}": s for i, s in enumerate(res.timings)})
    _write_manifest(out, "meanfield", cfg, [ref_path, conv], timings)
    return [ref_path, conv]


def _load_reference(out: Path, cfg: ExperimentConfig) -> ReferenceMeasure:
    path = Path(out) / REFERENCE_FILE
    if not path.exists():
        raise MissingReference(f"reference measure {path} not found; run 'meanfield' first")
    ref = cio.read_reference(path)
    if ref.horizon < cfg.T or ref.d != cfg.d:
        raise MissingReference(f"reference {path} has horizon {ref.horizon}, d={ref.d}; "
                               f"config needs T={cfg.T}, d={cfg.d}")
    return ref


# -- couple-stats -------------------------------------------------------------

_WORKER_REF: dict[str, ReferenceMeasure] = {}


def _set_reference(path: str):
    _WORKER_REF["ref"] = cio.read_reference(path)


def _couple_cell(args):
    cfg, n, r = args
    ref = _WORKER_REF["ref"]
    run = couple(cfg.model(n), ref, r, cfg.init)
    series = {name: SERIES_STATS[name](run).values[0]
              for name in SERIES_STATS if name in cfg.statistics}
    gaps = {}
    if "hydro" in cfg.statistics:
        gaps["hydro"] = hydro_gap(run.particle_Z, ref, marginal_panel())
    if "cond_chaos" in cfg.statistics:
        gaps["cond_chaos"] = cond_chaos_gap(run.particle_Z, run.particle_A, 0, ref,
                                            cfg.kernel, pair_panel())
    return n, r, series, gaps


def run_couple_stats(cfg: ExperimentConfig, out: Path, workers: int = 1) -> list[Path]:
    """Coupled particle/mean-field statistics, one time series and one per-n summary per statistic."""
    out = Path(out)
    ref_path = out / REFERENCE_FILE
    _load_reference(out, cfg)
    t0 = time.perf_counter()
    results = _map(_couple_cell, [(cfg, n, r) for n, r in _cells(cfg)], workers,
                   _set_reference, (str(ref_path),))
    _WORKER_REF.clear()
    files: list[Path] = []
    for name in (s for s in SERIES_STATS if s in cfg.statistics):
        per_n = {n: StatSeries(name, np.stack([s[name] for m, _, s, _ in results if m == n]))
                 for n in cfg.n_grid}
        ts, by_n, reps = (out / f"{name}_timeseries.csv", out / f"{name}_by_n.csv",
                          out / f"{name}_replicates.csv")
        with open(ts, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "time", "mean", "stderr", "replicate_count"])
            for n, s in per_n.items():
                for t, (m, e) in enumerate(zip(s.mean, s.stderr)):
                    w.writerow([n, t, _fmt(m), _fmt(e), s.replicate_count])
        with open(by_n, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "mean", "stderr", "burn_in", "replicate_count"])
            for n, s in per_n.items():
                m, e = s.time_average(cfg.burn_in)
                w.writerow([n, _fmt(m), _fmt(e), cfg.burn_in, s.replicate_count])
        with open(reps, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "replicate", "time", "value"])
            for n, s in per_n.items():
                for r, row in enumerate(s.values):
                    w.writerows([n, r, t, _fmt(v)] for t, v in enumerate(row))
        files += [ts, by_n, reps]
    for name, panel in (("hydro", marginal_panel()), ("cond_chaos", pair_panel())):
        if name not in cfg.statistics:
            continue
        rows = []
        for n in cfg.n_grid:
            g = np.mean([gp[name] for m, _, _, gp in results if m == n], axis=0)
            rows += [(f, n, v) for f, v in zip(panel.names, g)]
        path = out / f"{name}_gaps.csv"
        write_panel_gaps(path, rows)
        files.append(path)
    _write_manifest(out, "couple-stats", cfg, files, {"couple-stats": time.perf_counter() - t0})
    return files


# -- graphon ------------------------------------------------------------------

def graphon_layer_sets(T: int) -> list[tuple[int, ...]]:
    """Singletons ``{s}`` and consecutive pairs ``{s, s+1}``."""
    return [(s,) for s in range(T + 1)] + [(s, s + 1) for s in range(T)]


def _graphon_cell(args):
    cfg, n, r = args
    _, A = simulate(cfg.model(n), cfg.init, r)
    M = MultiplexGraph.from_adjacency(A)
    out = []
    for pname, H in BUILTIN_PATTERNS.items():
        for S in graphon_layer_sets(cfg.T):
            out.append(hom_density_multiplex(pattern_multiplex(H, S, cfg.T + 1), M))
    return n, r, np.array(out)


def _graphon_limit(args):
    cfg, pname, S = args
    H = pattern_multiplex(BUILTIN_PATTERNS[pname], S, cfg.T + 1)
    rng = RngStream(cfg.seed, 2**40 + 1)
    return limit_multigraphon_density(H, _WORKER_REF["ref"], cfg.kernel, cfg.graphon_samples, rng)


def run_graphon(cfg: ExperimentConfig, out: Path, workers: int = 1) -> list[Path]:
    """Particle multiplex homomorphism densities against the limiting multigraphon."""
    out = Path(out)
    ref_path = out / REFERENCE_FILE
    _load_reference(out, cfg)
    t0 = time.perf_counter()
    keys = [(p, S) for p in BUILTIN_PATTERNS for S in graphon_layer_sets(cfg.T)]
    limits = _map(_graphon_limit, [(cfg, p, S) for p, S in keys], workers,
                  _set_reference, (str(ref_path),))
    cells = _map(_graphon_cell, [(cfg, n, r) for n, r in _cells(cfg)], workers)
    _WORKER_REF.clear()
    path = out / "graphon_densities.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pattern", "layers", "n", "particle_mean", "particle_stderr",
                    "limit_estimate", "limit_stderr", "replicate_count"])
        for n in cfg.n_grid:
            vals = np.stack([v for m, _, v in cells if m == n])
            mean = vals.mean(axis=0)
            se = (vals.std(axis=0, ddof=1) / np.sqrt(len(vals)) if len(vals) > 1
                  else np.zeros(len(keys)))
            for k, (p, S) in enumerate(keys):
                w.writerow([p, ";".join(map(str, S)), n, _fmt(mean[k]), _fmt(se[k]),
                            _fmt(limits[k][0]), _fmt(limits[k][1]), len(vals)])
    _write_manifest(out, "graphon", cfg, [path], {"graphon": time.perf_counter() - t0})
    return [path]


# -- report -------------------------------------------------------------------

def run_report(cfg: ExperimentConfig, out: Path) -> Path:
    """Concatenate the per-n summaries and diagnostics found in ``out``."""
    out = Path(out)
    parts = []
    for path in sorted(out.glob("*_by_n.csv")):
        parts.append(f"== {path.stem[:-5]} (burn-in average) ==\n{path.read_text()}")
    for name in ("hydro_gaps.csv", "cond_chaos_gaps.csv", "meanfield_convergence.csv",
                 "graphon_densities.csv"):
        if (out / name).exists():
            parts.append(f"== {name[:-4]} ==\n{(out / name).read_text()}")
    if not parts:
        raise FileNotFoundError(f"no summaries found in {out}")
    report = out / "report.txt"
    report.write_text("\n".join(parts))
    return report
