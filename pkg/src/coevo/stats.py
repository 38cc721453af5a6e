"""Comparison statistics between coupled particle and mean-field runs, and
empirical-measure gaps against a reference measure.

Every coupled statistic is computed per replicate as a time series, then
aggregated into a ``StatSeries`` (replicate mean and naive standard error).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graphs import C3, Graph, hom_density_graph, scaled_lambda2
from .kernels import KernelSpec, b_s_series
from .meanfield import CoupledRun, ReferenceMeasure
from .panels import TestFunctionPanel, shifted_mean

__all__ = [
    "StatSeries",
    "mse_stat",
    "symdiff_density",
    "triangle_error",
    "eig_error",
    "hydro_gap",
    "cond_chaos_gap",
    "write_panel_gaps",
]


@dataclass
class StatSeries:
    """Per-replicate time series ``values[replicate, time]``."""

    name: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("values must have shape (replicates >= 1, times)")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{self.name}: non-finite statistic values")
        self.values = v

    @property
    def replicate_count(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1] - 1

    @property
    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        M = self.replicate_count
        if M < 2:
            return np.zeros(self.values.shape[1])
        return self.values.std(axis=0, ddof=1) / np.sqrt(M)

    def time_average(self, burn_in: int = 20) -> tuple[float, float]:
        """Mean over ``t >= burn_in`` per replicate, then replicate mean and stderr."""
        if not 0 <= burn_in <= self.T:
            raise ValueError(f"burn_in={burn_in} outside [0, T={self.T}]")
        per_rep = self.values[:, burn_in:].mean(axis=1)
        se = per_rep.std(ddof=1) / np.sqrt(len(per_rep)) if len(per_rep) > 1 else 0.0
        return float(per_rep.mean()), float(se)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "mean", "stderr", "replicate_count"])
            for t, (m, s) in enumerate(zip(self.mean, self.stderr)):
                w.writerow([t, repr(float(m)), repr(float(s)), self.replicate_count])

    def write_long_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replicate", "time", "value"])
            for r, row in enumerate(self.values):
                for t, v in enumerate(row):
                    w.writerow([r, t, repr(float(v))])


def _as_runs(runs) -> list[CoupledRun]:
    runs = [runs] if isinstance(runs, CoupledRun) else list(runs)
    if not runs:
        raise ValueError("need at least one coupled run")
    shape = runs[0].particle_Z.shape
    for r in runs:
        if r.particle_Z.shape != shape or r.mf_Z.shape != shape:
            raise ValueError("coupled runs disagree in shape")
        if r.particle_A.shape != r.mf_A.shape or r.particle_A.shape[0] != shape[0]:
            raise ValueError("network trajectories disagree in shape")
    return runs


def _series(name, runs, per_run) -> StatSeries:
    return StatSeries(name, np.stack([per_run(r) for r in _as_runs(runs)]))


def _mse(r: CoupledRun) -> np.ndarray:
    diff = r.particle_Z - r.mf_Z
    return np.sum(diff * diff, axis=2).mean(axis=1)


def mse_stat(runs) -> StatSeries:
    """Squared latent distance (summed over coordinates), averaged over agents."""
    return _series("mse", runs, _mse)


def _symdiff(r: CoupledRun) -> np.ndarray:
    n = r.n
    if n < 2:
        return np.zeros(r.T + 1)
    # diagonals agree by construction, so the full count is twice the off-diagonal pairs
    disagree = np.count_nonzero(r.particle_A != r.mf_A, axis=(1, 2))
    return disagree / (n * (n - 1))


def symdiff_density(runs) -> StatSeries:
    """Fraction of unordered pairs where the two networks disagree."""
    return _series("symdiff", runs, _symdiff)


def _triangles(A: np.ndarray) -> np.ndarray:
    return np.array([hom_density_graph(C3, Graph.from_adjacency(a)) for a in A])


def triangle_error(runs) -> StatSeries:
    """``t(C3, mean-field net) - t(C3, particle net)`` with self-loops stripped."""
    return _series("triangle", runs, lambda r: _triangles(r.mf_A) - _triangles(r.particle_A))


def _lambda2(A: np.ndarray) -> np.ndarray:
    return np.array([scaled_lambda2(a) for a in A])


def eig_error(runs) -> StatSeries:
    """Scaled second eigenvalue, mean-field minus particle (unit diagonal kept)."""
    return _series("lambda2", runs, lambda r: _lambda2(r.mf_A) - _lambda2(r.particle_A))


def _check_time(t, horizon):
    t = horizon if t is None else int(t)
    if not 0 <= t <= horizon:
        raise ValueError(f"time {t} outside [0, {horizon}]")
    return t


def hydro_gap(particle_Z: np.ndarray, ref: ReferenceMeasure, panel: TestFunctionPanel,
              t: int | None = None) -> np.ndarray:
    """``|<mu^n_t, f> - <mu_t, f>|`` for every panel function (default ``t = T``)."""
    Z = np.asarray(particle_Z, dtype=float)
    if Z.ndim != 3 or Z.shape[2] != ref.d:
        raise ValueError("particle trajectory must be (T+1, n, d) with the reference's d")
    if ref.horizon < Z.shape[0] - 1:
        raise ValueError("reference horizon shorter than particle run")
    t = _check_time(t, Z.shape[0] - 1)
    return np.abs(panel.expectations(Z[t]) - panel.expectations(ref.marginal(t)))


def cond_chaos_gap(particle_Z: np.ndarray, particle_A: np.ndarray, agent: int,
                   ref: ReferenceMeasure, kernel: KernelSpec, panel: TestFunctionPanel,
                   t: int | None = None) -> np.ndarray:
    """Gap between agent ``i``'s pair-empirical measure and its mean-field conditional law.

    The particle side averages ``f(Z_i(t), Z_j(t), A_ij(t))`` over all ``j``
    including ``j = i``.  The mean-field side averages over reference paths
    ``Z'`` with the edge drawn from ``B_t`` of the pair (own path, ``Z'``).
    """
    Z = np.asarray(particle_Z, dtype=float)
    A = np.asarray(particle_A)
    T = Z.shape[0] - 1
    if A.shape[0] != T + 1 or A.shape[1:] != (Z.shape[1], Z.shape[1]):
        raise ValueError("network and latent trajectories disagree in shape")
    if ref.horizon < T:
        raise ValueError("reference horizon shorter than particle run")
    if not 0 <= agent < Z.shape[1]:
        raise ValueError(f"agent {agent} out of range")
    t = _check_time(t, T)
    x = Z[t, agent]
    own = Z[: t + 1, agent]
    partners = ref.samples[:, : t + 1, :]
    b = b_s_series(kernel, np.broadcast_to(own, partners.shape), partners)[:, -1]
    y_ref = partners[:, t, :]
    a_part = A[t, agent].astype(float)
    gaps = np.empty(len(panel))
    for k, f in enumerate(panel):
        lhs = shifted_mean(np.broadcast_to(f.fn(x, Z[t], a_part), a_part.shape))
        f0 = np.broadcast_to(f.fn(x, y_ref, np.zeros(ref.N)), (ref.N,))
        f1 = np.broadcast_to(f.fn(x, y_ref, np.ones(ref.N)), (ref.N,))
        rhs = shifted_mean(f0 + b * (f1 - f0))
        gaps[k] = abs(lhs - rhs)
    return gaps


def write_panel_gaps(path, rows: Sequence[tuple[str, int, float]]) -> None:
    """Rows of ``(function_name, n, gap)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["function_name", "n", "gap"])
        for name, n, gap in rows:
            w.writerow([name, int(n), repr(float(gap))])
