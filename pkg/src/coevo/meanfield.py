"""Limiting mean-field process.

In the limit each agent no longer sees a random network; it sees the law of
a typical partner.  Its drift is the ``B_s``-weighted mean of the partner's
position, where ``B_s`` is the probability that the edge between the two
paths is present at time ``s``:

    L(s) = E[Z'(s) B_s(Z[s], Z'[s]) | Z[s]] / E[B_s(Z[s], Z'[s]) | Z[s]].

The law of ``Z'`` is unknown, so it is replaced by a reference measure built
by fixed-point iteration: start from the empirical measure of an N-particle
run, then repeatedly resample N mean-field trajectories against the previous
iterate.
"""

from __future__ import annotations

import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, b_s_series
from .panels import TestFunctionPanel, marginal_panel
from .particle import (InitialLaw, ModelConfig, _draw_edges, initial_latent, noise_draws,
                       simulate, step_network)
from .rng import RngStream

__all__ = [
    "DegenerateDenominator",
    "ReferenceMeasure",
    "MeanFieldTrajectory",
    "ReferenceResult",
    "CoupledRun",
    "REFERENCE_REPLICATE",
    "EPS_DEN",
    "mf_drift",
    "mean_field_sample",
    "reference_sample",
    "generate_limit_network",
    "couple",
]

log = logging.getLogger(__name__)

EPS_DEN = 1e-12
# Replicate key reserved for reference construction; coupled runs use 0..M-1.
REFERENCE_REPLICATE = 2**48
_CHUNK = 128


class DegenerateDenominator(ArithmeticError):
    """The B_s-weighted partner mass vanished (no reachable partner)."""

    def __init__(self, time: int, agent: int, mass: float, iteration: int | None = None):
        self.time, self.agent, self.mass, self.iteration = time, agent, mass, iteration
        super().__init__(self._message())

    def _message(self):
        where = "" if self.iteration is None else f" in iteration {self.iteration}"
        return (f"partner mass {self.mass:.3g} < {EPS_DEN:g} for agent {self.agent} "
                f"at time {self.time}{where}")

    def at_iteration(self, iteration: int) -> "DegenerateDenominator":
        return DegenerateDenominator(self.time, self.agent, self.mass, iteration)


@dataclass(frozen=True)
class ReferenceMeasure:
    """Equal-weight empirical measure on paths; ``samples`` is ``(N, T+1, d)``."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.ascontiguousarray(self.samples, dtype=float)
        if s.ndim != 3 or s.shape[0] < 1:
            raise ValueError("reference samples must have shape (N, T+1, d) with N >= 1")
        if not np.all(np.isfinite(s)):
            raise ValueError("reference samples must be finite")
        object.__setattr__(self, "samples", s)

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    @property
    def horizon(self) -> int:
        return self.samples.shape[1] - 1

    @property
    def d(self) -> int:
        return self.samples.shape[2]

    def marginal(self, t: int) -> np.ndarray:
        return self.samples[:, t, :]

    @classmethod
    def from_latent(cls, Z: np.ndarray) -> "ReferenceMeasure":
        """From a latent trajectory array ``(T+1, n, d)``."""
        return cls(np.transpose(Z, (1, 0, 2)))


@dataclass
class MeanFieldTrajectory:
    Z: np.ndarray  # (T+1, k, d)
    L: np.ndarray  # (T, k, d), the drift used at each step

    @property
    def k(self) -> int:
        return self.Z.shape[1]


def mf_drift(own_traj, ref: ReferenceMeasure, kernel: KernelSpec) -> np.ndarray:
    """Drift for one path ``own_traj (s+1, d)`` against the reference measure.

    Recomputes ``B_s`` from scratch for every reference path; the sampler
    uses an incremental cache instead.
    """
    own = np.asarray(own_traj, dtype=float)
    if own.ndim == 1:
        own = own[:, None]
    s = own.shape[0] - 1
    if s > ref.horizon:
        raise ValueError(f"reference horizon {ref.horizon} < {s}")
    partners = ref.samples[:, : s + 1, :]
    w = b_s_series(kernel, own[None, :, :], partners)[:, -1]
    mass = float(np.sum(w))
    if mass < EPS_DEN:
        raise DegenerateDenominator(s, 0, mass)
    return np.array([np.sum(w * partners[:, s, c]) for c in range(own.shape[1])]) / mass


def _sample_chunk(ref_samples, agents, config: ModelConfig, init: InitialLaw, replicate: int):
    rng = RngStream(config.seed, replicate)
    kernel, gamma, T = config.kernel, config.gamma, config.T
    k = len(agents)
    Z = np.empty((T + 1, k, config.d))
    L = np.empty((T, k, config.d))
    Z[0] = initial_latent(config, init, rng, agents)
    bs = None
    for s in range(T):
        partners = ref_samples[:, s, :]
        if s == 0:
            bs = kernel.pairwise_b0(Z[0], partners)
        else:
            p0, p1 = kernel.pairwise_b_both(Z[s], partners)
            bs = bs * p1 + (1.0 - bs) * p0
        bs = np.ascontiguousarray(bs)
        mass = bs.sum(axis=1)
        bad = np.flatnonzero(mass < EPS_DEN)
        if bad.size:
            raise DegenerateDenominator(s, int(agents[bad[0]]), float(mass[bad[0]]))
        for c in range(config.d):
            L[s, :, c] = (bs * partners[:, c][None, :]).sum(axis=1) / mass
        Z[s + 1] = (1.0 - gamma) * Z[s] + gamma * L[s] + noise_draws(config, rng, s, agents)
    return Z, L


def _sample_chunk_star(args):
    return _sample_chunk(*args)


def mean_field_sample(ref: ReferenceMeasure, k: int, config: ModelConfig,
                      init: InitialLaw | None = None, replicate: int = 0,
                      workers: int = 1) -> MeanFieldTrajectory:
    """Sample ``k`` mean-field trajectories against ``ref``.

    Agent ``i`` reads the same initial-state and noise keys as particle ``i``
    of ``simulate(config, init, replicate)``, which is what couples the two
    systems.  Agents are processed in fixed chunks, so the output does not
    depend on ``workers``.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if ref.horizon < config.T:
        raise ValueError(f"reference horizon {ref.horizon} < T={config.T}")
    if ref.d != config.d:
        raise ValueError(f"reference has d={ref.d}, model has d={config.d}")
    init = InitialLaw() if init is None else init
    if k == 0:
        return MeanFieldTrajectory(np.empty((config.T + 1, 0, config.d)),
                                   np.empty((config.T, 0, config.d)))
    tasks = [(ref.samples, np.arange(lo, min(lo + _CHUNK, k)), config, init, replicate)
             for lo in range(0, k, _CHUNK)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_sample_chunk_star, tasks))
    else:
        parts = [_sample_chunk(*t) for t in tasks]
    Z = np.concatenate([p[0] for p in parts], axis=1)
    L = np.concatenate([p[1] for p in parts], axis=1)
    return MeanFieldTrajectory(Z, L)


def marginal_discrepancy(a: ReferenceMeasure, b: ReferenceMeasure,
                         panel: TestFunctionPanel) -> np.ndarray:
    """Per-function ``max_t |<a_t, f> - <b_t, f>|``."""
    T = min(a.horizon, b.horizon)
    gaps = np.zeros(len(panel))
    for t in range(T + 1):
        ea = panel.expectations(a.marginal(t))
        eb = panel.expectations(b.marginal(t))
        gaps = np.maximum(gaps, np.abs(ea - eb))
    return gaps


@dataclass
class ReferenceResult:
    measure: ReferenceMeasure
    disc: list[float] = field(default_factory=list)  # disc[i-1] compares iterate i with i-1
    deltas: list[np.ndarray] = field(default_factory=list)
    panel_names: list[str] = field(default_factory=list)
    timings: list[float] = field(default_factory=list)


def reference_sample(config: ModelConfig, N: int, m: int, init: InitialLaw | None = None,
                     replicate: int = REFERENCE_REPLICATE, fresh_noise: bool = False,
                     workers: int = 1, panel: TestFunctionPanel | None = None) -> ReferenceResult:
    """Fixed-point iteration for the reference measure.

    Iterate 0 is the empirical measure of an ``N``-particle run; iterate
    ``i + 1`` is the empirical measure of ``N`` mean-field trajectories driven
    by iterate ``i``.  By default every iterate reads the same initial-state
    and noise keys (common random numbers), so successive iterates differ only
    through the drift and the discrepancy contracts instead of plateauing at
    Monte-Carlo noise.  ``fresh_noise=True`` gives each iterate its own keys.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    if m < 0:
        raise ValueError("m must be >= 0")
    init = InitialLaw() if init is None else init
    panel = marginal_panel() if panel is None else panel
    t0 = time.perf_counter()
    Z0, _ = simulate(config.with_n(N), init, replicate)
    current = ReferenceMeasure.from_latent(Z0)
    result = ReferenceResult(current, panel_names=panel.names,
                             timings=[time.perf_counter() - t0])
    for i in range(1, m + 1):
        t0 = time.perf_counter()
        rep = replicate + i if fresh_noise else replicate
        try:
            traj = mean_field_sample(current, N, config.with_n(N), init, rep, workers)
        except DegenerateDenominator as exc:
            raise exc.at_iteration(i) from exc
        nxt = ReferenceMeasure.from_latent(traj.Z)
        deltas = marginal_discrepancy(nxt, current, panel)
        result.deltas.append(deltas)
        result.disc.append(float(deltas.max()))
        result.timings.append(time.perf_counter() - t0)
        log.info("reference iteration %d: disc=%.3g", i, result.disc[-1])
        current = nxt
    result.measure = current
    tail = result.disc[-3:]
    # indicator expectations move on a 1/N lattice; smaller increases are not signal
    if len(tail) == 3 and any(b > a + 1.0 / N for a, b in zip(tail, tail[1:])):
        warnings.warn(f"reference iteration not contracting over last 3 iterations: {tail}",
                      RuntimeWarning, stacklevel=2)
    return result


def generate_limit_network(Z: np.ndarray, kernel: KernelSpec, rng: RngStream) -> np.ndarray:
    """Sample the edge chains of every pair given completed trajectories ``(T+1, k, d)``.

    Each pair follows its own two-state chain (``B0`` at time 0, then
    ``B(previous, z_i(s), z_j(s))``) using the keyed edge uniforms; the
    trajectories themselves are never influenced by the network.
    """
    Z = np.asarray(Z, dtype=float)
    T1, k, _ = Z.shape
    if k < 1:
        raise ValueError("need at least one trajectory")
    A = np.empty((T1, k, k), dtype=bool)
    A[0] = _draw_edges(kernel.pairwise_b0(Z[0], Z[0]), rng.pair_uniforms(0, k))
    for s in range(1, T1):
        A[s] = step_network(A[s - 1], Z[s], kernel, rng, s)
    return A


@dataclass
class CoupledRun:
    particle_Z: np.ndarray
    particle_A: np.ndarray
    mf_Z: np.ndarray
    mf_A: np.ndarray
    mf_L: np.ndarray
    manifest: dict

    @property
    def n(self) -> int:
        return self.particle_Z.shape[1]

    @property
    def T(self) -> int:
        return self.particle_Z.shape[0] - 1


def couple(config: ModelConfig, ref: ReferenceMeasure, replicate: int = 0,
           init: InitialLaw | None = None) -> CoupledRun:
    """Particle run and mean-field run (k = n) sharing initial states, noise and edge uniforms."""
    init = InitialLaw() if init is None else init
    Zp, Ap = simulate(config, init, replicate)
    mf = mean_field_sample(ref, config.n, config, init, replicate)
    Am = generate_limit_network(mf.Z, config.kernel, RngStream(config.seed, replicate))
    manifest = {
        "seed": config.seed,
        "replicate": replicate,
        "n": config.n,
        "T": config.T,
        "shared_keys": ["initial_latent(agent, coord)", "noise(time, agent, coord)",
                        "edge(time, min(i,j), max(i,j))"],
        "reference_N": ref.N,
    }
    return CoupledRun(Zp, Ap, mf.Z, Am, mf.L, manifest)
