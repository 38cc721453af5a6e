"""The n-agent co-evolving opinion/network system.

Each agent moves toward the degree-normalized average of its neighbours,

    Z_i(t+1) = (1 - gamma) Z_i(t) + gamma L_i(t) + xi_i(t),
    L_i(t)   = sum_j A_ij(t) Z_j(t) / sum_j A_ij(t),

and every unordered pair redraws its edge with probability
``B(A_ij(t), Z_i(t+1), Z_j(t+1))``.  Self-loops are always present.

Trajectories are plain arrays: latent ``Z`` has shape ``(T+1, n, d)`` and the
network ``A`` is a boolean ``(T+1, n, n)`` stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .kernels import KernelSpec
from .rng import Purpose, RngStream

__all__ = [
    "NoiseSpec",
    "InitialLaw",
    "ModelConfig",
    "init_state",
    "initial_latent",
    "noise_draws",
    "step_latent",
    "step_network",
    "simulate",
]


@dataclass(frozen=True)
class NoiseSpec:
    """I.i.d. per (agent, time, coordinate) additive noise."""

    kind: str = "gaussian"
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "zero"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("noise sigma must be >= 0")

    @classmethod
    def zero(cls) -> "NoiseSpec":
        return cls("zero", 0.0)


@dataclass(frozen=True)
class InitialLaw:
    """I.i.d. initial opinions: ``mean + scale * N(0, I_d)``.

    ``scale = 0`` puts every agent at ``mean`` (a point mass).
    """

    mean: tuple[float, ...] | float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("initial scale must be >= 0")

    def mean_vector(self, d: int) -> np.ndarray:
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if m.size == 1:
            return np.full(d, m[0])
        if m.size != d:
            raise ValueError(f"initial mean has {m.size} coordinates, model has d={d}")
        return m


@dataclass(frozen=True)
class ModelConfig:
    n: int
    d: int
    T: int
    gamma: float
    kernel: KernelSpec
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie strictly inside (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def with_n(self, n: int) -> "ModelConfig":
        return replace(self, n=n)


def initial_latent(config: ModelConfig, init: InitialLaw, rng: RngStream,
                   agents=None) -> np.ndarray:
    agents = np.arange(config.n) if agents is None else np.asarray(agents)
    z = rng.latent_normals(Purpose.INIT_LATENT, 0, agents, config.d)
    return init.mean_vector(config.d) + init.scale * z


def noise_draws(config: ModelConfig, rng: RngStream, t: int, agents=None) -> np.ndarray:
    """Noise ``xi(t)`` for the requested agents, keyed by (time, agent, coordinate)."""
    agents = np.arange(config.n) if agents is None else np.asarray(agents)
    if config.noise.kind == "zero" or config.noise.sigma == 0:
        return np.zeros((len(agents), config.d))
    return config.noise.sigma * rng.latent_normals(Purpose.NOISE, t, agents, config.d)


def _draw_edges(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    a = u < p
    np.fill_diagonal(a, True)
    return a


def init_state(config: ModelConfig, init: InitialLaw | None = None,
               rng: RngStream | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``Z(0)`` i.i.d. from ``init`` and ``A(0)`` from ``B0``."""
    init = InitialLaw() if init is None else init
    rng = RngStream(config.seed) if rng is None else rng
    z0 = initial_latent(config, init, rng)
    p = config.kernel.pairwise_b0(z0, z0)
    a0 = _draw_edges(p, rng.pair_uniforms(0, config.n))
    return z0, a0


def step_latent(Z: np.ndarray, A: np.ndarray, gamma: float, xi: np.ndarray) -> np.ndarray:
    """One opinion update; ``A`` must carry its unit diagonal."""
    W = np.asarray(A, dtype=float)
    deg = W.sum(axis=1)
    if np.any(deg <= 0):
        raise AssertionError("zero degree: adjacency is missing its unit diagonal")
    # column-wise row sums keep each agent's reduction independent of n-chunking
    num = np.stack([(W * Z[:, c][None, :]).sum(axis=1) for c in range(Z.shape[1])], axis=1)
    L = num / deg[:, None]
    return (1.0 - gamma) * Z + gamma * L + xi


def step_network(A: np.ndarray, Z_next: np.ndarray, kernel: KernelSpec,
                 rng: RngStream, t: int) -> np.ndarray:
    """Draw ``A(t)`` given ``A(t-1)`` and the updated positions ``Z(t)``."""
    p0, p1 = kernel.pairwise_b_both(Z_next, Z_next)
    p = np.where(A, p1, p0)
    return _draw_edges(p, rng.pair_uniforms(t, A.shape[0]))


def simulate(config: ModelConfig, init: InitialLaw | None = None,
             replicate: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Run the coupled opinion/network dynamics for ``T`` steps.

    The result is a pure function of ``(config, init, replicate)``.
    """
    rng = RngStream(config.seed, replicate)
    Z = np.empty((config.T + 1, config.n, config.d))
    A = np.empty((config.T + 1, config.n, config.n), dtype=bool)
    Z[0], A[0] = init_state(config, init, rng)
    for t in range(config.T):
        Z[t + 1] = step_latent(Z[t], A[t], config.gamma, noise_draws(config, rng, t))
        A[t + 1] = step_network(A[t], Z[t + 1], config.kernel, rng, t + 1)
    return Z, A
