"""Interaction kernels and the per-pair edge chain.

A kernel supplies the initial edge probability ``B0(z1, z2)`` and the
transition probability ``B(a, z1, z2)`` of an edge that was in state ``a`` at
the previous step.  All evaluators broadcast over leading axes; the last axis
holds the ``d`` latent coordinates.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.special import expit

__all__ = [
    "Regime",
    "Logistic",
    "BoundedConfidence",
    "Custom",
    "KernelSpec",
    "EdgeChainLaw",
    "logistic_kernel",
    "clsna_kernel",
    "bounded_confidence_kernel",
    "constant_kernel",
    "eval_b0",
    "eval_b",
    "b_hat",
    "b_s",
    "b_s_series",
    "edge_chain_law",
    "joint_presence_probability",
    "kernel_to_dict",
    "kernel_from_dict",
]


class Regime(enum.Enum):
    EXP_DECAY = "exp_decay"
    FINITE_RANGE = "finite_range"


@dataclass(frozen=True)
class Logistic:
    """``logit B(a, z1, z2) = intercept + persistence * a - distance_slope * |z1 - z2|``."""

    intercept: float
    distance_slope: float
    persistence: float

    def __post_init__(self):
        if self.distance_slope < 0 or self.persistence < 0:
            raise ValueError("distance_slope and persistence must be >= 0")

    def b0(self, z1, z2):
        return expit(self.intercept - self.distance_slope * _dist(z1, z2))

    def b(self, a, z1, z2):
        return expit(self.intercept + self.persistence * np.asarray(a, dtype=float)
                     - self.distance_slope * _dist(z1, z2))

    def b_both(self, z1, z2):
        x = self.intercept - self.distance_slope * _dist(z1, z2)
        return expit(x), expit(x + self.persistence)


@dataclass(frozen=True)
class BoundedConfidence:
    """Indicator kernel ``1{|z1 - z2| <= radius}``; no persistence."""

    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be > 0")

    def b0(self, z1, z2):
        return (_dist(z1, z2) <= self.radius).astype(float)

    def b(self, a, z1, z2):
        v = self.b0(z1, z2)
        return v * np.ones_like(np.asarray(a, dtype=float))

    def b_both(self, z1, z2):
        v = self.b0(z1, z2)
        return v, v


@dataclass(frozen=True)
class Custom:
    """User-supplied evaluators.

    ``b0_fn(z1, z2)`` and ``b_fn(a, z1, z2)`` must broadcast like numpy ufuncs
    over leading axes (the last axis is the coordinate axis).  ``label`` and
    ``params`` are only used to serialize the built-in constant kernels.
    """

    b0_fn: Callable[..., Any]
    b_fn: Callable[..., Any]
    label: str | None = None
    params: tuple = ()

    def b0(self, z1, z2):
        return np.asarray(self.b0_fn(z1, z2), dtype=float)

    def b(self, a, z1, z2):
        return np.asarray(self.b_fn(a, z1, z2), dtype=float)

    def b_both(self, z1, z2):
        return self.b(0, z1, z2), self.b(1, z1, z2)


@dataclass(frozen=True)
class KernelSpec:
    variant: Logistic | BoundedConfidence | Custom
    regime: Regime = Regime.EXP_DECAY
    decay_constant: float = 1.0  # metadata only, never used numerically
    name: str = field(default="", compare=False)

    # Vectorized, clamped evaluators.  ``pairwise_*`` take point clouds
    # ``X (k, d)`` and ``Y (m, d)`` and return ``(k, m)`` matrices.

    def b0(self, z1, z2) -> np.ndarray:
        return np.clip(self.variant.b0(z1, z2), 0.0, 1.0)

    def b(self, a, z1, z2) -> np.ndarray:
        return np.clip(self.variant.b(a, z1, z2), 0.0, 1.0)

    def b_both(self, z1, z2) -> tuple[np.ndarray, np.ndarray]:
        """``(B(0, z1, z2), B(1, z1, z2))`` sharing the distance computation."""
        p0, p1 = self.variant.b_both(z1, z2)
        shape = np.broadcast_shapes(np.shape(z1)[:-1], np.shape(z2)[:-1])
        p0 = np.broadcast_to(np.clip(p0, 0.0, 1.0), shape)
        p1 = np.broadcast_to(np.clip(p1, 0.0, 1.0), shape)
        return p0, p1

    def pairwise_b0(self, X, Y) -> np.ndarray:
        return self.b0(X[:, None, :], Y[None, :, :])

    def pairwise_b_both(self, X, Y) -> tuple[np.ndarray, np.ndarray]:
        return self.b_both(X[:, None, :], Y[None, :, :])

    def validate_on_grid(self, grid) -> None:
        """Spot-check range and symmetry on every ordered pair of ``grid`` points."""
        grid = np.atleast_2d(np.asarray(grid, dtype=float))
        X, Y = grid[:, None, :], grid[None, :, :]
        for label, vals, swapped in (
            ("B0", self.variant.b0(X, Y), self.variant.b0(Y, X)),
            ("B(0,.)", self.variant.b(0, X, Y), self.variant.b(0, Y, X)),
            ("B(1,.)", self.variant.b(1, X, Y), self.variant.b(1, Y, X)),
        ):
            vals = np.asarray(vals, dtype=float)
            if np.any(~np.isfinite(vals)) or vals.min() < -1e-12 or vals.max() > 1 + 1e-12:
                raise ValueError(f"kernel {label} leaves [0, 1] on the validation grid")
            if not np.allclose(vals, swapped, rtol=0, atol=1e-12):
                raise ValueError(f"kernel {label} is not symmetric on the validation grid")


def _dist(z1, z2) -> np.ndarray:
    diff = np.asarray(z1, dtype=float) - np.asarray(z2, dtype=float)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def logistic_kernel(intercept=1.0, distance_slope=0.5, persistence=1.0) -> KernelSpec:
    """Logistic link; the defaults give the benchmark kernel
    ``B(a, z1, z2) = 1 / (1 + exp(0.5 |z1 - z2| - 1 - a))``."""
    return KernelSpec(Logistic(intercept, distance_slope, persistence), Regime.EXP_DECAY,
                      decay_constant=distance_slope, name="logistic")


def clsna_kernel(alpha: float, delta: float) -> KernelSpec:
    """Single-type CLSNA link ``logit B = alpha + delta * a - |z1 - z2|``."""
    return KernelSpec(Logistic(alpha, 1.0, delta), Regime.EXP_DECAY, decay_constant=1.0,
                      name="clsna")


def bounded_confidence_kernel(radius: float) -> KernelSpec:
    return KernelSpec(BoundedConfidence(radius), Regime.FINITE_RANGE, decay_constant=radius,
                      name="bounded_confidence")


def constant_kernel(value: float, initial: float | None = None) -> KernelSpec:
    """``B == value`` for both edge states and ``B0 == initial`` (defaults to ``value``)."""
    b0v = value if initial is None else initial
    if not (0 <= value <= 1 and 0 <= b0v <= 1):
        raise ValueError("constant kernel values must lie in [0, 1]")

    def b0_fn(z1, z2):
        shape = np.broadcast_shapes(np.shape(z1)[:-1], np.shape(z2)[:-1])
        return np.full(shape, float(b0v))

    def b_fn(a, z1, z2):
        shape = np.broadcast_shapes(np.shape(a), np.shape(z1)[:-1], np.shape(z2)[:-1])
        return np.full(shape, float(value))

    return KernelSpec(Custom(b0_fn, b_fn, label="constant", params=(float(value), float(b0v))),
                      Regime.EXP_DECAY, name="constant")


def kernel_to_dict(kernel: KernelSpec) -> dict[str, Any]:
    v = kernel.variant
    if isinstance(v, Logistic):
        out = {"variant": "logistic", "intercept": v.intercept,
               "distance_slope": v.distance_slope, "persistence": v.persistence}
    elif isinstance(v, BoundedConfidence):
        out = {"variant": "bounded_confidence", "radius": v.radius}
    elif v.label == "constant":
        out = {"variant": "constant", "value": v.params[0], "initial": v.params[1]}
    else:
        raise ValueError("custom kernels with arbitrary callables cannot be serialized")
    out["regime"] = kernel.regime.value
    out["decay_constant"] = kernel.decay_constant
    return out


def kernel_from_dict(spec: dict[str, Any]) -> KernelSpec:
    spec = dict(spec)
    tag = spec.pop("variant", None)
    regime = spec.pop("regime", None)
    decay = spec.pop("decay_constant", None)
    if tag == "logistic":
        k = logistic_kernel(float(spec.pop("intercept", 1.0)),
                            float(spec.pop("distance_slope", 0.5)),
                            float(spec.pop("persistence", 1.0)))
    elif tag == "bounded_confidence":
        if "radius" not in spec:
            raise KeyError("radius")
        k = bounded_confidence_kernel(float(spec.pop("radius")))
    elif tag == "constant":
        if "value" not in spec:
            raise KeyError("value")
        value = float(spec.pop("value"))
        initial = spec.pop("initial", None)
        k = constant_kernel(value, None if initial is None else float(initial))
    else:
        raise ValueError(f"unknown kernel variant {tag!r}")
    if spec:
        raise ValueError(f"unexpected kernel fields: {sorted(spec)}")
    changes = {}
    if regime is not None:
        changes["regime"] = Regime(regime)
    if decay is not None:
        if not float(decay) > 0:
            raise ValueError("decay_constant must be > 0")
        changes["decay_constant"] = float(decay)
    if changes:
        k = KernelSpec(k.variant, changes.get("regime", k.regime),
                       changes.get("decay_constant", k.decay_constant), k.name)
    return k


# -- scalar operations -------------------------------------------------------

def _check_points(z1, z2) -> tuple[np.ndarray, np.ndarray]:
    z1 = np.atleast_1d(np.asarray(z1, dtype=float))
    z2 = np.atleast_1d(np.asarray(z2, dtype=float))
    if z1.ndim != 1 or z2.ndim != 1 or z1.shape != z2.shape:
        raise ValueError(f"dimension mismatch: {z1.shape} vs {z2.shape}")
    if not (np.all(np.isfinite(z1)) and np.all(np.isfinite(z2))):
        raise ValueError("latent positions must be finite")
    return z1, z2


def eval_b0(kernel: KernelSpec, z1, z2) -> float:
    z1, z2 = _check_points(z1, z2)
    return float(kernel.b0(z1, z2))


def eval_b(kernel: KernelSpec, a: int, z1, z2) -> float:
    if a not in (0, 1):
        raise ValueError(f"edge state must be 0 or 1, got {a!r}")
    z1, z2 = _check_points(z1, z2)
    return float(kernel.b(a, z1, z2))


def b_hat(p, z1, z2, kernel: KernelSpec):
    """Average transition probability when the previous edge is Bernoulli(p)."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr < 0) or np.any(p_arr > 1) or np.any(np.isnan(p_arr)):
        raise ValueError("p must lie in [0, 1]")
    p0, p1 = kernel.b_both(z1, z2)
    out = np.clip(p_arr * p1 + (1.0 - p_arr) * p0, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _check_trajs(traj1, traj2) -> tuple[np.ndarray, np.ndarray]:
    t1 = np.asarray(traj1, dtype=float)
    t2 = np.asarray(traj2, dtype=float)
    if t1.ndim == 1:
        t1 = t1[:, None]
    if t2.ndim == 1:
        t2 = t2[:, None]
    if t1.shape[-2:] != t2.shape[-2:]:
        raise ValueError(f"trajectory shapes differ: {t1.shape} vs {t2.shape}")
    if t1.shape[-2] < 1:
        raise ValueError("trajectories need at least one time point")
    return t1, t2


def b_s_series(kernel: KernelSpec, traj1, traj2) -> np.ndarray:
    """All conditional edge probabilities ``B_0, ..., B_s`` along two paths.

    ``traj*`` have shape ``(..., s+1, d)`` (or ``(s+1,)`` for d = 1); the
    result has shape ``(..., s+1)``.
    """
    t1, t2 = _check_trajs(traj1, traj2)
    steps = t1.shape[-2]
    p = kernel.b0(t1[..., 0, :], t2[..., 0, :])
    out = np.empty(np.broadcast_shapes(p.shape) + (steps,))
    out[..., 0] = p
    for s in range(1, steps):
        p = b_hat(p, t1[..., s, :], t2[..., s, :], kernel)
        out[..., s] = p
    return out


def b_s(kernel: KernelSpec, traj1, traj2) -> float:
    """Probability that the edge is present at the last time given both paths."""
    t1, t2 = _check_trajs(traj1, traj2)
    if t1.ndim != 2:
        raise ValueError("b_s takes single trajectories; use b_s_series for batches")
    return float(b_s_series(kernel, t1, t2)[-1])


@dataclass(frozen=True)
class EdgeChainLaw:
    """Two-state time-inhomogeneous Markov chain of one edge given two paths.

    ``transition_p[s - 1] = (P(1 | prev 0), P(1 | prev 1))`` for ``s = 1..t``.
    """

    initial_p: float
    transition_p: np.ndarray

    def __post_init__(self):
        tp = np.asarray(self.transition_p, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "transition_p", tp)
        if not 0 <= self.initial_p <= 1 or np.any(tp < 0) or np.any(tp > 1):
            raise ValueError("chain probabilities must lie in [0, 1]")

    @property
    def horizon(self) -> int:
        return len(self.transition_p)

    def marginals(self) -> np.ndarray:
        """``P(chain = 1 at s)`` for ``s = 0..t`` by propagating the state distribution."""
        dist = np.array([1.0 - self.initial_p, self.initial_p])
        out = [dist[1]]
        for p_from0, p_from1 in self.transition_p:
            step = np.array([[1.0 - p_from0, p_from0],
                             [1.0 - p_from1, p_from1]])
            dist = dist @ step
            out.append(dist[1])
        return np.array(out)

    def path_probability(self, path) -> float:
        path = [int(a) for a in path]
        if len(path) != self.horizon + 1 or any(a not in (0, 1) for a in path):
            raise ValueError(f"path must be a 0/1 sequence of length {self.horizon + 1}")
        prob = self.initial_p if path[0] else 1.0 - self.initial_p
        for s in range(1, len(path)):
            p1 = self.transition_p[s - 1][path[s - 1]]
            prob *= p1 if path[s] else 1.0 - p1
        return prob

    def path_probabilities(self) -> dict[tuple[int, ...], float]:
        """Exact probability of every one of the ``2**(t+1)`` paths."""
        return {path: self.path_probability(path)
                for path in itertools.product((0, 1), repeat=self.horizon + 1)}

    def presence_probability(self, layers) -> float:
        """``P(chain = 1 for every s in layers)``."""
        layers = set(layers)
        q = np.array([1.0 - self.initial_p, self.initial_p])
        if 0 in layers:
            q[0] = 0.0
        for s, (p_from0, p_from1) in enumerate(self.transition_p, start=1):
            q = np.array([q[0] * (1 - p_from0) + q[1] * (1 - p_from1),
                          q[0] * p_from0 + q[1] * p_from1])
            if s in layers:
                q[0] = 0.0
        return float(q.sum())


def edge_chain_law(kernel: KernelSpec, traj1, traj2, horizon: int | None = None) -> EdgeChainLaw:
    t1, t2 = _check_trajs(traj1, traj2)
    if t1.ndim != 2:
        raise ValueError("edge_chain_law takes single trajectories")
    if horizon is not None and horizon + 1 != t1.shape[0]:
        raise ValueError(f"trajectories have length {t1.shape[0]}, expected {horizon + 1}")
    initial = float(kernel.b0(t1[0], t2[0]))
    trans = [tuple(float(x) for x in kernel.b_both(t1[s], t2[s])) for s in range(1, t1.shape[0])]
    return EdgeChainLaw(initial, np.array(trans, dtype=float).reshape(-1, 2))


def joint_presence_probability(kernel: KernelSpec, traj1, traj2, layers) -> np.ndarray:
    """Batched ``P(edge chain = 1 at every s in layers)`` for paths ``(..., t+1, d)``.

    Only the time points up to ``max(layers)`` are read.
    """
    t1, t2 = _check_trajs(traj1, traj2)
    layers = sorted(set(int(s) for s in layers))
    if not layers:
        raise ValueError("layers must be nonempty")
    last = layers[-1]
    if last >= t1.shape[-2]:
        raise ValueError(f"layer {last} beyond trajectory horizon {t1.shape[-2] - 1}")
    p = kernel.b0(t1[..., 0, :], t2[..., 0, :])
    q1 = p.copy()
    q0 = np.zeros_like(q1) if 0 in layers else 1.0 - p
    for s in range(1, last + 1):
        p0, p1 = kernel.b_both(t1[..., s, :], t2[..., s, :])
        q0, q1 = q0 * (1 - p0) + q1 * (1 - p1), q0 * p0 + q1 * p1
        if s in layers:
            q0 = np.zeros_like(q0)
    return q0 + q1
