"""Fixed panels of bounded test functions.

Weak convergence of empirical measures is checked on finitely many bounded
functions.  ``marginal_panel`` acts on points ``x`` of R^d (applied to the
time-t marginal); ``pair_panel`` acts on triples ``(x, y, a)`` of a focal
position, a partner position and the edge indicator between them.

The panels are versioned: changing any function means bumping
``PANEL_VERSION`` so that stored gap tables are not silently compared across
definitions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["PANEL_VERSION", "TestFunction", "TestFunctionPanel", "marginal_panel", "pair_panel",
           "shifted_mean"]

PANEL_VERSION = "v1"

_CLIP = 10.0


@dataclass(frozen=True)
class TestFunction:
    name: str
    fn: Callable[..., np.ndarray]
    bound: float

    __test__ = False  # not a pytest class


@dataclass(frozen=True)
class TestFunctionPanel:
    functions: tuple[TestFunction, ...]
    version: str = PANEL_VERSION

    __test__ = False

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.functions]

    def __len__(self):
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)

    def expectations(self, *args, weights=None) -> np.ndarray:
        """Average of every function over the sample (optionally weighted)."""
        return np.array([shifted_mean(np.asarray(f.fn(*args), dtype=float), weights)
                         for f in self.functions])


def shifted_mean(vals: np.ndarray, weights=None) -> float:
    """Mean computed around the first value, so constant samples average exactly."""
    vals = np.asarray(vals, dtype=float).ravel()
    if vals.size == 0:
        raise ValueError("empty sample")
    ref = vals[0]
    if weights is None:
        return float(ref + np.mean(vals - ref))
    w = np.broadcast_to(np.asarray(weights, dtype=float), vals.shape)
    return float(ref + np.sum(w * (vals - ref)) / np.sum(w))


def _coord(c: int):
    return lambda x: np.clip(x[..., min(c, x.shape[-1] - 1)], -_CLIP, _CLIP)


def _coord_sq(c: int):
    return lambda x: np.minimum(x[..., min(c, x.shape[-1] - 1)] ** 2, _CLIP**2)


def _half_line(level: float):
    return lambda x: (x[..., 0] <= level).astype(float)


def _ball(radius: float):
    return lambda x: (np.sqrt(np.sum(x * x, axis=-1)) <= radius).astype(float)


def marginal_panel() -> TestFunctionPanel:
    """Twenty functions of a point: clipped first/second moments of the first
    and last coordinates, eight half-line indicators on coordinate 0, eight
    centred ball indicators."""
    fs = [
        TestFunction("mean_first", _coord(0), _CLIP),
        TestFunction("mean_last", _coord(10**9), _CLIP),
        TestFunction("sq_first", _coord_sq(0), _CLIP**2),
        TestFunction("sq_last", _coord_sq(10**9), _CLIP**2),
    ]
    for level in (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0):
        fs.append(TestFunction(f"x0_le_{level:g}", _half_line(level), 1.0))
    for radius in (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0):
        fs.append(TestFunction(f"norm_le_{radius:g}", _ball(radius), 1.0))
    return TestFunctionPanel(tuple(fs))


def _dist(x, y):
    diff = x - y
    return np.sqrt(np.sum(diff * diff, axis=-1))


def pair_panel() -> TestFunctionPanel:
    """Functions of (focal x, partner y, edge a), mostly edge-weighted."""
    ones = lambda x, y, a: np.ones(np.broadcast_shapes(x.shape[:-1], y.shape[:-1], np.shape(a)))
    fs = [
        TestFunction("one", ones, 1.0),
        TestFunction("focal_mean_first", lambda x, y, a: _coord(0)(x) + 0 * a, _CLIP),
        TestFunction("edge", lambda x, y, a: a * 1.0, 1.0),
        TestFunction("partner_mean_first", lambda x, y, a: _coord(0)(y) + 0 * a, _CLIP),
        TestFunction("edge_partner_mean_first", lambda x, y, a: a * _coord(0)(y), _CLIP),
        TestFunction("edge_partner_mean_last", lambda x, y, a: a * _coord(10**9)(y), _CLIP),
    ]
    for r in (0.5, 1.0, 2.0, 4.0):
        fs.append(TestFunction(f"edge_dist_le_{r:g}",
                               lambda x, y, a, r=r: a * (_dist(x, y) <= r), 1.0))
    for r in (1.0, 2.0):
        fs.append(TestFunction(f"noedge_dist_le_{r:g}",
                               lambda x, y, a, r=r: (1 - a) * (_dist(x, y) <= r), 1.0))
    return TestFunctionPanel(tuple(fs))
