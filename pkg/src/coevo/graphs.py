"""Graph-limit machinery: multiplexes, step graphons, homomorphism densities,
cut norms and spectra.

Graphs here are simple (no self-loops).  Adjacency stacks produced by the
simulators carry a unit diagonal; the constructors strip it.

Two independent counting engines are provided.  Graphs and multiplexes are
counted combinatorially (backtracking over vertex maps, or closed forms for
the built-in patterns); graphons and multigraphons are integrated as finite
tensor contractions of their block values.
"""

from __future__ import annotations

import itertools
import string
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np
import scipy.linalg

__all__ = [
    "Graph",
    "MultiplexGraph",
    "StepGraphon",
    "Multigraphon",
    "VERTEX",
    "K2",
    "P3",
    "C3",
    "BUILTIN_PATTERNS",
    "pattern_multiplex",
    "layer_intersection",
    "exclusive_decomposition",
    "empirical_graphon",
    "empirical_multigraphon",
    "hom_density_graph",
    "hom_density_graphon",
    "hom_density_multiplex",
    "hom_density_multigraphon",
    "limit_multigraphon_density",
    "cut_norm_estimate",
    "scaled_lambda2",
]

MAX_PATTERN_VERTICES = 5


def _normalize_edges(edges: Iterable, n: int) -> frozenset[tuple[int, int]]:
    out = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j:
            raise ValueError(f"self-loop ({i}, {j}) not allowed in a simple graph")
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i}, {j}) out of range for {n} vertices")
        out.add((min(i, j), max(i, j)))
    return frozenset(out)


def _edges_of(adj: np.ndarray) -> frozenset[tuple[int, int]]:
    iu, ju = np.nonzero(np.triu(adj, k=1))
    return frozenset(zip(iu.tolist(), ju.tolist()))


def _strip(adj) -> np.ndarray:
    a = np.array(adj, dtype=bool)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError("adjacency must be square")
    if not np.array_equal(a, np.swapaxes(a, -1, -2)):
        raise ValueError("adjacency must be symmetric")
    idx = np.arange(a.shape[-1])
    a[..., idx, idx] = False
    return a


class Graph:
    """Simple undirected graph on vertices ``0..n-1`` backed by a boolean adjacency."""

    def __init__(self, vertex_count: int, edges: Iterable = ()):
        if vertex_count < 1:
            raise ValueError("vertex_count must be >= 1")
        self.vertex_count = int(vertex_count)
        e = _normalize_edges(edges, self.vertex_count)
        adj = np.zeros((self.vertex_count, self.vertex_count), dtype=bool)
        for i, j in e:
            adj[i, j] = adj[j, i] = True
        self._adj = adj

    @classmethod
    def from_adjacency(cls, adj) -> "Graph":
        g = cls.__new__(cls)
        g._adj = _strip(adj)
        g.vertex_count = g._adj.shape[0]
        return g

    @property
    def adjacency(self) -> np.ndarray:
        return self._adj

    @cached_property
    def edges(self) -> frozenset[tuple[int, int]]:
        return _edges_of(self._adj)

    def __eq__(self, other):
        return (isinstance(other, Graph) and self.vertex_count == other.vertex_count
                and np.array_equal(self._adj, other._adj))

    def __repr__(self):
        return f"Graph({self.vertex_count}, {sorted(self.edges)})"


VERTEX = Graph(1)
K2 = Graph(2, [(0, 1)])
P3 = Graph(3, [(0, 1), (1, 2)])
C3 = Graph(3, [(0, 1), (1, 2), (0, 2)])
BUILTIN_PATTERNS = {"vertex": VERTEX, "K2": K2, "P3": P3, "C3": C3}


class MultiplexGraph:
    """Layers of simple graphs sharing one vertex set (adjacency ``(L, n, n)``)."""

    def __init__(self, vertex_count: int, layers: Iterable[Iterable]):
        graphs = [Graph(vertex_count, e) for e in layers]
        if not graphs:
            raise ValueError("a multiplex needs at least one layer")
        self.vertex_count = int(vertex_count)
        self._adj = np.stack([g.adjacency for g in graphs])

    @classmethod
    def from_adjacency(cls, stack) -> "MultiplexGraph":
        m = cls.__new__(cls)
        m._adj = _strip(stack)
        if m._adj.ndim != 3:
            raise ValueError("multiplex adjacency must have shape (L, n, n)")
        m.vertex_count = m._adj.shape[1]
        return m

    @property
    def num_layers(self) -> int:
        return self._adj.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        return self._adj

    @property
    def layers(self) -> list[frozenset[tuple[int, int]]]:
        return [_edges_of(a) for a in self._adj]

    def layer(self, s: int) -> Graph:
        return Graph.from_adjacency(self._adj[s])

    def intersection_adjacency(self, S) -> np.ndarray:
        S = _check_subset(S, self.num_layers)
        return np.logical_and.reduce(self._adj[sorted(S)], axis=0)


def pattern_multiplex(H: Graph, layers: Iterable[int], num_layers: int) -> MultiplexGraph:
    """Pattern multiplex whose every edge of ``H`` lies exactly on ``layers``."""
    layers = _check_subset(layers, num_layers)
    return MultiplexGraph(H.vertex_count,
                          [H.edges if s in layers else () for s in range(num_layers)])


def _check_subset(S, num_layers: int) -> frozenset[int]:
    S = frozenset(int(s) for s in S)
    if not S:
        raise ValueError("layer subset must be nonempty")
    bad = [s for s in S if not 0 <= s < num_layers]
    if bad:
        raise ValueError(f"layer indices {bad} out of range for {num_layers} layers")
    return S


def layer_intersection(M: MultiplexGraph, S) -> Graph:
    """Graph of the edges present in every layer of ``S``."""
    return Graph.from_adjacency(M.intersection_adjacency(S))


def exclusive_decomposition(M: MultiplexGraph) -> dict[frozenset[int], frozenset]:
    """Partition the union edge set by the exact set of layers containing each edge.

    Only nonempty cells are returned; any other ``S`` has an empty cell.
    """
    cells: dict[frozenset[int], set] = {}
    iu, ju = np.triu_indices(M.vertex_count, k=1)
    membership = M.adjacency[:, iu, ju]  # (L, pairs)
    present = np.flatnonzero(membership.any(axis=0))
    for p in present:
        S = frozenset(np.flatnonzero(membership[:, p]).tolist())
        cells.setdefault(S, set()).add((int(iu[p]), int(ju[p])))
    return {S: frozenset(e) for S, e in cells.items()}


@dataclass(frozen=True, eq=False)
class StepGraphon:
    """Graphon constant on each block of the ``n x n`` equipartition of the unit square."""

    block_values: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.block_values, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
            raise ValueError("block values must be a nonempty square matrix")
        if not np.array_equal(w, w.T):
            raise ValueError("graphon must be symmetric")
        if w.min() < 0 or w.max() > 1:
            raise ValueError("graphon values must lie in [0, 1]")
        object.__setattr__(self, "block_values", w)

    @property
    def n(self) -> int:
        return self.block_values.shape[0]

    def __call__(self, x, y):
        """Pointwise value; block ``i`` is ``((i-1)/n, i/n]`` as in the ceiling indexing."""
        n = self.n
        i = np.clip(np.ceil(np.asarray(x) * n).astype(int) - 1, 0, n - 1)
        j = np.clip(np.ceil(np.asarray(y) * n).astype(int) - 1, 0, n - 1)
        return self.block_values[i, j]

    @classmethod
    def constant(cls, value: float, n: int = 1) -> "StepGraphon":
        return cls(np.full((n, n), float(value)))


class Multigraphon:
    """Family ``S -> W^S`` over nonempty subsets of layers ``0..t``.

    Components are produced on demand by ``source(S)`` and cached, so
    multiplexes with many layers do not materialize all ``2**(t+1) - 1``
    graphons.
    """

    def __init__(self, num_layers: int, source):
        if num_layers < 1:
            raise ValueError("need at least one layer")
        self.num_layers = int(num_layers)
        if isinstance(source, Mapping):
            table = {frozenset(k): v for k, v in source.items()}
            self._source = lambda S: table[S]
        else:
            self._source = source
        self._cache: dict[frozenset[int], StepGraphon] = {}

    @property
    def horizon(self) -> int:
        return self.num_layers - 1

    def component(self, S) -> StepGraphon:
        S = _check_subset(S, self.num_layers)
        if S not in self._cache:
            self._cache[S] = self._source(S)
        return self._cache[S]

    def subsets(self):
        layers = range(self.num_layers)
        for r in range(1, self.num_layers + 1):
            for S in itertools.combinations(layers, r):
                yield frozenset(S)

    @classmethod
    def constant(cls, num_layers: int, values: Mapping, n: int = 1) -> "Multigraphon":
        return cls(num_layers, lambda S: StepGraphon.constant(values[S], n))


def empirical_graphon(G: Graph) -> StepGraphon:
    return StepGraphon(G.adjacency.astype(float))


def empirical_multigraphon(M: MultiplexGraph) -> Multigraphon:
    return Multigraphon(M.num_layers,
                        lambda S: StepGraphon(M.intersection_adjacency(S).astype(float)))


# -- homomorphism counting ----------------------------------------------------

def _pattern_shape(H: Graph) -> str | None:
    k, e = H.vertex_count, len(H.edges)
    return {(1, 0): "vertex", (2, 1): "K2", (3, 2): "P3", (3, 3): "C3"}.get((k, e))


def _closed_form(shape: str, adj: np.ndarray) -> float:
    n = adj.shape[0]
    if shape == "vertex":
        return 1.0
    a = adj.astype(float)
    if shape == "K2":
        return float(a.sum()) / n**2
    deg = a.sum(axis=1)
    if shape == "P3":
        return float(np.sum(deg * deg)) / n**3
    # trace(A^3) as sum of (A @ A) * A; integer-valued so exact in float64
    return float(np.sum((a @ a) * a)) / n**3


def _search_order(k: int, edges) -> list[int]:
    nbrs = {v: set() for v in range(k)}
    for i, j in edges:
        nbrs[i].add(j)
        nbrs[j].add(i)
    order: list[int] = []
    remaining = set(range(k))
    while remaining:
        # prefer the vertex with most already-placed neighbours, then highest degree
        v = max(sorted(remaining), key=lambda u: (len(nbrs[u] & set(order)), len(nbrs[u])))
        order.append(v)
        remaining.remove(v)
    return order


def _count_homs(k: int, edge_adj: dict[tuple[int, int], np.ndarray], n: int) -> int:
    """Count maps ``[k] -> [n]`` sending every pattern edge into its target adjacency."""
    order = _search_order(k, edge_adj)
    nbr_sets = {}
    for e, adj in edge_adj.items():
        key = id(adj)
        if key not in nbr_sets:
            nbr_sets[key] = [frozenset(np.flatnonzero(row).tolist()) for row in adj]
    # constraints[pos] lists (earlier pattern vertex, neighbour table) pairs
    constraints = []
    for pos, v in enumerate(order):
        cons = []
        for (i, j), adj in edge_adj.items():
            if v in (i, j):
                u = j if v == i else i
                if u in order[:pos]:
                    cons.append((u, nbr_sets[id(adj)]))
        constraints.append(cons)
    everyone = frozenset(range(n))
    phi: dict[int, int] = {}

    def extend(pos: int) -> int:
        if pos == k:
            return 1
        cons = constraints[pos]
        if not cons:
            cand = everyone
        else:
            cand = cons[0][1][phi[cons[0][0]]]
            for u, table in cons[1:]:
                cand = cand & table[phi[u]]
        if pos == k - 1:
            return len(cand)
        total = 0
        v = order[pos]
        for x in cand:
            phi[v] = x
            total += extend(pos + 1)
        phi.pop(v, None)
        return total

    return extend(0)


def _check_pattern(H: Graph):
    if H.vertex_count > MAX_PATTERN_VERTICES:
        raise ValueError(f"pattern has {H.vertex_count} vertices; exact mode supports "
                         f"at most {MAX_PATTERN_VERTICES}")


def hom_density_graph(H: Graph, G: Graph, method: str = "auto") -> float:
    """``|Hom(H, G)| / |V_G|^|V_H|``.

    ``method="auto"`` uses closed forms for the built-in patterns and
    enumeration otherwise; ``"enumerate"`` always enumerates.
    """
    _check_pattern(H)
    shape = _pattern_shape(H)
    if method == "auto" and shape is not None:
        return _closed_form(shape, G.adjacency)
    if method not in ("auto", "enumerate"):
        raise ValueError(f"unknown method {method!r}")
    adj = G.adjacency
    count = _count_homs(H.vertex_count, {e: adj for e in sorted(H.edges)}, G.vertex_count)
    return count / G.vertex_count ** H.vertex_count


def _multiplex_edge_layers(H: MultiplexGraph) -> dict[tuple[int, int], frozenset[int]]:
    out: dict[tuple[int, int], set] = {}
    for s, layer in enumerate(H.layers):
        for e in layer:
            out.setdefault(e, set()).add(s)
    return {e: frozenset(S) for e, S in sorted(out.items())}


def hom_density_multiplex(H: MultiplexGraph, M: MultiplexGraph, method: str = "auto") -> float:
    """Fraction of vertex maps that are homomorphisms on every layer simultaneously."""
    if H.num_layers != M.num_layers:
        raise ValueError(f"pattern has {H.num_layers} layers, multiplex has {M.num_layers}")
    if H.vertex_count > MAX_PATTERN_VERTICES:
        raise ValueError(f"pattern has {H.vertex_count} vertices; exact mode supports "
                         f"at most {MAX_PATTERN_VERTICES}")
    edge_layers = _multiplex_edge_layers(H)
    targets: dict[frozenset[int], np.ndarray] = {}
    for S in edge_layers.values():
        if S not in targets:
            targets[S] = M.intersection_adjacency(S)
    k, n = H.vertex_count, M.vertex_count
    if method == "auto" and len(set(edge_layers.values())) <= 1:
        union = Graph(k, edge_layers)
        shape = _pattern_shape(union)
        if shape is not None:
            if not edge_layers:
                return 1.0
            return _closed_form(shape, next(iter(targets.values())))
    if method not in ("auto", "enumerate"):
        raise ValueError(f"unknown method {method!r}")
    count = _count_homs(k, {e: targets[S] for e, S in edge_layers.items()}, n)
    return count / n**k


def _contract(k: int, factors: list[tuple[tuple[int, int], np.ndarray]], n: int) -> float:
    """``n^-k * sum over [n]^k of the product of factor[x_i, x_j]``."""
    used = sorted({v for (i, j), _ in factors for v in (i, j)})
    if not used:
        return 1.0
    letters = {v: string.ascii_lowercase[p] for p, v in enumerate(used)}
    subs = ",".join(letters[i] + letters[j] for (i, j), _ in factors)
    total = np.einsum(subs + "->", *[m for _, m in factors], optimize=True)
    return float(total) / n ** len(used)


def hom_density_graphon(H: Graph, W: StepGraphon) -> float:
    """``integral of prod_{ij in E_H} W(x_i, x_j)`` as a finite block sum."""
    _check_pattern(H)
    return _contract(H.vertex_count, [(e, W.block_values) for e in sorted(H.edges)], W.n)


def hom_density_multigraphon(H: MultiplexGraph, W: Multigraphon) -> float:
    """Each pattern edge contributes ``W^S`` for ``S`` its exact set of layers."""
    if H.num_layers != W.num_layers:
        raise ValueError(f"pattern has {H.num_layers} layers, multigraphon has {W.num_layers}")
    if H.vertex_count > MAX_PATTERN_VERTICES:
        raise ValueError(f"pattern has {H.vertex_count} vertices; exact mode supports "
                         f"at most {MAX_PATTERN_VERTICES}")
    factors = [(e, W.component(S).block_values) for e, S in _multiplex_edge_layers(H).items()]
    if not factors:
        return 1.0
    return _contract(H.vertex_count, factors, factors[0][1].shape[0])


def limit_multigraphon_density(H: MultiplexGraph, ref, kernel, samples: int, rng,
                               chunk: int = 4096) -> tuple[float, float]:
    """Monte-Carlo ``t(H, W)`` for the limiting multigraphon.

    Pattern vertices are i.i.d. paths drawn from the reference measure; each
    pattern edge contributes the exact probability that its edge chain is
    present on all of its layers.  Returns ``(estimate, standard_error)``.
    """
    from .kernels import joint_presence_probability
    from .rng import Purpose

    if samples < 1:
        raise ValueError("samples must be >= 1")
    edge_layers = _multiplex_edge_layers(H)
    if not edge_layers:
        return 1.0, 0.0
    t = H.num_layers - 1
    if ref.horizon < t:
        raise ValueError(f"reference horizon {ref.horizon} < pattern horizon {t}")
    k = H.vertex_count
    paths = ref.samples[:, : t + 1, :]
    vals = np.empty(samples)
    for lo in range(0, samples, chunk):
        draws = np.arange(lo, min(lo + chunk, samples))
        u = rng.uniform(Purpose.SAMPLE, 0, draws[:, None], np.arange(k)[None, :])
        idx = np.minimum((u * ref.N).astype(np.int64), ref.N - 1)
        prod = np.ones(len(draws))
        for (i, j), S in edge_layers.items():
            prod *= joint_presence_probability(kernel, paths[idx[:, i]], paths[idx[:, j]], S)
        vals[draws] = prod
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return est, se


# -- cut norm -----------------------------------------------------------------

EXACT_CUT_LIMIT = 14


def _best_partner(rowsums: np.ndarray) -> np.ndarray:
    # given the column sums restricted to S, the optimal T takes all positive (or all negative) ones
    return np.maximum(np.clip(rowsums, 0, None).sum(axis=-1), -np.clip(rowsums, None, 0).sum(axis=-1))


def _cut_exact(D: np.ndarray) -> float:
    n = D.shape[0]
    if n > EXACT_CUT_LIMIT:
        raise ValueError(f"exact cut norm limited to n <= {EXACT_CUT_LIMIT}, got {n}")
    masks = ((np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
    colsums = masks @ D  # for every S, sum over i in S of D[i, :]
    return float(_best_partner(colsums).max())


def _cut_heuristic(D: np.ndarray, restarts: int, seed: int) -> float:
    n = D.shape[0]
    gen = np.random.default_rng(seed)
    best = 0.0
    for sign in (1.0, -1.0):
        M = sign * D
        for _ in range(restarts):
            s = gen.random(n) < 0.5
            val = -np.inf
            while True:
                t = (s.astype(float) @ M) > 0
                s_new = (M @ t.astype(float)) > 0
                new_val = float(s_new.astype(float) @ M @ t.astype(float))
                if new_val <= val + 1e-15:
                    break
                s, val = s_new, new_val
            best = max(best, val)
    return best


def cut_norm_estimate(W1: StepGraphon, W2: StepGraphon, mode: str = "heuristic",
                      restarts: int = 20, seed: int = 0) -> float:
    """``||W1 - W2||_cut`` for step graphons on the same partition.

    ``exact_small`` optimizes over all block subsets (n <= 14); ``heuristic``
    alternates best responses from random starts and returns a lower bound.
    """
    if W1.n != W2.n:
        raise ValueError("graphons must share the block partition")
    D = W1.block_values - W2.block_values
    n = W1.n
    if not np.any(D):
        return 0.0
    if mode == "exact_small":
        return _cut_exact(D) / n**2
    if mode == "heuristic":
        return _cut_heuristic(D, restarts, seed) / n**2
    raise ValueError(f"unknown mode {mode!r}")


def scaled_lambda2(A) -> float:
    """Second-largest adjacency eigenvalue divided by ``n`` (diagonal kept as given)."""
    a = np.asarray(A, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    if not np.array_equal(a, a.T):
        raise ValueError("adjacency must be symmetric")
    n = a.shape[0]
    if n < 2:
        raise ValueError("second eigenvalue needs n >= 2")
    vals = scipy.linalg.eigh(a, eigvals_only=True, subset_by_index=[n - 2, n - 1])
    lam = float(vals[0])
    # below the solver's backward-error resolution the eigenvalue is indistinguishable from 0
    if abs(lam) <= n * np.finfo(float).eps * max(abs(float(vals[1])), 1.0):
        lam = 0.0
    return lam / n
