"""Communication graphs and consensus (mixing) matrices.

A valid mixing matrix is symmetric, doubly stochastic, has entries in
``[0, 1)``, matches the graph sparsity (with implicit self-loops), and comes
from a connected graph. Positive semidefiniteness is the one extra property
the convergence certificate needs; squaring any valid matrix provides it at
the price of two communication rounds per iteration.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .utils import as_matrix

ENTRY_TOL = 1e-12
PSD_TOL = -1e-10


@dataclass(frozen=True)
class Graph:
    """Undirected graph on ``n`` nodes; self-loops are implicit everywhere."""

    n: int
    edges: frozenset

    def __init__(self, n, edges):
        if n < 2:
            raise ValueError("graph needs at least 2 nodes")
        norm = set()
        for i, j in edges:
            if i == j:
                continue
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i},{j}) out of range for n={n}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "edges", frozenset(norm))

    def neighbors(self, i):
        return sorted(j for (a, b) in self.edges for j in ((b,) if a == i else (a,) if b == i else ()))

    def degree(self, i):
        return sum(1 for (a, b) in self.edges if a == i or b == i)

    def components(self):
        """Connected components as sorted node lists."""
        adj = {i: set() for i in range(self.n)}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        seen, comps = set(), []
        for start in range(self.n):
            if start in seen:
                continue
            stack, comp = [start], []
            seen.add(start)
            while stack:
                v = stack.pop()
                comp.append(v)
                for w in adj[v]:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            comps.append(sorted(comp))
        return comps

    def is_connected(self):
        return len(self.components()) == 1


@dataclass(frozen=True)
class ConsensusMatrix:
    """Dense mixing matrix together with its graph and a PSD certificate flag."""

    w: np.ndarray
    source_graph: Graph
    psd_certified: bool

    def __post_init__(self):
        w = as_matrix(self.w, "w")
        if w.shape[0] != w.shape[1] or w.shape[0] != self.source_graph.n:
            raise ValueError("matrix size does not match graph")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def n(self):
        return self.w.shape[0]


def graph_from_matrix(w, tol=0.0):
    """Infer the communication graph from the off-diagonal sparsity of ``w``."""
    w = as_matrix(w, "w")
    n = w.shape[0]
    edges = {(i, j) for i in range(n) for j in range(i + 1, n)
             if abs(w[i, j]) > tol or abs(w[j, i]) > tol}
    return Graph(n, edges)


def metropolis_weights(graph):
    """Metropolis-Hastings weights: ``1 / (1 + max(deg_i, deg_j))`` on edges.

    Always symmetric and doubly stochastic on a connected graph; PSD is
    certified by a dense eigensolve and reported, not guaranteed.
    """
    if not graph.is_connected():
        comps = graph.components()
        raise ValueError(f"graph is disconnected; offending component: {comps[-1]}")
    n = graph.n
    deg = [graph.degree(i) for i in range(n)]
    w = np.zeros((n, n))
    for i, j in sorted(graph.edges):
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    for i in range(n):
        w[i, i] = 1.0 - np.sum(w[i, :])
    psd = float(np.linalg.eigvalsh(w)[0]) >= PSD_TOL
    return ConsensusMatrix(w, graph, psd)


def lazy_weights(W):
    """Lazy variant ``(I + W) / 2``: PSD for any valid mixing matrix."""
    w = (np.eye(W.n) + W.w) / 2.0
    return ConsensusMatrix(w, W.source_graph, True)


def square_weights(W):
    """Two communication rounds folded into one: returns ``W^2`` on the
    two-hop graph. The square of a symmetric matrix is always PSD."""
    w2 = W.w @ W.w
    # products of nonnegative entries: exact zeros iff no two-hop path
    return ConsensusMatrix(w2, graph_from_matrix(w2), True)


def deviation(W):
    """Deviation from uniform averaging at graph scale: ``W - 11'/N``."""
    n = W.n
    return W.w - np.full((n, n), 1.0 / n)


@dataclass(frozen=True)
class ValidationReport:
    symmetric: bool
    doubly_stochastic: bool
    entry_range: bool
    sparsity_match: bool
    psd: bool
    spectral_gap: float
    passes: bool
    notes: tuple = ()

    def to_dict(self):
        return {
            "symmetric": self.symmetric,
            "doubly_stochastic": self.doubly_stochastic,
            "entry_range": self.entry_range,
            "sparsity_match": self.sparsity_match,
            "psd": self.psd,
            "spectral_gap": self.spectral_gap,
            "passes": self.passes,
            "notes": list(self.notes),
        }


def validate(W):
    """Check every mixing-matrix requirement and report per-property booleans.

    ``spectral_gap`` is ``1 - ||W - 11'/N||``; a positive gap is equivalent
    to connectivity of the mixing process and to the consensus-error dynamics
    being a strict contraction.
    """
    w = W.w
    n = W.n
    notes = []
    symmetric = bool(np.max(np.abs(w - w.T), initial=0.0) <= ENTRY_TOL)
    row = np.abs(w.sum(axis=1) - 1.0).max()
    col = np.abs(w.sum(axis=0) - 1.0).max()
    doubly_stochastic = bool(row <= ENTRY_TOL and col <= ENTRY_TOL)
    entry_range = bool(np.all(w >= 0.0) and np.all(w < 1.0))
    if not entry_range:
        notes.append("entries outside [0, 1)")

    g = W.source_graph
    sparsity_match = True
    for i in range(n):
        for j in range(n):
            on_graph = i == j or (min(i, j), max(i, j)) in g.edges
            if on_graph != (w[i, j] > 0.0):
                sparsity_match = False
                notes.append(f"sparsity mismatch at ({i},{j})")
                break
        if not sparsity_match:
            break

    eig_min = float(np.linalg.eigvalsh((w + w.T) / 2.0)[0])
    psd = bool(eig_min >= PSD_TOL)
    if not psd:
        notes.append(f"not positive semidefinite (min eigenvalue {eig_min:.3e})")

    dev = w - np.full((n, n), 1.0 / n)
    gap = 1.0 - float(np.max(np.abs(np.linalg.eigvalsh((dev + dev.T) / 2.0))))
    if gap <= 0.0:
        notes.append("zero spectral gap (disconnected mixing)")

    passes = symmetric and doubly_stochastic and entry_range and sparsity_match and psd and gap > 0.0
    return ValidationReport(symmetric, doubly_stochastic, entry_range,
                            sparsity_match, psd, gap, passes, tuple(notes))


def averaging_matrix(n):
    """Complete uniform mixing ``11'/N`` (the idealized no-network case)."""
    g = Graph(n, {(i, j) for i in range(n) for j in range(i + 1, n)})
    return ConsensusMatrix(np.full((n, n), 1.0 / n), g, True)


def random_connected_graph(n, density=0.3, seed=0, max_tries=1000):
    """Seeded Erdos-Renyi graph, resampled until connected."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        edges = {(i, j) for i in range(n) for j in range(i + 1, n)
                 if rng.random() < density}
        g = Graph(n, edges)
        if g.is_connected():
            return g
    raise RuntimeError(f"no connected graph found in {max_tries} tries (density too low?)")


# --- JSON ---------------------------------------------------------------
#
# Schema: {"n", "edges": [[i, j], ...], "weights": optional dense matrix}.

def graph_to_dict(graph):
    return {"n": graph.n, "edges": [list(e) for e in sorted(graph.edges)]}


def save_graph(graph, path, weights=None):
    data = graph_to_dict(graph)
    if weights is not None:
        data["weights"] = np.asarray(weights, dtype=float).tolist()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh)


def load_graph_or_matrix(path):
    """Load a graph JSON; returns a ConsensusMatrix.

    With explicit ``weights`` the matrix is taken as given (PSD re-certified);
    otherwise Metropolis weights are derived from the edge list.
    """
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if "weights" in data and data["weights"] is not None:
        w = np.asarray(data["weights"], dtype=float)
        if "edges" in data and data["edges"]:
            g = Graph(int(data["n"]), {tuple(e) for e in data["edges"]})
        else:
            g = graph_from_matrix(w)
        psd = float(np.linalg.eigvalsh((w + w.T) / 2.0)[0]) >= PSD_TOL
        return ConsensusMatrix(w, g, psd)
    g = Graph(int(data["n"]), {tuple(e) for e in data["edges"]})
    return metropolis_weights(g)
