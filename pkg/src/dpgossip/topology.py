"""Communication graphs and doubly stochastic gossip matrices.

Graphs are undirected with implicit self-loops. Mixing matrices are built with
Metropolis-Hastings weights, which are symmetric and doubly stochastic on any
connected graph.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterable

import networkx as nx
import numpy as np

STOCHASTIC_TOL = 1e-12
TOPOLOGY_KINDS = ("ring", "grid", "complete", "random")


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    m: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.m < 1:
            raise TopologyError(f"node count must be positive, got {self.m}")
        for i, j in self.edges:
            if i == j:
                raise TopologyError(f"self-loop ({i}, {j}) must not be listed explicitly")
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise TopologyError(f"edge ({i}, {j}) out of range for m={self.m}")
            if i > j:
                raise TopologyError(f"edge ({i}, {j}) not in canonical (low, high) order")

    @classmethod
    def from_edges(cls, m: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        canon = set()
        for i, j in edges:
            i, j = int(i), int(j)
            canon.add((min(i, j), max(i, j)))
        return cls(m, frozenset(canon))

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.m, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.m))
        g.add_edges_from(self.edges)
        return g

    def is_connected(self) -> bool:
        return nx.is_connected(self.to_networkx())

    def diameter(self) -> int:
        if self.m == 1:
            return 0
        return nx.diameter(self.to_networkx())


@dataclass(frozen=True)
class MixingMatrix:
    """Doubly stochastic weights ``entries[i, j]`` with smallest positive entry ``eta``."""

    entries: np.ndarray
    eta: float
    graph: Graph | None = field(default=None, compare=False)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    def neighbors(self, i: int) -> np.ndarray:
        """Indices j with a_ij > 0 (including i itself)."""
        return np.flatnonzero(self.entries[i] > 0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"{self.m}\n")
        for row in self.entries:
            buf.write(",".join(repr(float(v)) for v in row))
            buf.write("\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MixingMatrix":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        m = int(lines[0])
        rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
        entries = np.array(rows, dtype=float)
        if entries.shape != (m, m):
            raise TopologyError(f"expected {m}x{m} matrix, got shape {entries.shape}")
        return cls(entries, _min_positive(entries))


def _min_positive(a: np.ndarray) -> float:
    pos = a[a > 0]
    return float(pos.min()) if pos.size else 0.0


def _ring_edges(m: int) -> set[tuple[int, int]]:
    if m == 1:
        return set()
    return {(min(i, (i + 1) % m), max(i, (i + 1) % m)) for i in range(m)}


def _grid_edges(m: int) -> set[tuple[int, int]]:
    side = math.isqrt(m)
    if side * side != m:
        raise TopologyError(f"grid topology needs a perfect-square node count, got m={m}")
    edges = set()
    for r in range(side):
        for c in range(side):
            i = r * side + c
            if c + 1 < side:
                edges.add((i, i + 1))
            if r + 1 < side:
                edges.add((i, i + side))
    return edges


def build_graph(kind: str, m: int, p: float = 0.3, seed: int = 0, max_tries: int = 100) -> Graph:
    """Construct a connected communication graph.

    Args:
        kind: one of ``ring``, ``grid``, ``complete``, ``random``.
        m: number of nodes.
        p: edge probability for ``random`` (Erdos-Renyi).
        seed: seed for ``random``; each retry advances the same stream.
        max_tries: retry budget for drawing a connected random graph.
    """
    if m < 1:
        raise TopologyError(f"node count must be positive, got {m}")
    if kind == "ring":
        edges = _ring_edges(m)
    elif kind == "grid":
        edges = _grid_edges(m)
    elif kind == "complete":
        edges = {(i, j) for i in range(m) for j in range(i + 1, m)}
    elif kind == "random":
        if not 0.0 <= p <= 1.0:
            raise TopologyError(f"edge probability must lie in [0, 1], got {p}")
        rng = np.random.default_rng(seed)
        for _ in range(max_tries):
            upper = np.triu(rng.random((m, m)) < p, k=1)
            g = Graph.from_edges(m, zip(*np.nonzero(upper)))
            if g.is_connected():
                return g
        raise TopologyError(
            f"random graph with p={p} not connected after {max_tries} draws (m={m})"
        )
    else:
        raise TopologyError(f"unknown topology kind {kind!r}; expected one of {TOPOLOGY_KINDS}")
    return Graph.from_edges(m, edges)


def metropolis_weights(g: Graph) -> MixingMatrix:
    # a_ij = 1 / (1 + max(deg i, deg j)) on edges, self-weight takes the remainder
    deg = g.degrees()
    a = np.zeros((g.m, g.m))
    for i, j in g.edges:
        a[i, j] = a[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    a[np.diag_indices(g.m)] = 1.0 - a.sum(axis=1)
    return MixingMatrix(a, _min_positive(a), g)


@dataclass(frozen=True)
class Violation:
    condition: str
    index: tuple[int, ...]
    value: float

    def __str__(self):
        return f"{self.condition} violated at {self.index} (value {self.value!r})"


def validate_mixing_matrix(a: MixingMatrix, tol: float = STOCHASTIC_TOL) -> Violation | None:
    """Return None if ``a`` satisfies the gossip assumptions, else the first violation.

    Checked in order: square shape and entries in [0, 1], row sums, column sums,
    positive entries bounded below by ``eta``, support contained in the graph
    (only when a graph is attached).
    """
    e = np.asarray(a.entries, dtype=float)
    if e.ndim != 2 or e.shape[0] != e.shape[1]:
        return Violation("square", tuple(e.shape), float("nan"))
    bad = np.argwhere(~np.isfinite(e) | (e < 0) | (e > 1))
    if bad.size:
        i, j = bad[0]
        return Violation("entry_range", (int(i), int(j)), float(e[i, j]))
    rows = np.abs(e.sum(axis=1) - 1.0)
    if rows.max(initial=0.0) > tol:
        i = int(np.argmax(rows > tol))
        return Violation("row_sum", (i,), float(e[i].sum()))
    cols = np.abs(e.sum(axis=0) - 1.0)
    if cols.max(initial=0.0) > tol:
        j = int(np.argmax(cols > tol))
        return Violation("column_sum", (j,), float(e[:, j].sum()))
    if not 0.0 < a.eta <= 1.0:
        return Violation("eta_range", (), float(a.eta))
    low = np.argwhere((e > 0) & (e < a.eta))
    if low.size:
        i, j = low[0]
        return Violation("eta_floor", (int(i), int(j)), float(e[i, j]))
    if a.graph is not None:
        for i, j in np.argwhere(e > 0):
            i, j = int(i), int(j)
            if i != j and (min(i, j), max(i, j)) not in a.graph.edges:
                return Violation("support", (i, j), float(e[i, j]))
    return None
