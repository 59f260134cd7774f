"""Directed communication graphs.

Nodes are ``0 .. N-1``. An edge is the ordered pair ``(to, from)``: information
flows from the second entry to the first. Self-loops are implicit and never
stored; protocol code that needs them asks for the closed neighbourhood.

The on-disk text format is 1-indexed: the first line holds ``N`` and every
following non-blank line holds ``to from``.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import RejectedGraph

__all__ = [
    "DirectedGraph",
    "build_graph",
    "diameter",
    "random_strongly_connected_digraph",
    "read_graph",
    "write_graph",
]


@dataclass(frozen=True)
class DirectedGraph:
    """Immutable digraph with cached adjacency and diameter.

    Use :func:`build_graph` rather than the constructor; it validates input and
    fills the derived fields.
    """

    node_count: int
    edges: frozenset
    in_neighbors: tuple = field(repr=False)
    out_neighbors: tuple = field(repr=False)
    strongly_connected: bool = field(repr=False)
    _diameter: Optional[int] = field(repr=False, default=None)

    @property
    def diameter(self) -> int:
        if self._diameter is None:
            raise RejectedGraph("graph is not strongly connected; diameter is infinite")
        return self._diameter

    def out_degree(self, i: int) -> int:
        return len(self.out_neighbors[i])

    def in_degree(self, i: int) -> int:
        return len(self.in_neighbors[i])

    def closed_out_neighbors(self, i: int) -> tuple:
        """Out-neighbours of ``i`` followed by ``i`` itself."""
        return self.out_neighbors[i] + (i,)

    def closed_in_neighbors(self, i: int) -> tuple:
        return self.in_neighbors[i] + (i,)

    def has_edge(self, to: int, frm: int) -> bool:
        return (to, frm) in self.edges

    def sorted_edges(self) -> list:
        return sorted(self.edges, key=lambda e: (e[1], e[0]))

    def fingerprint(self) -> str:
        """Short content hash, stable across runs and platforms."""
        text = to_text(self)
        return hashlib.sha256(text.encode("ascii")).hexdigest()[:16]


def build_graph(node_count: int, edges: Iterable, require_strong_connectivity: bool = True) -> DirectedGraph:
    """Validate an edge list and build a :class:`DirectedGraph`.

    Parameters
    ----------
    node_count : int
        Number of nodes, at least 2.
    edges : iterable of (to, from)
        0-indexed directed edges. Duplicates are merged.
    require_strong_connectivity : bool
        Reject graphs in which some ordered pair is not joined by a directed path.
    """
    node_count = int(node_count)
    if node_count < 2:
        raise RejectedGraph(f"need at least 2 nodes, got {node_count}")

    edge_set = set()
    for edge in edges:
        to, frm = (int(v) for v in edge)
        if not (0 <= to < node_count and 0 <= frm < node_count):
            raise RejectedGraph(f"edge {(to, frm)} has an endpoint outside 0..{node_count - 1}")
        if to == frm:
            raise RejectedGraph(f"explicit self-edge on node {to}; self-loops are implicit")
        edge_set.add((to, frm))

    ins = [[] for _ in range(node_count)]
    outs = [[] for _ in range(node_count)]
    for to, frm in edge_set:
        ins[to].append(frm)
        outs[frm].append(to)

    in_neighbors = tuple(tuple(sorted(n)) for n in ins)
    out_neighbors = tuple(tuple(sorted(n)) for n in outs)
    ecc = [_bfs_eccentricity(out_neighbors, s) for s in range(node_count)]
    connected = all(e is not None for e in ecc)
    if require_strong_connectivity and not connected:
        raise RejectedGraph("graph is not strongly connected")

    return DirectedGraph(
        node_count=node_count,
        edges=frozenset(edge_set),
        in_neighbors=in_neighbors,
        out_neighbors=out_neighbors,
        strongly_connected=connected,
        _diameter=max(ecc) if connected else None,
    )


def _bfs_eccentricity(out_neighbors, source: int) -> Optional[int]:
    """Longest shortest path out of ``source``, or None if some node is unreachable."""
    n = len(out_neighbors)
    dist = [-1] * n
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in out_neighbors[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    if min(dist) < 0:
        return None
    return max(dist)


def diameter(g: DirectedGraph) -> int:
    """Longest shortest directed path over all ordered node pairs."""
    return g.diameter


def random_strongly_connected_digraph(n_nodes: int, extra_edge_probability: float, seed: int) -> DirectedGraph:
    """Random digraph that is strongly connected by construction.

    A directed Hamiltonian cycle through a random permutation of the nodes is laid
    down first; every other ordered pair is then added independently with
    probability ``extra_edge_probability``.
    """
    if n_nodes < 2:
        raise RejectedGraph(f"need at least 2 nodes, got {n_nodes}")
    if not 0.0 <= extra_edge_probability <= 1.0:
        raise ValueError("extra_edge_probability must lie in [0, 1]")
    rng = np.random.default_rng(seed)

    order = rng.permutation(n_nodes)
    edges = {(int(order[(k + 1) % n_nodes]), int(order[k])) for k in range(n_nodes)}
    # fixed pair order keeps the draw sequence reproducible
    for frm in range(n_nodes):
        for to in range(n_nodes):
            if to == frm:
                continue
            if rng.random() < extra_edge_probability:
                edges.add((to, frm))
    return build_graph(n_nodes, edges, require_strong_connectivity=True)


def to_text(g: DirectedGraph) -> str:
    lines = [str(g.node_count)]
    lines += [f"{to + 1} {frm + 1}" for to, frm in g.sorted_edges()]
    return "\n".join(lines) + "\n"


def from_text(text: str, require_strong_connectivity: bool = True) -> DirectedGraph:
    rows = [line.split("#", 1)[0].strip() for line in text.splitlines()]
    rows = [r for r in rows if r]
    if not rows:
        raise RejectedGraph("empty graph description")
    try:
        n = int(rows[0])
        edges = []
        for r in rows[1:]:
            to, frm = r.split()
            edges.append((int(to) - 1, int(frm) - 1))
    except ValueError as exc:
        raise RejectedGraph(f"malformed graph text: {exc}") from None
    return build_graph(n, edges, require_strong_connectivity=require_strong_connectivity)


def write_graph(g: DirectedGraph, path) -> None:
    Path(path).write_text(to_text(g), encoding="ascii")


def read_graph(path, require_strong_connectivity: bool = True) -> DirectedGraph:
    return from_text(Path(path).read_text(encoding="ascii"), require_strong_connectivity)
