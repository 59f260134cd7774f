import itertools

import networkx as nx
import numpy as np
import pytest

from qudrc.errors import RejectedGraph
from qudrc.graph import (
    build_graph,
    diameter,
    from_text,
    random_strongly_connected_digraph,
    read_graph,
    to_text,
    write_graph,
)


def floyd_warshall_diameter(n, edges):
    inf = float("inf")
    dist = [[0 if i == j else inf for j in range(n)] for i in range(n)]
    for to, frm in edges:
        dist[frm][to] = 1
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if dist[i][k] + dist[k][j] < dist[i][j]:
                    dist[i][j] = dist[i][k] + dist[k][j]
    return max(max(row) for row in dist)


def cycle(n):
    return [((i + 1) % n, i) for i in range(n)]


def test_three_cycle():
    g = build_graph(3, [(1, 0), (2, 1), (0, 2)])
    assert g.diameter == 2


def test_complete_digraph():
    g = build_graph(4, [(i, j) for i in range(4) for j in range(4) if i != j])
    assert g.diameter == 1
    assert diameter(build_graph(6, [(i, j) for i in range(6) for j in range(6) if i != j])) == 1


def test_cycle_diameter():
    assert diameter(build_graph(5, cycle(5))) == 4


def test_path_rejected():
    with pytest.raises(RejectedGraph):
        build_graph(3, [(1, 0), (2, 1)], require_strong_connectivity=True)


def test_unflagged_disconnected_graph_has_no_diameter():
    g = build_graph(3, [(1, 0), (2, 1)], require_strong_connectivity=False)
    assert not g.strongly_connected
    with pytest.raises(RejectedGraph):
        diameter(g)


@pytest.mark.parametrize("n, edges", [
    (1, []),
    (3, [(0, 0), (1, 0), (2, 1), (0, 2)]),
    (3, [(3, 0)]),
    (3, [(-1, 0)]),
])
def test_bad_input_rejected(n, edges):
    with pytest.raises(RejectedGraph):
        build_graph(n, edges, require_strong_connectivity=False)


def test_neighbor_lists_are_transposes():
    g = random_strongly_connected_digraph(12, 0.25, seed=9)
    for i in range(g.node_count):
        for j in g.in_neighbors[i]:
            assert i in g.out_neighbors[j]
        for l in g.out_neighbors[i]:
            assert i in g.in_neighbors[l]
        assert i not in g.out_neighbors[i]
        assert g.closed_out_neighbors(i)[-1] == i
    assert sum(map(len, g.out_neighbors)) == len(g.edges)


def test_diameter_matches_floyd_warshall():
    checked = 0
    for seed in range(40):
        n = 2 + seed % 9
        g = random_strongly_connected_digraph(n, 0.15 + 0.02 * (seed % 5), seed=seed)
        assert g.diameter == floyd_warshall_diameter(n, g.edges)
        checked += 1
    assert checked >= 10


def test_diameter_exhaustive_small_graphs():
    # every strongly connected digraph on 3 nodes
    pairs = [(i, j) for i in range(3) for j in range(3) if i != j]
    for mask in range(1, 1 << len(pairs)):
        edges = [p for b, p in enumerate(pairs) if mask >> b & 1]
        ref = floyd_warshall_diameter(3, edges)
        if ref == float("inf"):
            with pytest.raises(RejectedGraph):
                build_graph(3, edges)
        else:
            assert build_graph(3, edges).diameter == ref


def test_generator_deterministic():
    a = random_strongly_connected_digraph(20, 0.2, seed=7)
    b = random_strongly_connected_digraph(20, 0.2, seed=7)
    assert a.edges == b.edges
    assert a.fingerprint() == b.fingerprint()
    assert random_strongly_connected_digraph(20, 0.2, seed=8).edges != a.edges


def test_generator_two_nodes_is_two_cycle():
    for seed in range(5):
        assert random_strongly_connected_digraph(2, 0.0, seed).edges == {(1, 0), (0, 1)}


def test_generator_strongly_connected_per_networkx():
    g = random_strongly_connected_digraph(8, 0.5, seed=1)
    ref = nx.DiGraph()
    ref.add_nodes_from(range(8))
    ref.add_edges_from((frm, to) for to, frm in g.edges)
    assert nx.is_strongly_connected(ref)
    assert nx.diameter(ref) == g.diameter


def test_text_round_trip(tmp_path):
    g = random_strongly_connected_digraph(7, 0.3, seed=2)
    path = tmp_path / "g.txt"
    write_graph(g, path)
    first = path.read_text().splitlines()
    assert first[0] == "7"
    assert all(1 <= int(v) <= 7 for line in first[1:] for v in line.split())
    assert read_graph(path).edges == g.edges
    assert from_text("3\n2 1\n3 2\n1 3\n").edges == {(1, 0), (2, 1), (0, 2)}
    assert to_text(from_text(to_text(g))) == to_text(g)


def test_malformed_text():
    with pytest.raises(RejectedGraph):
        from_text("3\n2 x\n")
    with pytest.raises(RejectedGraph):
        from_text("")
