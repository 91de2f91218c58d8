"""Cycle reporting checked against a brute-force reachability oracle."""

from __future__ import annotations

import itertools
import random

from tracegraph.graph import (
    ArtifactKind,
    ArtifactNode,
    FindingCode,
    IssueId,
    RelationKind,
    TraceEdge,
    TraceGraph,
    validate_graph,
)


def brute_force_cyclic_nodes(count: int, edges: set[tuple[int, int]]) -> set[int]:
    """A node is cyclic iff it can reach itself: plain DFS, no cleverness."""
    cyclic = set()
    for start in range(count):
        stack = [v for (u, v) in edges if u == start]
        seen = set()
        while stack:
            current = stack.pop()
            if current == start:
                cyclic.add(start)
                break
            if current in seen:
                continue
            seen.add(current)
            stack.extend(v for (u, v) in edges if u == current)
    return cyclic


def graph_from_edges(count: int, edges: set[tuple[int, int]]) -> TraceGraph:
    g = TraceGraph()
    for n in range(count):
        g.add_artifact(
            ArtifactNode(id=IssueId("acme/device", n + 1), kind=ArtifactKind.SOFTWARE_REQUIREMENT)
        )
    for u, v in edges:
        g.add_relation(
            TraceEdge(
                source=IssueId("acme/device", u + 1),
                target=IssueId("acme/device", v + 1),
                kind=RelationKind.PART_OF,
            )
        )
    return g


def reported_cyclic_nodes(g: TraceGraph) -> set[int]:
    members = set()
    for finding in validate_graph(g):
        if finding.code is FindingCode.CYCLE:
            members.update(s.number - 1 for s in finding.subjects)
    return members


def test_exhaustive_three_node_subsets():
    pairs = [(u, v) for u in range(3) for v in range(3) if u != v]
    for bits in range(2 ** len(pairs)):
        edges = {pairs[i] for i in range(len(pairs)) if bits >> i & 1}
        g = graph_from_edges(3, edges)
        assert reported_cyclic_nodes(g) == brute_force_cyclic_nodes(3, edges), edges


def test_random_graphs_agree_with_oracle():
    rng = random.Random(31337)
    for _ in range(200):
        count = rng.randint(1, 8)
        pairs = [(u, v) for u in range(count) for v in range(count)]
        edges = {p for p in pairs if rng.random() < 0.25}
        g = graph_from_edges(count, edges)
        assert reported_cyclic_nodes(g) == brute_force_cyclic_nodes(count, edges), (count, edges)


def test_self_loops_in_exhaustive_mix():
    for combo in itertools.product([False, True], repeat=4):
        edges = {(i, i) for i, on in enumerate(combo) if on}
        edges.add((0, 1))
        g = graph_from_edges(4, edges)
        assert reported_cyclic_nodes(g) == brute_force_cyclic_nodes(4, edges)
