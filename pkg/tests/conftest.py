"""
Shared pytest fixtures for the chainrec test suite.

The northsouth graph (a = 0.1, 1024 cells, ε = 2/1024, center mode) is built
once per session; its structure is

- Morse node 0: cells {0, 1, 1022, 1023} around θ = 0 (source)
- Morse node 1: cell {2}
- Morse node 2: cells {509 .. 514} around θ = 0.5 (the only sink)
- Morse node 3: cell {1021}

Nodes 1 and 3 are cells next to the repelling fixed point whose displacement
is below ε but which cannot step back.
"""

from __future__ import annotations

import logging
from itertools import combinations
from typing import Dict, FrozenSet, Iterator, List, Tuple

import networkx as nx
import numpy as np
import pytest

from chainrec.chaingraph import TransitionGraph, build_graph, morse_partition
from chainrec.grid import Domain, Grid
from chainrec.logging_config import DevFormatter, JSONFormatter
from chainrec.mapdef import build_map, builtin_spec

NS_CELLS = 1024
NS_EPSILON = 2 / 1024
NS_NORTH = (0, 1, 1022, 1023)
NS_SOUTH = tuple(range(509, 515))


def circle_grid(n: int) -> Grid:
    return Grid(Domain.unit_circle(), (n,))


def builtin(name: str, **params):
    return build_map(builtin_spec(name, **params))


@pytest.fixture
def restore_root_logging():
    """Undo handler and level changes made by configure_logging."""
    root = logging.getLogger()
    level = root.level
    yield
    for handler in root.handlers[:]:
        if isinstance(handler.formatter, (JSONFormatter, DevFormatter)):
            root.removeHandler(handler)
    root.setLevel(level)


@pytest.fixture(scope="session")
def northsouth():
    grid = circle_grid(NS_CELLS)
    map_ = builtin("northsouth", a=0.1)
    graph = build_graph(grid, map_, NS_EPSILON, "center")
    return grid, map_, graph, morse_partition(graph)


@pytest.fixture(scope="session")
def identity_small():
    """Identity on an 8-cell circle, ε = 1.5/8."""
    grid = circle_grid(8)
    graph = build_graph(grid, builtin("identity"), 1.5 / 8, "center")
    return grid, graph


def chain_graph(transient: bool = True) -> TransitionGraph:
    """Three looped cells 0 -> 1 -> 2, through transient cells 3 and 4 when asked."""
    if transient:
        return TransitionGraph.from_adjacency([[0, 3], [1, 4], [2], [1], [2]])
    return TransitionGraph.from_adjacency([[0, 1], [1, 2], [2]])


# ---- Random graphs for oracle checks ----


def random_graph(rng: np.random.Generator, max_cells: int = 50) -> TransitionGraph:
    """Mostly-forward random digraph with local back edges; every cell has a successor."""
    n = int(rng.integers(8, max_cells + 1))
    adjacency: List[List[int]] = []
    for i in range(n):
        window = np.arange(i, min(n, i + 6))
        k = int(rng.integers(1, 3))
        succ = set(rng.choice(window, size=min(k, window.size), replace=False).tolist())
        if rng.random() < 0.15:
            succ.add(int(rng.integers(max(0, i - 3), i + 1)))
        adjacency.append(sorted(succ))
    return TransitionGraph.from_adjacency(adjacency)


def random_graphs(seed: int, count: int, max_morse: int, max_cells: int = 50) -> Iterator:
    """``count`` seeded graphs with at most ``max_morse`` Morse nodes, with their partitions."""
    rng = np.random.default_rng(seed)
    found = 0
    while found < count:
        graph = random_graph(rng, max_cells)
        partition = morse_partition(graph)
        if partition.num_morse <= max_morse:
            found += 1
            yield graph, partition


def to_networkx(graph: TransitionGraph) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(range(graph.num_cells))
    src, dst = graph.edges()
    g.add_edges_from(zip(src.tolist(), dst.tolist()))
    return g


def brute_force_recurrent(graph: TransitionGraph) -> frozenset:
    """Cells on a cycle, by path search in networkx."""
    g = to_networkx(graph)
    return frozenset(
        c for c in g.nodes if any(nx.has_path(g, s, c) for s in g.successors(c))
    )


# ---- Set-inclusion oracle for attractor pairs ----


def _cyclic_cells(g: nx.DiGraph) -> set:
    return {
        c
        for scc in nx.strongly_connected_components(g)
        for c in scc
        if len(scc) > 1 or g.has_edge(c, c)
    }


class PairOracle:
    """Morse nodes, downsets and attractor/repeller cell sets rebuilt from raw edges.

    Morse nodes are the cycle-bearing SCCs ordered by smallest cell. The
    attractor of a downset is every cell reachable (length >= 0) from its
    nodes; the repeller is every cell outside it with a successor path that
    ends on a cycle without entering the attractor.
    """

    def __init__(self, graph: TransitionGraph):
        self.g = to_networkx(graph)
        cyclic = _cyclic_cells(self.g)
        sccs = [s for s in nx.strongly_connected_components(self.g) if s & cyclic]
        self.nodes: List[FrozenSet[int]] = sorted((frozenset(s) for s in sccs), key=min)
        self.below: Dict[int, set] = {
            i: {
                j
                for j, other in enumerate(self.nodes)
                if j != i and nx.has_path(self.g, min(node), min(other))
            }
            for i, node in enumerate(self.nodes)
        }

    def canonical_downsets(self) -> List[FrozenSet[int]]:
        return [frozenset({i} | self.below[i]) for i in range(len(self.nodes))]

    def all_downsets(self) -> List[FrozenSet[int]]:
        found = []
        everything = range(len(self.nodes))
        for size in range(len(self.nodes) + 1):
            for subset in combinations(everything, size):
                d = frozenset(subset)
                if all(self.below[i] <= d for i in d):
                    found.append(d)
        return found

    def pair(self, downset: FrozenSet[int]) -> Tuple[FrozenSet[int], FrozenSet[int]]:
        seeds = set().union(*(self.nodes[i] for i in downset)) if downset else set()
        attractor = set(seeds)
        for c in seeds:
            attractor |= nx.descendants(self.g, c)
        rest = self.g.subgraph(set(self.g.nodes) - attractor)
        loops = _cyclic_cells(rest)
        repeller = {c for c in rest.nodes if c in loops or nx.descendants(rest, c) & loops}
        return frozenset(attractor), frozenset(repeller)

    def membership_digits(self, attractors: List[FrozenSet[int]]) -> List[List[int]]:
        """Digit per (node, pair): 0 when the node lies in A, 1 when it lies in A*."""
        by_attractor = dict(self.pair(d) for d in self.all_downsets())
        assert set(attractors) <= set(by_attractor)
        rows = []
        for node in self.nodes:
            row = []
            for a in attractors:
                r = by_attractor[a]
                assert node <= a or node <= r
                row.append(0 if node <= a else 1)
            rows.append(row)
        return rows
