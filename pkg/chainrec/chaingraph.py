"""
ε-transition graphs over grid cells and their recurrent structure.

An edge c -> c' is one allowed ε-chain step. ``center`` mode uses only cell
centers (metric(f(center c), center c') < ε); ``outer`` mode fattens the
image ball by the Lipschitz bound so that every true ε-step from any point of
c to any point of c' is covered.

Recurrent structure comes from strongly connected components: an SCC carries
a cycle when it has two or more cells or a self-loop, and those SCCs are the
Morse nodes. Components and Morse nodes are numbered by their smallest cell.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .grid import Grid
from .logging_config import log_timing
from .mapdef import MapInstance

logger = logging.getLogger(__name__)


class EdgeMode(str, Enum):
    CENTER = "center"
    OUTER = "outer"


class GraphConstructionError(ValueError):
    """Bad ε, or a cell whose image neighbourhood holds no cell."""


@dataclass(frozen=True, eq=False)
class TransitionGraph:
    """Cell digraph in CSR form; each row is sorted and duplicate-free."""

    num_cells: int
    indptr: np.ndarray
    indices: np.ndarray
    epsilon: float = 0.0
    mode: EdgeMode = EdgeMode.CENTER

    @classmethod
    def from_edges(
        cls,
        num_cells: int,
        src: np.ndarray,
        dst: np.ndarray,
        epsilon: float = 0.0,
        mode: EdgeMode = EdgeMode.CENTER,
    ) -> "TransitionGraph":
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= num_cells):
            raise GraphConstructionError(f"edge endpoint outside [0, {num_cells})")
        keys = np.unique(src * num_cells + dst)
        rows, cols = np.divmod(keys, num_cells)
        indptr = np.zeros(num_cells + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=num_cells), out=indptr[1:])
        return cls(num_cells, indptr, cols.astype(np.int64), float(epsilon), EdgeMode(mode))

    @classmethod
    def from_adjacency(
        cls,
        adjacency: Sequence[Iterable[int]],
        epsilon: float = 0.0,
        mode: EdgeMode = EdgeMode.CENTER,
    ) -> "TransitionGraph":
        """Graph from explicit successor lists (cell i -> adjacency[i])."""
        src: List[int] = []
        dst: List[int] = []
        for cell, succs in enumerate(adjacency):
            for s in succs:
                src.append(cell)
                dst.append(int(s))
        return cls.from_edges(len(adjacency), np.array(src), np.array(dst), epsilon, mode)

    @property
    def edge_count(self) -> int:
        return int(self.indices.size)

    @property
    def out_degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def successors(self, c: int) -> np.ndarray:
        return self.indices[self.indptr[c] : self.indptr[c + 1]]

    def adjacency(self) -> List[List[int]]:
        return [self.successors(c).tolist() for c in range(self.num_cells)]

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """``(src, dst)`` in (src, dst) order."""
        return np.repeat(np.arange(self.num_cells), self.out_degrees), self.indices

    @cached_property
    def csr(self) -> csr_matrix:
        data = np.ones(self.indices.size, dtype=np.int8)
        return csr_matrix(
            (data, self.indices, self.indptr), shape=(self.num_cells, self.num_cells)
        )

    @cached_property
    def csr_t(self) -> csr_matrix:
        return self.csr.T.tocsr()

    @cached_property
    def self_loops(self) -> np.ndarray:
        src, dst = self.edges()
        mask = np.zeros(self.num_cells, dtype=bool)
        mask[src[src == dst]] = True
        return mask


# ---- Construction ----


def _image_radius(grid: Grid, map_: MapInstance, epsilon: float, mode: EdgeMode) -> float:
    if mode is EdgeMode.CENTER:
        return epsilon
    half = grid.cell_diameter() / 2.0
    return epsilon + map_.lipschitz * half + half


def _cell_block_edges(
    grid: Grid,
    map_: MapInstance,
    epsilon: float,
    mode: EdgeMode,
    radius: float,
    start: int,
    stop: int,
) -> Tuple[np.ndarray, np.ndarray]:
    cells = np.arange(start, stop)
    images = map_(grid.centers(cells))
    rows, cand = grid.candidate_pairs(images, radius)
    if mode is EdgeMode.CENTER:
        keep = grid.domain.distances(images[rows], grid.centers(cand)) < epsilon
    else:
        keep = grid.box_distances(images[rows], cand) <= radius
    return cells[rows[keep]], cand[keep]


@log_timing(operation="graph construction")
def build_graph(
    grid: Grid,
    map_: MapInstance,
    epsilon: float,
    mode: EdgeMode | str = EdgeMode.CENTER,
    workers: int = 1,
) -> TransitionGraph:
    """ε-transition graph of ``map_`` on ``grid``.

    Cells are processed in independent blocks, concurrently when
    ``workers > 1``; blocks are merged in cell order so the result does not
    depend on the worker count.
    """
    if not np.isfinite(epsilon) or epsilon <= 0:
        raise GraphConstructionError(f"epsilon must be positive, got {epsilon}")
    if map_.domain != grid.domain:
        raise GraphConstructionError("map and grid are defined on different domains")
    mode = EdgeMode(mode)
    radius = _image_radius(grid, map_, epsilon, mode)
    block = grid.chunk_size(radius)
    n = grid.num_cells
    bounds = [(start, min(start + block, n)) for start in range(0, n, block)]

    def run(span: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
        return _cell_block_edges(grid, map_, epsilon, mode, radius, *span)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(run, bounds))
    else:
        parts = [run(span) for span in bounds]

    src = np.concatenate([p[0] for p in parts])
    dst = np.concatenate([p[1] for p in parts])
    graph = TransitionGraph.from_edges(n, src, dst, epsilon, mode)

    empty = np.flatnonzero(graph.out_degrees == 0)
    if empty.size:
        raise GraphConstructionError(
            f"{empty.size} cells have no successor (first: cell {int(empty[0])}); "
            f"epsilon={epsilon} is below the distance from an image to every "
            f"cell center, use a larger epsilon or outer mode"
        )
    logger.info(
        "Built %s-mode transition graph",
        mode.value,
        extra={"cells_count": n, "edges_count": graph.edge_count},
    )
    return graph


def transpose(graph: TransitionGraph) -> TransitionGraph:
    """Same cells, every edge reversed."""
    src, dst = graph.edges()
    return TransitionGraph.from_edges(graph.num_cells, dst, src, graph.epsilon, graph.mode)


# ---- Reachability ----


def forward_closure(
    graph: TransitionGraph,
    seeds: np.ndarray,
    allowed: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Mask of cells reachable from ``seeds`` by paths of length >= 0 inside ``allowed``."""
    return _closure(graph.csr_t, seeds, allowed)


def backward_closure(
    graph: TransitionGraph,
    seeds: np.ndarray,
    allowed: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Mask of cells that reach ``seeds`` by paths of length >= 0 inside ``allowed``."""
    return _closure(graph.csr, seeds, allowed)


def _closure(step: csr_matrix, seeds: np.ndarray, allowed: Optional[np.ndarray]) -> np.ndarray:
    # step @ frontier marks the cells one edge away from the frontier
    visited = np.asarray(seeds, dtype=bool).copy()
    if allowed is not None:
        visited &= allowed
    frontier = visited.copy()
    while frontier.any():
        nxt = (step @ frontier.astype(np.int32)) > 0
        if allowed is not None:
            nxt &= allowed
        frontier = nxt & ~visited
        visited |= frontier
    return visited


def reachable(graph: TransitionGraph, start: int) -> FrozenSet[int]:
    """Cells at the end of some path of length >= 1 from ``start``."""
    seeds = np.zeros(graph.num_cells, dtype=bool)
    seeds[graph.successors(start)] = True
    return frozenset(np.flatnonzero(forward_closure(graph, seeds)).tolist())


def invariant_part(graph: TransitionGraph, allowed: np.ndarray) -> np.ndarray:
    """Cells of ``allowed`` that start an infinite path staying inside ``allowed``.

    These are the cells that reach, within ``allowed``, a cycle-bearing SCC of
    the restricted graph.
    """
    allowed = np.asarray(allowed, dtype=bool)
    ids = np.flatnonzero(allowed)
    if ids.size == 0:
        return allowed.copy()
    sub = graph.csr[ids][:, ids]
    n_comp, labels = connected_components(sub, directed=True, connection="strong")
    sizes = np.bincount(labels, minlength=n_comp)
    looped = np.zeros(n_comp, dtype=bool)
    looped[labels[sub.diagonal() > 0]] = True
    cyclic = (sizes >= 2) | looped
    seeds = np.zeros(graph.num_cells, dtype=bool)
    seeds[ids[cyclic[labels]]] = True
    return backward_closure(graph, seeds, allowed)


# ---- Morse decomposition ----


@dataclass(frozen=True, eq=False)
class MorsePartition:
    """SCC condensation of a transition graph with its cycle-bearing components.

    ``component_of[c]`` is the SCC of cell c; ``morse_of[c]`` its Morse node
    or -1 for transient cells. ``first_cells[s]`` is the smallest cell of SCC
    s, increasing with s. ``topological_order`` lists SCC ids sources first
    (attractor-most last). ``scc_reach[s]`` holds the Morse nodes at
    the end of a non-empty condensation path from SCC s.
    """

    component_of: np.ndarray
    morse_of: np.ndarray
    morse_nodes: Tuple[Tuple[int, ...], ...]
    morse_scc: Tuple[int, ...]
    condensation: nx.DiGraph
    topological_order: Tuple[int, ...]
    scc_successors: Tuple[np.ndarray, ...] = field(repr=False)
    scc_reach: Tuple[FrozenSet[int], ...] = field(repr=False)
    first_cells: np.ndarray = field(repr=False)

    @property
    def num_cells(self) -> int:
        return int(self.component_of.size)

    @property
    def num_components(self) -> int:
        return len(self.scc_successors)

    @property
    def num_morse(self) -> int:
        return len(self.morse_nodes)

    @property
    def recurrent_mask(self) -> np.ndarray:
        return self.morse_of >= 0

    @property
    def transient_cells(self) -> FrozenSet[int]:
        return frozenset(np.flatnonzero(self.morse_of < 0).tolist())

    @property
    def morse_reach(self) -> Tuple[FrozenSet[int], ...]:
        """Morse nodes reachable from each node, the node itself excluded."""
        return tuple(self.scc_reach[s] for s in self.morse_scc)

    @cached_property
    def topological_rank(self) -> np.ndarray:
        """Position of every SCC in ``topological_order``."""
        rank = np.empty(self.num_components, dtype=np.int64)
        rank[list(self.topological_order)] = np.arange(self.num_components)
        return rank

    @property
    def node_order(self) -> Tuple[int, ...]:
        """Morse node ids in topological order."""
        morse_of_scc = {s: i for i, s in enumerate(self.morse_scc)}
        return tuple(morse_of_scc[s] for s in self.topological_order if s in morse_of_scc)

    def downset_of(self, node: int) -> FrozenSet[int]:
        """Node plus every Morse node reachable from it."""
        return self.scc_reach[self.morse_scc[node]] | {node}

    def node_mask(self, nodes: Iterable[int]) -> np.ndarray:
        wanted = np.zeros(self.num_morse + 1, dtype=bool)
        wanted[list(nodes)] = True
        return wanted[self.morse_of]  # index -1 hits the trailing False

    def morse_graph(self) -> nx.DiGraph:
        """Hasse diagram of the reachability order on Morse nodes."""
        order = nx.DiGraph()
        order.add_nodes_from(range(self.num_morse))
        for i, reach in enumerate(self.morse_reach):
            order.add_edges_from((i, j) for j in sorted(reach))
        hasse = nx.transitive_reduction(order)
        reduced = nx.DiGraph()
        for i, cells in enumerate(self.morse_nodes):
            reduced.add_node(i, size=len(cells), min_cell=cells[0])
        reduced.add_edges_from(sorted(hasse.edges()))
        return reduced


@log_timing(operation="Morse decomposition")
def morse_partition(graph: TransitionGraph) -> MorsePartition:
    n_comp, raw = connected_components(graph.csr, directed=True, connection="strong")
    # renumber components by smallest contained cell
    first_cell = np.full(n_comp, graph.num_cells, dtype=np.int64)
    np.minimum.at(first_cell, raw, np.arange(graph.num_cells))
    relabel = np.empty(n_comp, dtype=np.int64)
    relabel[np.argsort(first_cell, kind="stable")] = np.arange(n_comp)
    component_of = relabel[raw]

    sizes = np.bincount(component_of, minlength=n_comp)
    looped = np.zeros(n_comp, dtype=bool)
    looped[component_of[graph.self_loops]] = True
    cyclic = (sizes >= 2) | looped
    morse_scc = np.flatnonzero(cyclic)
    morse_of_scc = np.full(n_comp, -1, dtype=np.int64)
    morse_of_scc[morse_scc] = np.arange(morse_scc.size)
    morse_of = morse_of_scc[component_of]

    members = np.argsort(component_of, kind="stable")
    splits = np.split(members, np.cumsum(sizes)[:-1])
    morse_nodes = tuple(tuple(splits[s].tolist()) for s in morse_scc)

    src, dst = graph.edges()
    cs, cd = component_of[src], component_of[dst]
    cross = np.unique(cs[cs != cd] * n_comp + cd[cs != cd])
    heads, tails = np.divmod(cross, n_comp)
    cond = nx.DiGraph()
    for s in range(n_comp):
        cond.add_node(s, size=int(sizes[s]), morse=int(morse_of_scc[s]))
    cond.add_edges_from(zip(heads.tolist(), tails.tolist()))
    order = tuple(nx.lexicographical_topological_sort(cond))

    # cross is sorted, so each SCC's successor block is sorted too
    bounds = np.searchsorted(heads, np.arange(n_comp + 1))
    scc_successors = tuple(tails[bounds[s] : bounds[s + 1]] for s in range(n_comp))

    # Morse nodes below each SCC, accumulated in reverse topological order
    scc_reach: List[FrozenSet[int]] = [frozenset()] * n_comp
    for s in reversed(order):
        acc: set = set()
        for t in scc_successors[s].tolist():
            acc |= scc_reach[t]
            if morse_of_scc[t] >= 0:
                acc.add(int(morse_of_scc[t]))
        scc_reach[s] = frozenset(acc)

    logger.info(
        "Morse decomposition: %d components",
        n_comp,
        extra={"cells_count": graph.num_cells, "morse_count": len(morse_nodes)},
    )
    return MorsePartition(
        component_of=component_of,
        morse_of=morse_of,
        morse_nodes=morse_nodes,
        morse_scc=tuple(int(s) for s in morse_scc),
        condensation=cond,
        topological_order=order,
        scc_successors=scc_successors,
        scc_reach=tuple(scc_reach),
        first_cells=np.sort(first_cell),
    )


def chain_recurrent_cells(graph: TransitionGraph) -> FrozenSet[int]:
    """Cells lying on a cycle (union of the Morse nodes)."""
    return frozenset(np.flatnonzero(morse_partition(graph).recurrent_mask).tolist())


def omega_nodes(graph: TransitionGraph, partition: MorsePartition, c: int) -> FrozenSet[int]:
    """Morse nodes met by paths from ``c`` (its own node included when recurrent)."""
    if not 0 <= c < graph.num_cells:
        raise IndexError(f"cell {c} out of range [0, {graph.num_cells})")
    reach = partition.scc_reach[int(partition.component_of[c])]
    own = int(partition.morse_of[c])
    return reach | {own} if own >= 0 else reach
