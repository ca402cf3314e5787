"""
Statistical recurrence checks.

``simulate_returns`` samples seeded uniform points, iterates the map and
records the first time each orbit comes back within δ of its start. For
maps preserving Lebesgue measure almost every point returns, so the
returned fraction should approach 1 as the iteration budget grows.

``connectivity_check`` asks whether every cell chains to every other, which
is what a measure positive on open sets forces on a connected domain.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .chaingraph import EdgeMode, MorsePartition, TransitionGraph, morse_partition
from .grid import Grid
from .logging_config import log_timing
from .mapdef import MapInstance

logger = logging.getLogger(__name__)

NOT_LEBESGUE_WARNING = (
    "map is not known to preserve Lebesgue measure; recurrence of almost every "
    "point is not guaranteed"
)


@dataclass
class RecurrenceReport:
    n_points: int
    n_iters: int
    delta: float
    seed: int
    returned_fraction: float
    return_time_histogram: List[Tuple[int, int, int]]
    first_returns: np.ndarray = field(repr=False)
    starts: np.ndarray = field(repr=False, default_factory=lambda: np.empty((0, 0)))
    preserves_lebesgue: bool = True
    warning: Optional[str] = None

    @property
    def returned_count(self) -> int:
        return int((self.first_returns > 0).sum())


def return_time_histogram(first_returns: np.ndarray, n_iters: int) -> List[Tuple[int, int, int]]:
    """Counts per power-of-two bucket [2^b, 2^(b+1) - 1], clipped to n_iters."""
    n_buckets = int(np.floor(np.log2(max(n_iters, 1)))) + 1
    returned = first_returns[first_returns > 0]
    bucket = np.floor(np.log2(returned)).astype(np.int64) if returned.size else returned
    counts = np.bincount(bucket, minlength=n_buckets)
    return [
        (2**b, min(2 ** (b + 1) - 1, n_iters), int(counts[b])) for b in range(n_buckets)
    ]


@log_timing(operation="recurrence simulation")
def simulate_returns(
    map_: MapInstance,
    n_points: int,
    n_iters: int,
    delta: float,
    seed: int = 0,
) -> RecurrenceReport:
    """First return within ``delta`` for ``n_points`` seeded uniform starts."""
    if n_points < 1 or n_iters < 1 or delta <= 0:
        raise ValueError("n_points, n_iters and delta must be positive")
    warning = None
    if not map_.preserves_lebesgue:
        warning = NOT_LEBESGUE_WARNING
        logger.warning("%s: %s", map_.spec.describe(), warning)

    dom = map_.domain
    rng = np.random.default_rng(seed)
    start = dom.lows + rng.random((n_points, dom.dim)) * dom.spans
    first = np.zeros(n_points, dtype=np.int64)
    orbit = start
    for t in range(1, n_iters + 1):
        orbit = map_(orbit)
        hit = (first == 0) & (dom.distances(orbit, start) < delta)
        first[hit] = t
        if np.all(first > 0):
            break

    report = RecurrenceReport(
        n_points=n_points,
        n_iters=n_iters,
        delta=float(delta),
        seed=seed,
        returned_fraction=float((first > 0).sum()) / n_points,
        return_time_histogram=return_time_histogram(first, n_iters),
        first_returns=first,
        starts=start,
        preserves_lebesgue=map_.preserves_lebesgue,
        warning=warning,
    )
    logger.info(
        "Returned fraction %.4f after at most %d iterations", report.returned_fraction, n_iters
    )
    return report


@dataclass
class ConnectivityReport:
    strongly_connected: bool
    witness: Optional[Tuple[int, int]] = None

    def to_dict(self) -> Dict[str, object]:
        return {
            "strongly_connected": self.strongly_connected,
            "witness": list(self.witness) if self.witness else None,
        }


def connectivity_check(
    graph: TransitionGraph, partition: Optional[MorsePartition] = None
) -> ConnectivityReport:
    """Strong connectivity; on failure a pair (u, v) with no chain from u to v.

    u is the smallest cell of the first sink component and v the smallest
    cell of the first source component other than it (any other component
    when the only source is u's).
    """
    partition = partition or morse_partition(graph)
    n_comp = partition.num_components
    if n_comp == 1:
        return ConnectivityReport(strongly_connected=True)
    cond = partition.condensation
    sinks = [s for s in range(n_comp) if cond.out_degree(s) == 0]
    sources = [s for s in range(n_comp) if cond.in_degree(s) == 0]
    sink = sinks[0]
    others = [s for s in sources if s != sink] or [s for s in range(n_comp) if s != sink]
    return ConnectivityReport(
        strongly_connected=False,
        witness=(int(partition.first_cells[sink]), int(partition.first_cells[others[0]])),
    )


@dataclass
class RecurrentCellsReport:
    """Sampled recurrent points against the chain-recurrent cells of a graph."""

    holds: bool
    checked: int
    outside: List[int] = field(default_factory=list)
    rigorous: bool = True


def recurrent_cells_are_chain_recurrent(
    grid: Grid,
    map_: MapInstance,
    graph: TransitionGraph,
    n_points: int = 1000,
    n_iters: int = 1000,
    delta: Optional[float] = None,
    seed: int = 0,
) -> RecurrentCellsReport:
    """Every sampled point that returns within δ <= ε must sit in a chain-recurrent cell.

    Guaranteed for outer-mode graphs of maps with a rigorous Lipschitz
    bound; other combinations are reported with ``rigorous=False``.
    """
    delta = graph.epsilon if delta is None else delta
    if delta > graph.epsilon:
        raise ValueError(f"delta={delta} exceeds the graph epsilon {graph.epsilon}")
    report = simulate_returns(map_, n_points, n_iters, delta, seed)
    returned = report.first_returns > 0
    cells = grid.cells_of(report.starts[returned]) if returned.any() else np.array([], dtype=np.int64)
    recurrent = morse_partition(graph).recurrent_mask
    outside = sorted(set(cells[~recurrent[cells]].tolist()))
    return RecurrentCellsReport(
        holds=not outside,
        checked=int(returned.sum()),
        outside=outside,
        rigorous=graph.mode is EdgeMode.OUTER and map_.lipschitz_rigorous,
    )
