"""
Lyapunov functions on a transition graph.

Per attractor pair:
- g0(c) = d(c, A) / (d(c, A) + d(c, A*)) between cell centers
- g1(c) = max of g0 over c and everything c reaches
- g(c) = (g1(c) + max over successors of g) / 2 off A ∪ A*, with g = 0 on A
  and 1 on A*; this is the exact fixpoint of the averaged series and is
  evaluated once in reverse topological order

The complete function sums 2 gₙ / 3ⁿ over the coded pairs. On recurrent
cells that sum is an exact ternary fraction whose digits are 0 or 2, one
digit per pair, so distinct Morse nodes get distinct critical values. A
small rank term η·h on transient cells keeps the function strictly
decreasing along every edge leaving a transient cell.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .chaingraph import MorsePartition, TransitionGraph
from .conley import AttractorFamily, AttractorPair, SeparationReport, verify_separation
from .grid import Grid
from .logging_config import log_timing

logger = logging.getLogger(__name__)

# Below this, η·h no longer survives float addition to values near 1.
MIN_RESOLVABLE_STEP = 1e-14


class PairFunctionError(ValueError):
    """Pair unusable for a Lyapunov function (empty or overlapping sides)."""


class SeparationError(RuntimeError):
    """The family does not separate all Morse nodes."""


@dataclass(frozen=True, eq=False)
class PairFunction:
    values: np.ndarray
    pair_index: int


@dataclass(frozen=True, eq=False)
class CompleteLyapunov:
    """Complete Lyapunov function with exact codes for the Morse nodes.

    ``node_codes[i]`` is the exact value on Morse node i and ``digits[i]``
    its membership vector over the coded pairs (0: in A, 1: in A*).
    """

    values: np.ndarray
    node_codes: Tuple[Fraction, ...]
    digits: np.ndarray
    k: int
    eta: float
    family_kind: str
    max_neighbor_jump: float = 0.0

    @property
    def critical_values(self) -> List[Fraction]:
        return sorted(set(self.node_codes))


# ---- Ternary coding ----


def ternary_digits(value: Fraction, k: int) -> Optional[List[int]]:
    """First ``k`` base-3 digits of ``value`` in [0, 1); None if more are needed."""
    scaled = value * 3**k
    if scaled.denominator != 1 or not 0 <= scaled.numerator < 3**k:
        return None
    n = scaled.numerator
    digits = []
    for _ in range(k):
        n, r = divmod(n, 3)
        digits.append(r)
    return digits[::-1]


def cantor_code(digits: Sequence[int]) -> Fraction:
    """Σ 2 vₙ / 3ⁿ for membership digits vₙ ∈ {0, 1}."""
    k = len(digits)
    numerator = sum(2 * int(v) * 3 ** (k - n) for n, v in enumerate(digits, start=1))
    return Fraction(numerator, 3**k)


# ---- Pair functions ----


def _distance_to(grid: Grid, targets: np.ndarray) -> np.ndarray:
    """Center-to-center distance from every cell to the nearest target cell."""
    dom = grid.domain
    # ordinary axes get a box wide enough that nothing wraps
    boxsize = np.where(dom.periodic_mask, dom.spans, 3.0 * dom.spans)
    tree = cKDTree(grid.centers(targets) - dom.lows, boxsize=boxsize)
    distances, _ = tree.query(grid.all_centers() - dom.lows, k=1)
    return distances


def pair_g0(grid: Grid, pair: AttractorPair) -> np.ndarray:
    """d(c, A) / (d(c, A) + d(c, A*)) with cell-center distances."""
    a_cells = np.flatnonzero(pair.attractor_mask)
    r_cells = np.flatnonzero(pair.repeller_mask)
    if a_cells.size == 0 or r_cells.size == 0:
        raise PairFunctionError("attractor and repeller must both be non-empty")
    if np.any(pair.attractor_mask & pair.repeller_mask):
        raise PairFunctionError("attractor and repeller overlap")
    d_a = _distance_to(grid, a_cells)
    d_r = _distance_to(grid, r_cells)
    g0 = d_a / (d_a + d_r)
    g0[pair.attractor_mask] = 0.0
    g0[pair.repeller_mask] = 1.0
    return g0


def pair_g1(partition: MorsePartition, g0: np.ndarray) -> np.ndarray:
    """max of g0 over each cell and everything it reaches."""
    scc_value = np.zeros(partition.num_components)
    np.maximum.at(scc_value, partition.component_of, g0)
    for s in reversed(partition.topological_order):
        succ = partition.scc_successors[s]
        if succ.size:
            scc_value[s] = max(scc_value[s], scc_value[succ].max())
    return scc_value[partition.component_of]


def pair_lyapunov(
    graph: TransitionGraph,
    partition: MorsePartition,
    pair: AttractorPair,
    grid: Grid,
    pair_index: int = 0,
) -> PairFunction:
    """Lyapunov function of one pair: 0 on A, 1 on A*, non-increasing on edges."""
    if pair.trivial:
        raise PairFunctionError("trivial pairs have no Lyapunov function")
    g1 = pair_g1(partition, pair_g0(grid, pair))

    values = np.full(graph.num_cells, np.nan)
    values[pair.attractor_mask] = 0.0
    values[pair.repeller_mask] = 1.0
    free = ~(pair.attractor_mask | pair.repeller_mask)
    cyclic_free = free & partition.recurrent_mask
    values[cyclic_free] = g1[cyclic_free]

    # transient cells are singleton SCCs; successors come later in the order
    rank = partition.topological_rank[partition.component_of]
    pending = np.flatnonzero(free & ~partition.recurrent_mask)
    for c in pending[np.argsort(-rank[pending], kind="stable")]:
        values[c] = (g1[c] + values[graph.successors(c)].max()) / 2.0
    return PairFunction(values=values, pair_index=pair_index)


# ---- Complete function ----


def _neighbor_jump(grid: Grid, values: np.ndarray) -> float:
    """Largest |value difference| between grid-adjacent cells."""
    grid_values = values.reshape(grid.shape)
    jump = 0.0
    for axis in range(grid.dim):
        if grid.shape[axis] < 2:
            continue
        if grid.domain.periodic[axis]:
            diff = np.abs(grid_values - np.roll(grid_values, 1, axis=axis))
        else:
            diff = np.abs(np.diff(grid_values, axis=axis))
        jump = max(jump, float(diff.max()))
    return jump


@log_timing(operation="complete Lyapunov function")
def complete_lyapunov(
    graph: TransitionGraph,
    partition: MorsePartition,
    family: AttractorFamily,
    grid: Grid,
    separation: Optional[SeparationReport] = None,
    eta_correction: bool = True,
) -> CompleteLyapunov:
    """Σ 2 gₙ / 3ⁿ over the coded pairs plus η·h on transient cells.

    Refuses (``SeparationError``) unless the family separates every pair of
    Morse nodes. ``eta_correction=False`` drops the rank term.
    """
    if separation is None:
        separation = verify_separation(graph, partition, family)
    if not separation.ok:
        raise SeparationError(
            f"family does not separate Morse nodes {separation.unseparated[:5]} "
            f"(split nodes: {separation.split_nodes[:5]})"
        )
    coded = family.coded_pairs
    k = len(coded)

    digits = np.zeros((partition.num_morse, k), dtype=np.int64)
    total = np.zeros(graph.num_cells)
    for n, pair in enumerate(coded, start=1):
        g = pair_lyapunov(graph, partition, pair, grid, pair_index=n).values
        total += 2.0 * g / 3.0**n
        for m, cells in enumerate(partition.morse_nodes):
            digits[m, n - 1] = 1 if pair.side_of(cells) == "repeller" else 0

    node_codes = tuple(cantor_code(row) for row in digits)

    eta = 3.0 ** -(k + 1) if eta_correction else 0.0
    n_scc = partition.num_components
    h = (n_scc - partition.topological_rank) / n_scc
    transient = ~partition.recurrent_mask
    values = total.copy()
    values[transient] += eta * h[partition.component_of[transient]]
    for m, cells in enumerate(partition.morse_nodes):
        values[list(cells)] = float(node_codes[m])

    if eta_correction and eta / n_scc < MIN_RESOLVABLE_STEP and transient.any():
        logger.warning(
            "Transient correction %.3g is near float resolution; strict decrease may not be resolvable",
            eta / n_scc,
            extra={"pairs_count": k},
        )
    return CompleteLyapunov(
        values=values,
        node_codes=node_codes,
        digits=digits,
        k=k,
        eta=eta,
        family_kind=family.kind,
        max_neighbor_jump=_neighbor_jump(grid, values),
    )


# ---- Verification ----


@dataclass
class CompleteReport:
    """The three conditions of a complete Lyapunov function, with witnesses."""

    decreasing: bool
    separating: bool
    cantor_digits: bool
    decreasing_witness: Optional[Tuple[int, int]] = None
    separating_witness: Optional[Tuple[int, int]] = None
    cantor_witness: Optional[Fraction] = None
    critical_count: int = 0
    notes: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.decreasing and self.separating and self.cantor_digits

    def to_dict(self) -> Dict[str, object]:
        return {
            "ok": self.ok,
            "decreasing": self.decreasing,
            "decreasing_witness": list(self.decreasing_witness) if self.decreasing_witness else None,
            "separating": self.separating,
            "separating_witness": list(self.separating_witness) if self.separating_witness else None,
            "cantor_digits": self.cantor_digits,
            "cantor_witness": str(self.cantor_witness) if self.cantor_witness is not None else None,
            "critical_count": self.critical_count,
        }


def verify_complete(
    graph: TransitionGraph,
    partition: MorsePartition,
    lyap: CompleteLyapunov,
) -> CompleteReport:
    """Check strict decrease off the recurrent set, node separation and Cantor digits."""
    values = lyap.values
    recurrent = partition.recurrent_mask

    # 1: strict decrease along every edge out of a transient cell
    src, dst = graph.edges()
    out_of_transient = ~recurrent[src]
    bad = out_of_transient & ~(values[dst] < values[src])
    decreasing_witness = None
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        decreasing_witness = (int(src[j]), int(dst[j]))

    # 2: equal on recurrent cells iff same Morse node (exact codes)
    separating_witness = None
    for m, cells in enumerate(partition.morse_nodes):
        idx = np.array(cells)
        odd = idx[values[idx] != float(lyap.node_codes[m])]
        if odd.size:
            separating_witness = (int(cells[0]), int(odd[0]))
            break
    if separating_witness is None:
        seen: Dict[Fraction, int] = {}
        for m, code in enumerate(lyap.node_codes):
            if code in seen:
                other = seen[code]
                separating_witness = (
                    partition.morse_nodes[other][0],
                    partition.morse_nodes[m][0],
                )
                break
            seen[code] = m

    # 3: critical values have ternary digits 0/2 only, within k digits
    cantor_witness = None
    for code in lyap.critical_values:
        digits = ternary_digits(code, lyap.k)
        if digits is None or any(d == 1 for d in digits):
            cantor_witness = code
            break

    report = CompleteReport(
        decreasing=decreasing_witness is None,
        separating=separating_witness is None,
        cantor_digits=cantor_witness is None,
        decreasing_witness=decreasing_witness,
        separating_witness=separating_witness,
        cantor_witness=cantor_witness,
        critical_count=len(lyap.critical_values),
    )
    if not out_of_transient.any():
        report.notes.append("no transient cells: decrease condition is vacuous")
    if not report.ok:
        logger.warning("Complete Lyapunov verification failed: %s", report.to_dict())
    return report
