"""
Attractors, dual repellers and the attractor lattice of a transition graph.

A set of Morse nodes closed under reachability (a downset) generates an
attractor: everything reachable from those nodes. Its dual repeller is the
part of the complement that can run forever without entering the attractor.

Two families are built from these pairs:
- ``canonical``: one pair per Morse node (the node plus everything below it)
- ``full``: every downset of the Morse order, capped because it can be
  exponential in the number of Morse nodes

Both feed the verification of the structure theorems: recurrent cells are
exactly the cells lying in A or A* for every pair, and any two distinct Morse
nodes are split by some pair.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Literal, Optional, Tuple

import numpy as np

from .chaingraph import (
    MorsePartition,
    TransitionGraph,
    forward_closure,
    invariant_part,
)
from .logging_config import log_timing

logger = logging.getLogger(__name__)

DEFAULT_LATTICE_CAP = 15

FamilyKind = Literal["canonical", "full"]
Side = Literal["attractor", "repeller"]


class DownsetError(ValueError):
    """Downset is not closed under reachability or names unknown nodes."""


class LatticeCapExceeded(RuntimeError):
    """Too many Morse nodes to enumerate every downset."""

    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(f"{count} Morse nodes exceed the full-lattice cap of {cap}")


@dataclass(frozen=True, eq=False)
class AttractorPair:
    """Attractor/dual-repeller pair generated by a downset of Morse nodes."""

    attractor_mask: np.ndarray
    repeller_mask: np.ndarray
    downset: FrozenSet[int]
    trivial: bool

    @property
    def attractor(self) -> FrozenSet[int]:
        return frozenset(np.flatnonzero(self.attractor_mask).tolist())

    @property
    def repeller(self) -> FrozenSet[int]:
        return frozenset(np.flatnonzero(self.repeller_mask).tolist())

    @property
    def attractor_size(self) -> int:
        return int(self.attractor_mask.sum())

    @property
    def repeller_size(self) -> int:
        return int(self.repeller_mask.sum())

    def sort_key(self) -> Tuple[int, int]:
        cells = np.flatnonzero(self.attractor_mask)
        return (cells.size, int(cells[0]) if cells.size else -1)

    def side_of(self, cells: Iterable[int]) -> Optional[Side]:
        """Which side holds all of ``cells``; None when they are split or outside."""
        idx = np.fromiter(cells, dtype=np.int64)
        if self.attractor_mask[idx].all():
            return "attractor"
        if self.repeller_mask[idx].all():
            return "repeller"
        return None


@dataclass(frozen=True)
class AttractorFamily:
    """Deterministically ordered pairs; non-trivial ones are coded 1..k."""

    pairs: Tuple[AttractorPair, ...]
    kind: FamilyKind

    @property
    def coded_pairs(self) -> Tuple[AttractorPair, ...]:
        return tuple(p for p in self.pairs if not p.trivial)

    @property
    def k(self) -> int:
        return len(self.coded_pairs)

    def summary(self) -> List[Dict[str, object]]:
        """Per-pair JSON fragment; ``index`` is the coding index (0 for trivial pairs)."""
        rows: List[Dict[str, object]] = []
        index = 0
        for pair in self.pairs:
            if not pair.trivial:
                index += 1
            rows.append(
                {
                    "index": 0 if pair.trivial else index,
                    "downset": sorted(pair.downset),
                    "attractor_size": pair.attractor_size,
                    "repeller_size": pair.repeller_size,
                    "trivial": pair.trivial,
                }
            )
        return rows


# ---- Pair construction ----


def _check_downset(partition: MorsePartition, downset: FrozenSet[int]) -> None:
    unknown = [m for m in downset if not 0 <= m < partition.num_morse]
    if unknown:
        raise DownsetError(f"unknown Morse nodes {sorted(unknown)}")
    for m in sorted(downset):
        missing = partition.morse_reach[m] - downset
        if missing:
            raise DownsetError(
                f"downset contains node {m} but not the nodes below it: {sorted(missing)}"
            )


def _pair_from_masks(
    graph: TransitionGraph,
    partition: MorsePartition,
    downset: FrozenSet[int],
    attractor: np.ndarray,
) -> AttractorPair:
    repeller = invariant_part(graph, ~attractor)
    trivial = len(downset) == 0 or len(downset) == partition.num_morse
    return AttractorPair(attractor, repeller, downset, trivial)


def attractor_from_downset(
    graph: TransitionGraph,
    partition: MorsePartition,
    downset: Iterable[int],
) -> AttractorPair:
    """A = the downset's cells plus everything they reach; A* = the invariant part of X∖A."""
    nodes = frozenset(int(m) for m in downset)
    _check_downset(partition, nodes)
    attractor = forward_closure(graph, partition.node_mask(nodes))
    return _pair_from_masks(graph, partition, nodes, attractor)


def _ordered(pairs: Iterable[AttractorPair]) -> Tuple[AttractorPair, ...]:
    unique: Dict[bytes, AttractorPair] = {}
    for pair in pairs:
        unique.setdefault(np.packbits(pair.attractor_mask).tobytes(), pair)
    return tuple(sorted(unique.values(), key=AttractorPair.sort_key))


@log_timing(operation="canonical family")
def canonical_family(graph: TransitionGraph, partition: MorsePartition) -> AttractorFamily:
    """One pair per Morse node, generated by the node and everything below it."""
    pairs = [
        attractor_from_downset(graph, partition, partition.downset_of(m))
        for m in range(partition.num_morse)
    ]
    family = AttractorFamily(_ordered(p for p in pairs if not p.trivial), "canonical")
    logger.info(
        "Canonical family built",
        extra={"morse_count": partition.num_morse, "pairs_count": len(family.pairs)},
    )
    return family


def enumerate_downsets(partition: MorsePartition) -> List[FrozenSet[int]]:
    """Every reachability-closed set of Morse nodes, by bitmask."""
    m = partition.num_morse
    below = [sum(1 << j for j in reach) for reach in partition.morse_reach]
    out: List[FrozenSet[int]] = []
    for mask in range(1 << m):
        if all(below[i] & ~mask == 0 for i in range(m) if mask >> i & 1):
            out.append(frozenset(i for i in range(m) if mask >> i & 1))
    return out


@log_timing(operation="full attractor lattice")
def full_lattice(
    graph: TransitionGraph,
    partition: MorsePartition,
    cap: int = DEFAULT_LATTICE_CAP,
) -> AttractorFamily:
    """Pairs for every downset, trivial ones included and flagged."""
    if partition.num_morse > cap:
        raise LatticeCapExceeded(partition.num_morse, cap)
    closures = [
        forward_closure(graph, partition.node_mask([m])) for m in range(partition.num_morse)
    ]
    pairs = []
    for downset in enumerate_downsets(partition):
        attractor = np.zeros(graph.num_cells, dtype=bool)
        for m in downset:
            attractor |= closures[m]
        pairs.append(_pair_from_masks(graph, partition, downset, attractor))
    family = AttractorFamily(_ordered(pairs), "full")
    logger.info(
        "Full attractor lattice built",
        extra={"morse_count": partition.num_morse, "pairs_count": len(family.pairs)},
    )
    return family


# ---- Verification ----


@dataclass
class LemmaDualReport:
    """Recurrent cells against the intersection of A ∪ A* over a family."""

    holds: bool
    easy_direction: bool
    recurrent: FrozenSet[int]
    intersection: FrozenSet[int]
    missing: List[int] = field(default_factory=list)
    extra: List[int] = field(default_factory=list)
    family_kind: str = "full"

    def to_dict(self) -> Dict[str, object]:
        return {
            "holds": self.holds,
            "easy_direction": self.easy_direction,
            "family": self.family_kind,
            "recurrent_count": len(self.recurrent),
            "intersection_count": len(self.intersection),
            "missing": self.missing,
            "extra": self.extra,
        }


def verify_lemma_dual(
    graph: TransitionGraph,
    partition: MorsePartition,
    family: AttractorFamily,
) -> LemmaDualReport:
    """Check recurrent cells == ∩ (A ∪ A*) over the family.

    ``missing`` lists recurrent cells outside the intersection (never
    expected); ``extra`` lists intersection cells that are not recurrent.
    """
    inter = np.ones(graph.num_cells, dtype=bool)
    for pair in family.pairs:
        inter &= pair.attractor_mask | pair.repeller_mask
    recurrent = partition.recurrent_mask
    missing = np.flatnonzero(recurrent & ~inter).tolist()
    extra = np.flatnonzero(inter & ~recurrent).tolist()
    report = LemmaDualReport(
        holds=not missing and not extra,
        easy_direction=not missing,
        recurrent=frozenset(np.flatnonzero(recurrent).tolist()),
        intersection=frozenset(np.flatnonzero(inter).tolist()),
        missing=missing,
        extra=extra,
        family_kind=family.kind,
    )
    if not report.holds:
        logger.warning(
            "Recurrent set differs from the pair intersection (%d missing, %d extra)",
            len(missing),
            len(extra),
        )
    return report


def separating_pair(
    family: AttractorFamily,
    partition: MorsePartition,
    first: int,
    second: int,
) -> Optional[int]:
    """Coding index (1-based) of the first pair putting the two nodes on opposite sides."""
    a_cells = partition.morse_nodes[first]
    b_cells = partition.morse_nodes[second]
    for index, pair in enumerate(family.coded_pairs, start=1):
        sides = {pair.side_of(a_cells), pair.side_of(b_cells)}
        if sides == {"attractor", "repeller"}:
            return index
    return None


@dataclass
class SeparationReport:
    ok: bool
    separated: Dict[Tuple[int, int], int] = field(default_factory=dict)
    unseparated: List[Tuple[int, int]] = field(default_factory=list)
    split_nodes: List[Tuple[int, int]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {
            "ok": self.ok,
            "separated_count": len(self.separated),
            "unseparated": [list(p) for p in self.unseparated],
            "split_nodes": [list(p) for p in self.split_nodes],
        }


def verify_separation(
    graph: TransitionGraph,
    partition: MorsePartition,
    family: AttractorFamily,
) -> SeparationReport:
    """Every pair of distinct Morse nodes is split by some pair; no node is split from itself.

    ``split_nodes`` lists (node, coding index) where a pair cuts a node in two
    or leaves it outside A ∪ A*.
    """
    report = SeparationReport(ok=True)
    for index, pair in enumerate(family.coded_pairs, start=1):
        for m, cells in enumerate(partition.morse_nodes):
            if pair.side_of(cells) is None:
                report.split_nodes.append((m, index))
    for i in range(partition.num_morse):
        for j in range(i + 1, partition.num_morse):
            found = separating_pair(family, partition, i, j)
            if found is None:
                report.unseparated.append((i, j))
            else:
                report.separated[(i, j)] = found
    report.ok = not report.unseparated and not report.split_nodes
    if not report.ok:
        logger.warning(
            "Separation failed: %d unseparated node pairs, %d split nodes",
            len(report.unseparated),
            len(report.split_nodes),
        )
    return report
