"""Tests for attractor pairs, families and the structure checks."""

from __future__ import annotations

import numpy as np
import pytest

from chainrec.chaingraph import TransitionGraph, build_graph, invariant_part, morse_partition
from chainrec.conley import (
    DownsetError,
    LatticeCapExceeded,
    attractor_from_downset,
    canonical_family,
    enumerate_downsets,
    full_lattice,
    separating_pair,
    verify_lemma_dual,
    verify_separation,
)
from tests.conftest import (
    NS_NORTH,
    NS_SOUTH,
    PairOracle,
    brute_force_recurrent,
    builtin,
    chain_graph,
    circle_grid,
    random_graphs,
)

NS_S, NS_2, NS_1021, NS_N = 2, 1, 3, 0


def _two_incomparable() -> TransitionGraph:
    # 0 and 3 are separate loops fed by the transient source 1 and 2
    return TransitionGraph.from_adjacency([[0], [0, 2], [3], [3]])


class TestAttractorFromDownset:
    """Tests for attractor_from_downset."""

    def test_empty_downset(self, northsouth) -> None:
        """Test that the empty downset gives A = {} and A* holding every recurrent cell."""
        _, _, graph, partition = northsouth
        pair = attractor_from_downset(graph, partition, [])
        assert pair.attractor == frozenset()
        assert pair.trivial
        recurrent = np.flatnonzero(partition.recurrent_mask)
        assert pair.repeller_mask[recurrent].all()

    def test_sink_node(self, northsouth) -> None:
        """Test the pair generated by the sink alone."""
        _, _, graph, partition = northsouth
        pair = attractor_from_downset(graph, partition, [NS_S])
        assert pair.attractor == set(NS_SOUTH)
        # transient arcs all drain into the sink; only the other Morse nodes avoid it
        assert pair.repeller == set(NS_NORTH) | {2, 1021}
        assert not pair.trivial

    def test_middle_node(self, northsouth) -> None:
        """Test the pair generated by a node above the sink."""
        _, _, graph, partition = northsouth
        pair = attractor_from_downset(graph, partition, [NS_2, NS_S])
        assert pair.attractor == set(range(2, 515))
        assert pair.repeller == set(NS_NORTH) | {1021}

    def test_sides_are_disjoint(self, northsouth) -> None:
        """Test that no cell lies in both A and A* for any downset."""
        _, _, graph, partition = northsouth
        for downset in enumerate_downsets(partition):
            pair = attractor_from_downset(graph, partition, downset)
            assert not (pair.attractor_mask & pair.repeller_mask).any()

    def test_full_downset_is_trivial(self, northsouth) -> None:
        """Test that the downset of every node gives a trivial pair."""
        _, _, graph, partition = northsouth
        pair = attractor_from_downset(graph, partition, range(4))
        assert pair.trivial
        assert pair.repeller == frozenset()

    def test_not_closed(self, northsouth) -> None:
        """Test that a set missing nodes below it is refused."""
        _, _, graph, partition = northsouth
        with pytest.raises(DownsetError, match="not the nodes below"):
            attractor_from_downset(graph, partition, [NS_2])

    def test_unknown_node(self, northsouth) -> None:
        """Test that an out-of-range node id is refused."""
        _, _, graph, partition = northsouth
        with pytest.raises(DownsetError, match="unknown"):
            attractor_from_downset(graph, partition, [7])

    def test_attractor_is_forward_closed(self) -> None:
        """Test that every edge leaving A lands in A."""
        for graph, partition in random_graphs(seed=3, count=10, max_morse=12):
            for m in range(partition.num_morse):
                pair = attractor_from_downset(graph, partition, partition.downset_of(m))
                src, dst = graph.edges()
                assert pair.attractor_mask[dst[pair.attractor_mask[src]]].all()

    def test_no_edge_from_free_cells_into_repeller(self) -> None:
        """Test that cells outside A and A* never step into A*."""
        for graph, partition in random_graphs(seed=4, count=10, max_morse=12):
            for m in range(partition.num_morse):
                pair = attractor_from_downset(graph, partition, partition.downset_of(m))
                free = ~(pair.attractor_mask | pair.repeller_mask)
                src, dst = graph.edges()
                assert not pair.repeller_mask[dst[free[src]]].any()

    def test_larger_downset_grows_attractor_and_shrinks_repeller(self) -> None:
        """Test that D <= D' gives A(D) <= A(D') and A*(D) >= A*(D')."""
        for graph, partition in random_graphs(seed=41, count=15, max_morse=6, max_cells=30):
            downsets = enumerate_downsets(partition)
            pairs = {d: attractor_from_downset(graph, partition, d) for d in downsets}
            for small in downsets:
                for large in downsets:
                    if small <= large:
                        assert pairs[small].attractor <= pairs[large].attractor
                        assert pairs[small].repeller >= pairs[large].repeller

    def test_repeller_is_its_own_invariant_part(self) -> None:
        """Test that taking the invariant part of A* again returns A*."""
        for graph, partition in random_graphs(seed=43, count=15, max_morse=8):
            for downset in enumerate_downsets(partition):
                pair = attractor_from_downset(graph, partition, downset)
                again = invariant_part(graph, pair.repeller_mask)
                assert np.array_equal(again, pair.repeller_mask)

    def test_northsouth_repellers_are_invariant(self, northsouth) -> None:
        """Test repeller idempotence on every pair of the north-south lattice."""
        _, _, graph, partition = northsouth
        for pair in full_lattice(graph, partition).pairs:
            assert np.array_equal(invariant_part(graph, pair.repeller_mask), pair.repeller_mask)

    def test_matches_path_search_pairs(self) -> None:
        """Test every downset's pair against cell sets rebuilt by path search."""
        for graph, partition in random_graphs(seed=47, count=20, max_morse=8, max_cells=30):
            oracle = PairOracle(graph)
            assert set(oracle.all_downsets()) == set(enumerate_downsets(partition))
            for downset in oracle.all_downsets():
                pair = attractor_from_downset(graph, partition, downset)
                assert (pair.attractor, pair.repeller) == oracle.pair(downset)


class TestCanonicalFamily:
    """Tests for the one-pair-per-node family."""

    def test_identity_has_no_pairs(self, identity_small) -> None:
        """Test that a single Morse node yields no coded pairs."""
        _, graph = identity_small
        family = canonical_family(graph, morse_partition(graph))
        assert family.pairs == ()
        assert family.k == 0

    def test_rotation_has_no_pairs(self) -> None:
        """Test that the strongly connected rotation graph yields no coded pairs."""
        graph = build_graph(circle_grid(512), builtin("rotation", alpha=0.618034), 2 / 512)
        assert canonical_family(graph, morse_partition(graph)).k == 0

    def test_northsouth_order(self, northsouth) -> None:
        """Test pair order by attractor size then smallest cell."""
        _, _, graph, partition = northsouth
        family = canonical_family(graph, partition)
        assert [sorted(p.downset) for p in family.pairs] == [[2], [1, 2], [2, 3]]
        assert [p.attractor_size for p in family.pairs] == [6, 513, 513]

    def test_chain(self) -> None:
        """Test the nested attractors of a three-node chain."""
        graph = chain_graph(transient=False)
        family = canonical_family(graph, morse_partition(graph))
        assert [p.attractor for p in family.pairs] == [{2}, {1, 2}]

    def test_summary_rows(self, northsouth) -> None:
        """Test the per-pair summary rows and their coding index."""
        _, _, graph, partition = northsouth
        rows = canonical_family(graph, partition).summary()
        assert [r["index"] for r in rows] == [1, 2, 3]
        assert rows[0]["downset"] == [2]
        assert rows[0]["trivial"] is False


class TestFullLattice:
    """Tests for the full attractor lattice."""

    def test_incomparable_nodes_give_boolean_lattice(self) -> None:
        """Test that two incomparable nodes give four pairs, two of them trivial."""
        graph = _two_incomparable()
        partition = morse_partition(graph)
        assert partition.num_morse == 2
        family = full_lattice(graph, partition)
        assert len(family.pairs) == 4
        assert sum(p.trivial for p in family.pairs) == 2

    def test_chain_lattice(self) -> None:
        """Test that a chain has one downset per prefix plus the empty one."""
        graph = chain_graph(transient=False)
        family = full_lattice(graph, morse_partition(graph))
        assert sorted(sorted(p.downset) for p in family.pairs) == [[], [0, 1, 2], [1, 2], [2]]

    def test_northsouth_lattice(self, northsouth) -> None:
        """Test the lattice size and coded pair count on the north-south graph."""
        _, _, graph, partition = northsouth
        family = full_lattice(graph, partition)
        assert len(family.pairs) == 6
        assert family.k == 4

    def test_cap(self, northsouth) -> None:
        """Test that a lattice larger than the cap raises with its size."""
        _, _, graph, partition = northsouth
        with pytest.raises(LatticeCapExceeded) as exc:
            full_lattice(graph, partition, cap=3)
        assert exc.value.count == 4


class TestLemmaDual:
    """Tests for the recurrent set as the intersection of A and A*."""

    def test_northsouth(self, northsouth) -> None:
        """Test the intersection on the north-south graph."""
        _, _, graph, partition = northsouth
        report = verify_lemma_dual(graph, partition, full_lattice(graph, partition))
        assert report.holds
        assert report.intersection == set(NS_NORTH) | set(NS_SOUTH) | {2, 1021}

    def test_strongly_connected(self) -> None:
        """Test that every cell of a strongly connected graph is in the intersection."""
        graph = build_graph(circle_grid(512), builtin("rotation", alpha=0.618034), 2 / 512)
        partition = morse_partition(graph)
        report = verify_lemma_dual(graph, partition, full_lattice(graph, partition))
        assert report.holds
        assert len(report.intersection) == 512

    def test_random_graphs_full_lattice(self) -> None:
        """Test the full lattice intersection against cycle search on random graphs."""
        for graph, partition in random_graphs(seed=2024, count=20, max_morse=12):
            report = verify_lemma_dual(graph, partition, full_lattice(graph, partition, cap=12))
            assert report.holds, report.to_dict()
            assert report.recurrent == brute_force_recurrent(graph)

    def test_intersection_matches_path_search_lattice(self) -> None:
        """Test the reported intersection against pairs rebuilt over every downset."""
        for graph, partition in random_graphs(seed=77, count=20, max_morse=8, max_cells=30):
            oracle = PairOracle(graph)
            expected = frozenset(range(graph.num_cells))
            for downset in oracle.all_downsets():
                attractor, repeller = oracle.pair(downset)
                expected &= attractor | repeller
            report = verify_lemma_dual(graph, partition, full_lattice(graph, partition))
            assert report.intersection == expected
            assert expected == brute_force_recurrent(graph)

    def test_random_graphs_canonical_easy_direction(self) -> None:
        """Test that recurrent cells lie in A or A* for every canonical pair."""
        for graph, partition in random_graphs(seed=2024, count=20, max_morse=12):
            report = verify_lemma_dual(graph, partition, canonical_family(graph, partition))
            assert report.easy_direction


class TestSeparation:
    """Tests for splitting Morse nodes by pairs."""

    def test_northsouth(self, northsouth) -> None:
        """Test that source and sink are split by the first canonical pair."""
        _, _, graph, partition = northsouth
        family = canonical_family(graph, partition)
        report = verify_separation(graph, partition, family)
        assert report.ok
        assert separating_pair(family, partition, NS_N, NS_S) == 1

    def test_single_node(self, identity_small) -> None:
        """Test that a single node needs no separation."""
        _, graph = identity_small
        partition = morse_partition(graph)
        assert verify_separation(graph, partition, canonical_family(graph, partition)).ok

    def test_chain_pairs(self) -> None:
        """Test the separating pair index of each chain node pair."""
        graph = chain_graph(transient=False)
        partition = morse_partition(graph)
        report = verify_separation(graph, partition, canonical_family(graph, partition))
        assert report.ok
        assert report.separated == {(0, 1): 2, (0, 2): 1, (1, 2): 1}

    def test_random_graphs(self) -> None:
        """Test that the canonical family separates nodes of random graphs."""
        for graph, partition in random_graphs(seed=99, count=20, max_morse=12):
            family = canonical_family(graph, partition)
            assert verify_separation(graph, partition, family).ok

    def test_empty_family_cannot_separate_two_nodes(self) -> None:
        """Test that an empty family leaves two nodes unseparated."""
        from chainrec.conley import AttractorFamily

        graph = _two_incomparable()
        partition = morse_partition(graph)
        report = verify_separation(graph, partition, AttractorFamily((), "canonical"))
        assert not report.ok
        assert report.unseparated == [(0, 1)]
